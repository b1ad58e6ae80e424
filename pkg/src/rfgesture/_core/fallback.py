"""NumPy implementation of the per-edge message/attention kernel.

Shapes: node arrays are (B, T, N, h); ``src`` is (B, T-1, N, k) and holds,
for each target node at time t+1, the EPC indices of its sources at time t.
"""

import math

import numpy as np


def _gather(z, src):
    B, Tm1 = src.shape[:2]
    bi = np.arange(B)[:, None, None, None]
    ti = np.arange(Tm1)[None, :, None, None]
    return z[:, :-1][bi, ti, src]


def _scatter(g, src, n_steps):
    # sum edge rows back onto their source nodes via a one-hot matmul
    B, Tm1, N, k = src.shape
    h = g.shape[-1]
    onehot = (src.reshape(B, Tm1, N * k)[..., None] == np.arange(N)).astype(float)
    out = np.zeros((B, n_steps, N, h))
    out[:, :-1] = np.matmul(onehot.transpose(0, 1, 3, 2), g.reshape(B, Tm1, N * k, h))
    return out


def edge_forward(ps, pt, q, kk, b1, src, scale):
    """Message hidden states, attention weights and aggregated messages.

    Returns
    -------
    a : (B, T-1, N, k, h)   tanh(ps[src] + pt + b1)
    alpha : (B, T-1, N, k)  softmax over k of <q, kk[src]> / sqrt(h)
    c : (B, T-1, N, h)      scale * sum_k alpha * a
    """
    h = ps.shape[-1]
    a = np.tanh(_gather(ps, src) + pt[:, 1:, :, None, :] + b1)
    s = np.einsum("btnh,btnkh->btnk", q[:, 1:], _gather(kk, src)) / math.sqrt(h)
    s -= s.max(axis=-1, keepdims=True)
    e = np.exp(s)
    alpha = e / e.sum(axis=-1, keepdims=True)
    c = np.einsum("btnk,btnkh->btnh", alpha, a) * scale
    return a, alpha, c


def edge_backward(dc, a, alpha, q, kk, src, scale):
    """Gradients of `edge_forward` given ``dc`` = dL/dc.

    Returns ``(dps, dpt, dq, dkk, db1)``; node gradients are (B, T, N, h).
    """
    T, h = q.shape[1], q.shape[-1]
    inv = 1.0 / math.sqrt(h)
    dc = dc * scale
    dalpha = np.einsum("btnkh,btnh->btnk", a, dc)
    ds = alpha * (dalpha - (alpha * dalpha).sum(axis=-1, keepdims=True)) * inv

    dq = np.zeros_like(q)
    dq[:, 1:] = np.einsum("btnk,btnkh->btnh", ds, _gather(kk, src))
    dkk = _scatter(ds[..., None] * q[:, 1:, :, None, :], src, T)

    dpre = alpha[..., None] * dc[:, :, :, None, :] * (1.0 - a * a)
    db1 = dpre.sum(axis=(0, 1, 2, 3))
    dpt = np.zeros_like(q)
    dpt[:, 1:] = dpre.sum(axis=3)
    dps = _scatter(dpre, src, T)
    return dps, dpt, dq, dkk, db1

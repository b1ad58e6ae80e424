# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Fused per-edge message/attention kernel (compiled backend).

Same contract as `rfgesture._core.fallback`; the loops avoid the
(B, T-1, N, k, h) temporaries of the NumPy version.
"""

import numpy as np

from libc.math cimport exp, sqrt, INFINITY


def _c64(x):
    return np.ascontiguousarray(x, dtype=np.float64)


def edge_forward(ps, pt, q, kk, b1, src, double scale):
    ps, pt, q, kk, b1 = _c64(ps), _c64(pt), _c64(q), _c64(kk), _c64(b1)
    src = np.ascontiguousarray(src, dtype=np.intp)
    cdef Py_ssize_t B = src.shape[0], T1 = src.shape[1], N = src.shape[2], K = src.shape[3]
    cdef Py_ssize_t H = ps.shape[3]
    a = np.empty((B, T1, N, K, H))
    alpha = np.empty((B, T1, N, K))
    c = np.zeros((B, T1, N, H))

    cdef const double[:, :, :, ::1] ps_v = ps
    cdef const double[:, :, :, ::1] pt_v = pt
    cdef const double[:, :, :, ::1] q_v = q
    cdef const double[:, :, :, ::1] kk_v = kk
    cdef const double[::1] b1_v = b1
    cdef const Py_ssize_t[:, :, :, ::1] src_v = src
    cdef double[:, :, :, :, ::1] a_v = a
    cdef double[:, :, :, ::1] al_v = alpha
    cdef double[:, :, :, ::1] c_v = c

    cdef double inv = 1.0 / sqrt(<double>H)
    cdef Py_ssize_t b, t, n, j, d, s
    cdef double acc, mx, tot, w, v

    # pre-activations; tanh is applied by NumPy's vectorised ufunc below
    with nogil:
        for b in range(B):
            for t in range(T1):
                for n in range(N):
                    for j in range(K):
                        s = src_v[b, t, n, j]
                        for d in range(H):
                            a_v[b, t, n, j, d] = ps_v[b, t, s, d] + pt_v[b, t + 1, n, d] + b1_v[d]
    np.tanh(a, out=a)

    with nogil:
        for b in range(B):
            for t in range(T1):
                for n in range(N):
                    mx = -INFINITY
                    for j in range(K):
                        s = src_v[b, t, n, j]
                        acc = 0.0
                        for d in range(H):
                            acc = acc + q_v[b, t + 1, n, d] * kk_v[b, t, s, d]
                        acc = acc * inv
                        al_v[b, t, n, j] = acc
                        if acc > mx:
                            mx = acc
                    tot = 0.0
                    for j in range(K):
                        v = exp(al_v[b, t, n, j] - mx)
                        al_v[b, t, n, j] = v
                        tot = tot + v
                    for j in range(K):
                        al_v[b, t, n, j] = al_v[b, t, n, j] / tot
                    for j in range(K):
                        w = al_v[b, t, n, j] * scale
                        for d in range(H):
                            c_v[b, t, n, d] = c_v[b, t, n, d] + w * a_v[b, t, n, j, d]
    return a, alpha, c


def edge_backward(dc, a, alpha, q, kk, src, double scale):
    dc, a, alpha, q, kk = _c64(dc), _c64(a), _c64(alpha), _c64(q), _c64(kk)
    src = np.ascontiguousarray(src, dtype=np.intp)
    cdef Py_ssize_t B = src.shape[0], T1 = src.shape[1], N = src.shape[2], K = src.shape[3]
    cdef Py_ssize_t H = q.shape[3]
    shape = (B, T1 + 1, N, H)
    dps = np.zeros(shape)
    dpt = np.zeros(shape)
    dq = np.zeros(shape)
    dkk = np.zeros(shape)
    db1 = np.zeros(H)
    dal = np.empty(K)

    cdef const double[:, :, :, ::1] dc_v = dc
    cdef const double[:, :, :, :, ::1] a_v = a
    cdef const double[:, :, :, ::1] al_v = alpha
    cdef const double[:, :, :, ::1] q_v = q
    cdef const double[:, :, :, ::1] kk_v = kk
    cdef const Py_ssize_t[:, :, :, ::1] src_v = src
    cdef double[:, :, :, ::1] dps_v = dps
    cdef double[:, :, :, ::1] dpt_v = dpt
    cdef double[:, :, :, ::1] dq_v = dq
    cdef double[:, :, :, ::1] dkk_v = dkk
    cdef double[::1] db1_v = db1
    cdef double[::1] dal_v = dal

    cdef double inv = 1.0 / sqrt(<double>H)
    cdef Py_ssize_t b, t, n, j, d, s
    cdef double acc, dot, ds, aj, av, g, qd

    with nogil:
        for b in range(B):
            for t in range(T1):
                for n in range(N):
                    dot = 0.0
                    for j in range(K):
                        acc = 0.0
                        for d in range(H):
                            acc = acc + a_v[b, t, n, j, d] * dc_v[b, t, n, d]
                        dal_v[j] = acc * scale
                        dot = dot + al_v[b, t, n, j] * dal_v[j]
                    for j in range(K):
                        s = src_v[b, t, n, j]
                        ds = al_v[b, t, n, j] * (dal_v[j] - dot) * inv
                        aj = al_v[b, t, n, j] * scale
                        for d in range(H):
                            qd = q_v[b, t + 1, n, d]
                            dq_v[b, t + 1, n, d] = dq_v[b, t + 1, n, d] + ds * kk_v[b, t, s, d]
                            dkk_v[b, t, s, d] = dkk_v[b, t, s, d] + ds * qd
                            av = a_v[b, t, n, j, d]
                            g = aj * dc_v[b, t, n, d] * (1.0 - av * av)
                            db1_v[d] = db1_v[d] + g
                            dpt_v[b, t + 1, n, d] = dpt_v[b, t + 1, n, d] + g
                            dps_v[b, t, s, d] = dps_v[b, t, s, d] + g
    return dps, dpt, dq, dkk, db1

"""Attention-based temporal graph classifier with hand-written backprop.

One layer, for a node ``i`` at time ``t`` with in-neighbours ``j`` at ``t-1``::

    a_ji   = tanh(W_src x_j + W_dst x_i + b1)          message hidden state
    m_ji   = W2 a_ji + b2                               message
    s_ji   = <W_q x_i, W_k x_j> / sqrt(h)
    alpha  = softmax_j(s_ji)
    out_i  = R x_i + agg_j(alpha_ji * m_ji)             agg = mean or sum

``R`` is a learned projection when the input and hidden widths differ and
the identity otherwise. Nodes at the first timestep have no in-neighbours
and only take the residual path. After the last layer all T*N node vectors
are mean-pooled and fed to a linear classifier.

Because ``W2`` is linear it is applied after aggregation, which keeps the
per-edge work to the tanh and the attention scores.
"""

from __future__ import annotations

import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _core

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = "RFGNN-CHECKPOINT"
CHECKPOINT_VERSION = 1


class TrainingDiverged(FloatingPointError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    hidden_dim: int = 64
    layer_count: int = 2
    aggregation: str = "mean"
    n_classes: int = 21
    in_dim: int = 2

    def __post_init__(self):
        if self.aggregation not in ("mean", "sum"):
            raise ValueError("aggregation must be 'mean' or 'sum'")
        if self.layer_count < 1 or self.hidden_dim < 1:
            raise ValueError("layer_count and hidden_dim must be positive")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 1e-3
    momentum: float = 0.9
    weight_decay: float = 0.0
    seed: int = 42
    optimizer: str = "sgd"
    beta2: float = 0.999
    lr_schedule: str = "constant"

    def __post_init__(self):
        if self.lr_schedule not in ("constant", "cosine"):
            raise ValueError("lr_schedule must be 'constant' or 'cosine'")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError("optimizer must be 'sgd' or 'adam'")
        if not 0 <= self.beta2 < 1:
            raise ValueError("beta2 must lie in [0, 1)")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if self.learning_rate < 0 or self.weight_decay < 0 or not 0 <= self.momentum < 1:
            raise ValueError("learning_rate, weight_decay >= 0 and 0 <= momentum < 1 required")


@dataclass
class ModelParams:
    config: ModelConfig
    weights: dict = field(default_factory=dict)

    @classmethod
    def init(cls, config: ModelConfig = ModelConfig(), seed: int = 0) -> "ModelParams":
        """Uniform fan-in initialisation; biases start at zero."""
        rng = np.random.default_rng(seed)
        h = config.hidden_dim
        w = {}

        def uni(fan_in, shape):
            bound = 1.0 / math.sqrt(fan_in)
            return rng.uniform(-bound, bound, size=shape)

        d = config.in_dim
        for layer in range(config.layer_count):
            p = f"layer{layer}."
            w[p + "w_src"] = uni(2 * d, (d, h))
            w[p + "w_dst"] = uni(2 * d, (d, h))
            w[p + "b1"] = np.zeros(h)
            w[p + "w2"] = uni(h, (h, h))
            w[p + "b2"] = np.zeros(h)
            w[p + "w_q"] = uni(d, (d, h))
            w[p + "w_k"] = uni(d, (d, h))
            if d != h:
                w[p + "w_res"] = uni(d, (d, h))
            d = h
        w["cls_w"] = uni(h, (h, config.n_classes))
        w["cls_b"] = np.zeros(config.n_classes)
        return cls(config, w)

    def names(self) -> list[str]:
        return list(self.weights)

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: v.copy() for k, v in self.weights.items()})

    def __getitem__(self, name):
        return self.weights[name]

    def n_params(self) -> int:
        return sum(v.size for v in self.weights.values())


# ---------------------------------------------------------------- forward


def layer_forward(
    weights: dict,
    prefix: str,
    x: np.ndarray,
    src: np.ndarray,
    aggregation: str = "mean",
    backend: str | None = None,
):
    """One message-passing layer.

    Parameters
    ----------
    x : ndarray, shape (B, T, N, d)
    src : ndarray of int, shape (B, T-1, N, k)

    Returns
    -------
    out : ndarray, shape (B, T, N, h)
    cache : dict
        Intermediates for `layer_backward`, including the attention weights
        under ``"alpha"``.
    """
    w_src, w_dst = weights[prefix + "w_src"], weights[prefix + "w_dst"]
    if x.shape[-1] != w_src.shape[0]:
        raise ValueError(f"{prefix}: input width {x.shape[-1]} != {w_src.shape[0]}")
    if src.shape[:3] != (x.shape[0], x.shape[1] - 1, x.shape[2]):
        raise ValueError(f"neighbour index shape {src.shape} does not match features {x.shape}")
    scale = 1.0 / src.shape[-1] if aggregation == "mean" else 1.0
    fwd, _ = _core.get_backend(backend)

    q = x @ weights[prefix + "w_q"]
    kk = x @ weights[prefix + "w_k"]
    a, alpha, c = fwd(x @ w_src, x @ w_dst, q, kk, weights[prefix + "b1"], src, scale)
    msg = c @ weights[prefix + "w2"] + weights[prefix + "b2"] * scale

    w_res = weights.get(prefix + "w_res")
    out = x @ w_res if w_res is not None else x.copy()
    out[:, 1:] += msg
    cache = dict(x=x, src=src, a=a, q=q, kk=kk, alpha=alpha, c=c, scale=scale, backend=backend)
    return out, cache


def layer_backward(weights: dict, prefix: str, dout: np.ndarray, cache: dict):
    x, src, a, q, kk, alpha, c, scale = (
        cache[n] for n in ("x", "src", "a", "q", "kk", "alpha", "c", "scale")
    )
    _, bwd = _core.get_backend(cache["backend"])
    h = weights[prefix + "w2"].shape[0]
    grads = {}

    w_res = weights.get(prefix + "w_res")
    if w_res is not None:
        grads[prefix + "w_res"] = x.reshape(-1, x.shape[-1]).T @ dout.reshape(-1, h)
        dx = dout @ w_res.T
    else:
        dx = dout.copy()

    dmsg = dout[:, 1:]
    grads[prefix + "w2"] = c.reshape(-1, h).T @ dmsg.reshape(-1, h)
    grads[prefix + "b2"] = dmsg.sum(axis=(0, 1, 2)) * scale
    dc = dmsg @ weights[prefix + "w2"].T
    dps, dpt, dq, dkk, grads[prefix + "b1"] = bwd(dc, a, alpha, q, kk, src, scale)

    xf = x.reshape(-1, x.shape[-1])
    for name, dz in (("w_src", dps), ("w_dst", dpt), ("w_q", dq), ("w_k", dkk)):
        grads[prefix + name] = xf.T @ dz.reshape(-1, h)
        dx += dz @ weights[prefix + name].T
    return dx, grads


def _logits(params: ModelParams, x: np.ndarray, src: np.ndarray, backend=None):
    cfg = params.config
    caches = []
    hcur = x
    for layer in range(cfg.layer_count):
        hcur, cache = layer_forward(params.weights, f"layer{layer}.", hcur, src, cfg.aggregation, backend)
        caches.append(cache)
    pooled = hcur.mean(axis=(1, 2))
    logits = pooled @ params["cls_w"] + params["cls_b"]
    return logits, (caches, pooled, hcur.shape)


def forward(params: ModelParams, tensors: np.ndarray, sources: np.ndarray, backend=None) -> np.ndarray:
    """Class logits for a batch, shape (B, n_classes).

    ``tensors`` is (B, T, N, D) and ``sources`` the matching (B, T-1, N, k)
    neighbour indices; single samples without the batch axis are accepted.
    """
    x = np.asarray(tensors, dtype=float)
    src = np.asarray(sources)
    single = x.ndim == 3
    if single:
        x, src = x[None], src[None]
    logits, _ = _logits(params, x, src, backend)
    return logits[0] if single else logits


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def loss_and_grads(params: ModelParams, x: np.ndarray, src: np.ndarray, y: np.ndarray, backend=None):
    """Mean cross-entropy over the batch and its gradient.

    ``y`` holds 0-based class indices.
    """
    logits, (caches, pooled, hshape) = _logits(params, x, src, backend)
    B = len(y)
    p = softmax(logits)
    loss = -np.mean(np.log(p[np.arange(B), y] + 1e-300))
    dlogits = p
    dlogits[np.arange(B), y] -= 1.0
    dlogits /= B
    grads = {"cls_w": pooled.T @ dlogits, "cls_b": dlogits.sum(axis=0)}
    dpooled = dlogits @ params["cls_w"].T
    _, T, N, h = hshape
    dh = np.broadcast_to(dpooled[:, None, None, :] / (T * N), hshape).copy()
    for layer in reversed(range(params.config.layer_count)):
        dh, g = layer_backward(params.weights, f"layer{layer}.", dh, caches[layer])
        grads.update(g)
    return float(loss), grads, logits


def predict(params: ModelParams, tensors: np.ndarray, sources: np.ndarray, batch_size: int = 256, backend=None):
    """Predicted 1-based classes and class probabilities.

    Ties go to the smaller class id.
    """
    x = np.asarray(tensors, dtype=float)
    src = np.asarray(sources)
    single = x.ndim == 3
    if single:
        x, src = x[None], src[None]
    probs = np.concatenate(
        [softmax(forward(params, x[i : i + batch_size], src[i : i + batch_size], backend)) for i in range(0, len(x), batch_size)]
    )
    classes = probs.argmax(axis=1) + 1
    if single:
        return int(classes[0]), probs[0]
    return classes, probs


# ---------------------------------------------------------------- training


@dataclass
class TrainResult:
    params: ModelParams
    trace: list


def train(
    tensors: np.ndarray,
    sources: np.ndarray,
    labels: np.ndarray,
    model: ModelConfig = ModelConfig(),
    cfg: TrainConfig = TrainConfig(),
    init: ModelParams | None = None,
    backend: str | None = None,
) -> TrainResult:
    """Mini-batch gradient descent on the cross-entropy loss.

    ``cfg.optimizer`` selects SGD with momentum or Adam (``momentum`` then
    acts as the first-moment decay).

    ``labels`` are 1-based class ids. Deterministic for a given seed. Raises
    `TrainingDiverged` on a non-finite loss.
    """
    x = np.asarray(tensors, dtype=float)
    src = np.asarray(sources)
    y = np.asarray(labels, dtype=int) - 1
    if len(x) == 0:
        raise ValueError("empty training set")
    if y.min() < 0 or y.max() >= model.n_classes:
        raise ValueError(f"labels must lie in 1..{model.n_classes}")

    init_seed, shuffle_seed = np.random.SeedSequence(cfg.seed).spawn(2)
    params = init.copy() if init is not None else ModelParams.init(model, seed=init_seed)
    rng = np.random.default_rng(shuffle_seed)
    velocity = {k: np.zeros_like(v) for k, v in params.weights.items()}
    second = {k: np.zeros_like(v) for k, v in params.weights.items()}
    step = 0
    trace = []
    for epoch in range(1, cfg.epochs + 1):
        lr = cfg.learning_rate
        if cfg.lr_schedule == "cosine":
            lr = 0.5 * cfg.learning_rate * (1 + math.cos(math.pi * (epoch - 1) / cfg.epochs))
        order = rng.permutation(len(x))
        total, correct = 0.0, 0
        for bno, start in enumerate(range(0, len(x), cfg.batch_size), start=1):
            idx = order[start : start + cfg.batch_size]
            loss, grads, logits = loss_and_grads(params, x[idx], src[idx], y[idx], backend)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss {loss} at epoch {epoch}, batch {bno}")
            total += loss * len(idx)
            correct += int((logits.argmax(axis=1) == y[idx]).sum())
            step += 1
            for name, w in params.weights.items():
                g = grads[name]
                if cfg.weight_decay:
                    g = g + cfg.weight_decay * w
                v = velocity[name]
                if cfg.optimizer == "sgd":
                    v *= cfg.momentum
                    v -= lr * g
                    w += v
                else:
                    # Adam with the momentum field as beta1
                    v *= cfg.momentum
                    v += (1 - cfg.momentum) * g
                    s2 = second[name]
                    s2 *= cfg.beta2
                    s2 += (1 - cfg.beta2) * g * g
                    mhat = v / (1 - cfg.momentum**step)
                    vhat = s2 / (1 - cfg.beta2**step)
                    w -= lr * mhat / (np.sqrt(vhat) + 1e-8)
        trace.append({"epoch": epoch, "loss": total / len(x), "accuracy": correct / len(x)})
        logger.info("epoch %d loss %.4f acc %.4f", epoch, trace[-1]["loss"], trace[-1]["accuracy"])
    return TrainResult(params, trace)


def write_trace(path, trace) -> None:
    with open(path, "w") as fh:
        fh.write("epoch,loss,accuracy\n")
        for row in trace:
            fh.write(f"{row['epoch']},{float(row['loss'])!r},{float(row['accuracy'])!r}\n")


# ---------------------------------------------------------------- checkpoints
#
# Layout: one ASCII line "RFGNN-CHECKPOINT <version>", one JSON line with the
# model config and the ordered shape table, then every tensor as row-major
# little-endian float64, in table order.


def checkpoint_bytes(params: ModelParams) -> bytes:
    table = [[name, list(arr.shape)] for name, arr in params.weights.items()]
    header = json.dumps({"config": asdict(params.config), "tensors": table}, sort_keys=True)
    buf = io.BytesIO()
    buf.write(f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\n".encode())
    buf.write(header.encode() + b"\n")
    for arr in params.weights.values():
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return buf.getvalue()


def save_checkpoint(path, params: ModelParams) -> None:
    with open(path, "wb") as fh:
        fh.write(checkpoint_bytes(params))


def load_checkpoint(path) -> ModelParams:
    with open(path, "rb") as fh:
        magic = fh.readline().decode().split()
        if len(magic) != 2 or magic[0] != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a model checkpoint")
        if int(magic[1]) != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {magic[1]}")
        meta = json.loads(fh.readline())
        weights = {}
        for name, shape in meta["tensors"]:
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(8 * count), dtype="<f8")
            if data.size != count:
                raise ValueError(f"{path}: truncated payload at {name}")
            weights[name] = data.reshape(shape).astype(float)
    return ModelParams(ModelConfig(**meta["config"]), weights)

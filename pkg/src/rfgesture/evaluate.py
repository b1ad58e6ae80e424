"""Metrics, splits and the experiment protocols built on them."""

from __future__ import annotations

import csv
import itertools
import logging
import warnings
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import gnn
from .impute import DEFAULT_PROXIMITY
from .ingest import N_CLASSES, N_TAGS, GestureSample
from .pipeline import PipelineConfig, ProcessedSet, graph_inputs, impute_split, process_dataset

logger = logging.getLogger(__name__)

WITHIN_SUBJECT = "within_subject"
LOPO = "leave_one_person_out"


# ---------------------------------------------------------------- metrics


@dataclass
class Metrics:
    """Classification scores; ``confusion[i, j]`` counts true class i+1 predicted as j+1."""

    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    confusion: np.ndarray
    precision: np.ndarray = field(repr=False, default=None)
    recall: np.ndarray = field(repr=False, default=None)
    f1: np.ndarray = field(repr=False, default=None)

    def summary(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
        }

    def normalized_confusion(self) -> np.ndarray:
        rows = self.confusion.sum(axis=1, keepdims=True)
        return np.divide(self.confusion, rows, out=np.zeros(self.confusion.shape), where=rows > 0)


def _safe_div(num, den):
    num = np.asarray(num, dtype=float)
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def compute_metrics(preds, labels, n_classes: int = N_CLASSES) -> Metrics:
    """Accuracy and macro precision/recall/F1 of 1-based class predictions.

    The macro average runs over the classes that occur in ``labels`` or
    ``preds``. A predicted class missing from ``labels`` scores 0 and
    triggers a warning.
    """
    preds = np.asarray(preds, dtype=int)
    labels = np.asarray(labels, dtype=int)
    if preds.shape != labels.shape:
        raise ValueError(f"length mismatch: {preds.shape} vs {labels.shape}")
    if preds.size == 0:
        raise ValueError("no predictions")
    for name, arr in (("preds", preds), ("labels", labels)):
        if arr.min() < 1 or arr.max() > n_classes:
            raise ValueError(f"{name} must lie in 1..{n_classes}")
    confusion = np.zeros((n_classes, n_classes), dtype=int)
    np.add.at(confusion, (labels - 1, preds - 1), 1)
    tp = np.diag(confusion)
    support = confusion.sum(axis=1)
    predicted = confusion.sum(axis=0)
    precision = _safe_div(tp, predicted)
    recall = _safe_div(tp, support)
    f1 = _safe_div(2 * precision * recall, precision + recall)
    present = (support > 0) | (predicted > 0)
    absent = np.flatnonzero(present & (support == 0)) + 1
    if absent.size:
        warnings.warn(f"classes {absent.tolist()} predicted but absent from labels", stacklevel=2)
    return Metrics(
        accuracy=float(tp.sum() / confusion.sum()),
        macro_precision=float(precision[present].mean()),
        macro_recall=float(recall[present].mean()),
        macro_f1=float(f1[present].mean()),
        confusion=confusion,
        precision=precision,
        recall=recall,
        f1=f1,
    )


# ---------------------------------------------------------------- splits


@dataclass(frozen=True)
class SplitSpec:
    kind: str = WITHIN_SUBJECT
    test_fraction: float = 0.2
    held_out_subject: int | None = None
    seed: int = 42

    def __post_init__(self):
        if self.kind not in (WITHIN_SUBJECT, LOPO):
            raise ValueError(f"unknown split kind {self.kind!r}")
        if self.kind == WITHIN_SUBJECT and not 0 < self.test_fraction < 1:
            raise ValueError("test_fraction must lie in (0, 1)")
        if self.kind == LOPO and self.held_out_subject is None:
            raise ValueError("leave-one-person-out needs held_out_subject")


def _meta(dataset):
    if isinstance(dataset, ProcessedSet):
        return np.asarray(dataset.labels), np.asarray(dataset.subjects)
    return np.array([s.label for s in dataset]), np.array([s.subject for s in dataset])


def split(dataset, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    """Sorted train and test index arrays into ``dataset``."""
    labels, subjects = _meta(dataset)
    if spec.kind == LOPO:
        test = subjects == spec.held_out_subject
        if not test.any():
            raise ValueError(f"subject {spec.held_out_subject} not in dataset")
        return np.flatnonzero(~test), np.flatnonzero(test)
    rng = np.random.default_rng(spec.seed)
    is_test = np.zeros(len(labels), dtype=bool)
    for subj, lab in sorted(set(zip(subjects.tolist(), labels.tolist()))):
        group = np.flatnonzero((subjects == subj) & (labels == lab))
        n_test = int(round(spec.test_fraction * len(group)))
        is_test[rng.permutation(group)[:n_test]] = True
    if not is_test.any():
        raise ValueError(
            f"test_fraction {spec.test_fraction} leaves no test samples; every (subject, class) group is too small"
        )
    return np.flatnonzero(~is_test), np.flatnonzero(is_test)


def lopo_specs(dataset, seed: int = 42) -> list[SplitSpec]:
    _, subjects = _meta(dataset)
    return [SplitSpec(LOPO, held_out_subject=int(s), seed=seed) for s in np.unique(subjects)]


# ---------------------------------------------------------------- protocols


@dataclass
class RunResult:
    metrics: Metrics
    params: gnn.ModelParams
    trace: list
    test_ids: np.ndarray
    preds: np.ndarray
    labels: np.ndarray
    audit: list


def run_protocol(
    data: ProcessedSet,
    spec: SplitSpec = SplitSpec(),
    pipe: PipelineConfig = PipelineConfig(),
    model: gnn.ModelConfig = gnn.ModelConfig(),
    train_cfg: gnn.TrainConfig = gnn.TrainConfig(),
    backend: str | None = None,
) -> RunResult:
    """Split, impute, train and score one configuration."""
    tr_idx, te_idx = split(data, spec)
    train, test = data.subset(tr_idx), data.subset(te_idx)
    f_tr, f_te, audit = impute_split(train, test, pipe)
    x_tr, s_tr = graph_inputs(f_tr, pipe.k)
    x_te, s_te = graph_inputs(f_te, pipe.k)
    result = gnn.train(x_tr, s_tr, train.labels, model, train_cfg, backend=backend)
    preds, _ = gnn.predict(result.params, x_te, s_te, backend=backend)
    metrics = compute_metrics(preds, test.labels, model.n_classes)
    return RunResult(metrics, result.params, result.trace, test.ids, preds, test.labels, audit)


def run_lopo(data: ProcessedSet, pipe=PipelineConfig(), model=gnn.ModelConfig(), train_cfg=gnn.TrainConfig(), backend=None):
    """Per-fold results and metrics over the pooled out-of-fold predictions."""
    folds = [run_protocol(data, spec, pipe, model, train_cfg, backend) for spec in lopo_specs(data, train_cfg.seed)]
    preds = np.concatenate([f.preds for f in folds])
    labels = np.concatenate([f.labels for f in folds])
    return folds, compute_metrics(preds, labels, model.n_classes)


def ablate_tags(
    samples: Sequence[GestureSample],
    removed: Iterable[int],
    spec: SplitSpec = SplitSpec(),
    pipe: PipelineConfig = PipelineConfig(),
    model: gnn.ModelConfig = gnn.ModelConfig(),
    train_cfg: gnn.TrainConfig = gnn.TrainConfig(),
    backend: str | None = None,
) -> Metrics:
    """Metrics with the readings of ``removed`` EPCs discarded before processing."""
    data = process_dataset(samples, pipe, removed)
    return run_protocol(data, spec, pipe, model, train_cfg, backend).metrics


def ablation_study(samples, removal_sets: Sequence[Iterable[int]], **kw) -> list[dict]:
    """One row per removal set, starting with the no-removal baseline."""
    sets = [()] + [tuple(sorted(r)) for r in removal_sets if tuple(sorted(r))]
    rows = []
    for r in sets:
        m = ablate_tags(samples, r, **kw)
        rows.append({"removed": " ".join(map(str, r)) or "none", **m.summary()})
    return rows


def sweep(
    samples: Sequence[GestureSample],
    grid: Mapping[str, Sequence],
    spec: SplitSpec = SplitSpec(),
    pipe: PipelineConfig = PipelineConfig(),
    model: gnn.ModelConfig = gnn.ModelConfig(),
    train_cfg: gnn.TrainConfig = gnn.TrainConfig(),
    backend: str | None = None,
) -> list[dict]:
    """Rerun the pipeline for every combination of ``nu``, ``l_rs`` and ``k``.

    Missing grid keys keep the value from ``pipe``. Rows come out in
    ``l_rs``-major order.
    """
    unknown = set(grid) - {"nu", "l_rs", "k"}
    if unknown:
        raise ValueError(f"unknown sweep keys {sorted(unknown)}")
    axes = {key: list(grid.get(key, [getattr(pipe, key)])) for key in ("l_rs", "nu", "k")}
    if any(not v for v in axes.values()):
        raise ValueError("sweep grid axes must be nonempty")
    rows = []
    for l_rs in axes["l_rs"]:
        data = process_dataset(samples, replace(pipe, l_rs=l_rs))
        for nu, k in itertools.product(axes["nu"], axes["k"]):
            p = replace(pipe, l_rs=l_rs, nu=nu, k=k)
            m = run_protocol(data, spec, p, model, train_cfg, backend).metrics
            rows.append({"nu": nu, "l_rs": l_rs, "k": k, **m.summary()})
    return rows


# ---------------------------------------------------------------- misdetection


def availability(samples: Sequence[GestureSample], n_tags: int = N_TAGS) -> np.ndarray:
    """(M, N) bool: tag has at least two distinct observation times.

    Matches the null rule of the padding check without running the whole
    conditioning chain.
    """
    out = np.zeros((len(samples), n_tags), dtype=bool)
    for i, s in enumerate(samples):
        for n in range(1, n_tags + 1):
            out[i, n - 1] = np.unique(s.timestamps[s.epcs == n]).size >= 2
    return out


def misdetection_stats(dataset, pairs=DEFAULT_PROXIMITY) -> dict:
    """Per-EPC and per-pair null rates.

    ``dataset`` is a `ProcessedSet`, an (M, N) availability matrix or a
    sequence of `GestureSample`.
    """
    if isinstance(dataset, ProcessedSet):
        avail = dataset.available
    elif isinstance(dataset, np.ndarray):
        avail = dataset.astype(bool)
    else:
        avail = availability(dataset)
    null = ~avail
    m = len(null)
    return {
        "n_samples": m,
        "epc": {n + 1: float(null[:, n].mean()) if m else 0.0 for n in range(null.shape[1])},
        "pair": {
            (a, b): float((null[:, a - 1] & null[:, b - 1]).mean()) if m else 0.0 for a, b in pairs
        },
    }


# ---------------------------------------------------------------- tables


def write_table(path, rows: Sequence[Mapping], delimiter: str = ",") -> None:
    if not rows:
        raise ValueError("no rows to write")
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), delimiter=delimiter)
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(float(v)) if isinstance(v, float) else v for k, v in r.items()})


def write_confusion(path_counts, path_normalized, metrics: Metrics, delimiter: str = ",") -> None:
    n = metrics.confusion.shape[0]
    header = ["true\\pred"] + [str(c) for c in range(1, n + 1)]
    for path, mat, fmt in (
        (path_counts, metrics.confusion, str),
        (path_normalized, metrics.normalized_confusion(), lambda v: f"{v:.6f}"),
    ):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, delimiter=delimiter)
            w.writerow(header)
            for i, row in enumerate(mat, start=1):
                w.writerow([i] + [fmt(v) for v in row])

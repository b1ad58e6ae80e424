"""Gesture samples to graph-ready tensors.

`process_dataset` runs conditioning and gap filling per sample; imputation
needs the split (train donors only), so it happens in `impute_split`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .graph import knn_sources
from .impute import GesturePool, ImputeConfig, impute_nulls
from .ingest import N_TAGS, NULL, GestureSample
from .interp import DEFAULT_EPSILON, DEFAULT_L_RS, fill_dataframe
from .preprocess import SmoothingConfig, preprocess_dataframes

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    """Everything between raw readings and the classifier input.

    ``interpolate=False`` together with ``impute=False`` is the zero-fill
    ablation: gaps and missing tags stay at zero.
    """

    smoothing: SmoothingConfig = SmoothingConfig()
    l_rs: int = DEFAULT_L_RS
    epsilon: float = DEFAULT_EPSILON
    interpolate: bool = True
    clip_rss_edges: bool = True
    impute: bool = True
    nu: int = 30
    max_missing: int | None = None
    on_exhausted: str = "zero"
    k: int = 3
    n_tags: int = N_TAGS

    def __post_init__(self):
        if self.l_rs < 2:
            raise ValueError("l_rs must be >= 2")
        if not 1 <= self.k <= self.n_tags:
            raise ValueError(f"k must be in 1..{self.n_tags}")
        if self.on_exhausted not in ("raise", "zero"):
            raise ValueError("on_exhausted must be 'raise' or 'zero'")

    @property
    def impute_config(self) -> ImputeConfig:
        return ImputeConfig(nu=self.nu, max_missing=self.max_missing)


@dataclass
class ProcessedSet:
    """Interpolated (not yet imputed) features of a dataset.

    features : (M, N, l_rs, 2) with channels (rss, phase); null tags are zeros
    available : (M, N) bool, False where the tag's dataframe is null
    """

    features: np.ndarray
    available: np.ndarray
    ids: np.ndarray
    labels: np.ndarray
    subjects: np.ndarray

    def __len__(self) -> int:
        return len(self.ids)

    def subset(self, idx) -> "ProcessedSet":
        idx = np.asarray(idx)
        return ProcessedSet(
            self.features[idx], self.available[idx], self.ids[idx], self.labels[idx], self.subjects[idx]
        )

    def save(self, path) -> None:
        np.savez(
            path,
            features=self.features,
            available=self.available,
            ids=self.ids,
            labels=self.labels,
            subjects=self.subjects,
        )

    @classmethod
    def load(cls, path) -> "ProcessedSet":
        with np.load(path) as z:
            return cls(z["features"], z["available"], z["ids"], z["labels"], z["subjects"])


def remove_epcs(sample: GestureSample, removed: Iterable[int]) -> GestureSample:
    """Copy of ``sample`` without the readings of the listed EPCs."""
    removed = sorted(set(removed))
    if not removed:
        return sample
    keep = ~np.isin(sample.epcs, removed)
    return GestureSample(
        sample_id=sample.sample_id,
        label=sample.label,
        subject=sample.subject,
        timestamps=sample.timestamps[keep],
        epcs=sample.epcs[keep],
        rss=sample.rss[keep],
        phase=sample.phase[keep],
        environment=sample.environment,
        distance_m=sample.distance_m,
    )


def process_sample(sample: GestureSample, cfg: PipelineConfig = PipelineConfig()):
    """Features (N, l_rs, 2) and availability (N,) of one gesture."""
    dfs = preprocess_dataframes(sample, cfg.smoothing, cfg.n_tags)
    filled = [fill_dataframe(df, cfg.l_rs, cfg.epsilon, cfg.interpolate, cfg.clip_rss_edges) for df in dfs]
    features = np.stack([np.stack([df.rss, df.phase], axis=-1) for df in filled])
    available = np.array([df.status != NULL for df in filled])
    return features, available


def process_dataset(
    samples: Sequence[GestureSample],
    cfg: PipelineConfig = PipelineConfig(),
    removed: Iterable[int] = (),
) -> ProcessedSet:
    removed = set(removed)
    if removed and not removed < set(range(1, cfg.n_tags + 1)):
        raise ValueError(f"removed EPCs must be a proper subset of 1..{cfg.n_tags}")
    feats, avail = [], []
    for s in samples:
        f, a = process_sample(remove_epcs(s, removed), cfg)
        feats.append(f)
        avail.append(a)
    return ProcessedSet(
        features=np.stack(feats),
        available=np.stack(avail),
        ids=np.array([s.sample_id for s in samples]),
        labels=np.array([s.label for s in samples]),
        subjects=np.array([s.subject for s in samples]),
    )


def _pool(ps: ProcessedSet) -> GesturePool:
    return GesturePool(ps.features, ps.available, ps.ids, ps.labels)


def impute_set(ps: ProcessedSet, mode: str, cfg: PipelineConfig, donors: ProcessedSet | None = None):
    """Impute every gesture of ``ps``; returns ``(features, audit_records)``.

    In train mode each gesture draws from the same-class gestures of
    ``donors`` (default ``ps`` itself), excluding itself.
    """
    out = ps.features.copy()
    records = []
    if not cfg.impute:
        return out, records
    donors = ps if donors is None else donors
    pool = _pool(donors)
    by_class = {}
    icfg = cfg.impute_config
    for i in np.flatnonzero(~ps.available.all(axis=1)):
        label = int(ps.labels[i])
        if mode == "train" and label not in by_class:
            by_class[label] = pool.same_class(label)
        out[i], recs = impute_nulls(
            ps.features[i],
            ps.available[i],
            by_class.get(label),
            icfg,
            mode=mode,
            sample_id=int(ps.ids[i]),
            on_exhausted=cfg.on_exhausted,
        )
        records.extend(recs)
    return out, records


def impute_split(train: ProcessedSet, test: ProcessedSet, cfg: PipelineConfig = PipelineConfig()):
    """Imputed train and test features plus the combined audit log."""
    tr, rec_tr = impute_set(train, "train", cfg)
    te, rec_te = impute_set(test, "test", cfg)
    return tr, te, rec_tr + rec_te


def graph_inputs(features: np.ndarray, k: int = 3):
    """(M, N, L, 2) features to classifier tensors (M, L, N, 2) and K-NN sources."""
    tensors = np.ascontiguousarray(np.asarray(features, dtype=float).transpose(0, 2, 1, 3))
    return tensors, knn_sources(tensors, k)

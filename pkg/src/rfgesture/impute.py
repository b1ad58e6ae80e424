"""Null-dataframe imputation.

A gesture whose EPC ``mu`` is entirely missing is repaired, in order of
preference, by

* ``med``: the mean of that EPC's dataframe over the nearest same-class
  training gestures (nearest by mean Euclidean distance on the shared EPCs),
* ``proximity``: a copy of the dataframe of the tag sewn next to ``mu``,
* ``class_mean``: the mean over every same-class training gesture that
  has ``mu`` (training only).

When both tags of a proximity pair are missing, the one with nearest-neighbour
data is filled first and then lends itself to its partner. At test time the
class is unknown, so only the proximity copy is available.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_PROXIMITY = ((1, 2), (3, 4), (5, 6), (7, 8))

MED = "med"
PROXIMITY = "proximity"
CLASS_MEAN = "class_mean"
ZERO = "zero"


class ImputationError(RuntimeError):
    code = "imputation-error"


class ImputationExhausted(ImputationError):
    code = "imputation-exhausted"


class TooManyMissing(ImputationError):
    code = "too-many-missing"


@dataclass(frozen=True)
class ImputeConfig:
    nu: int = 30
    proximity: tuple = DEFAULT_PROXIMITY
    max_missing: int | None = 4

    def __post_init__(self):
        if self.nu < 1:
            raise ValueError("nu must be >= 1")
        seen = sorted(e for pair in self.proximity for e in pair)
        if len(seen) != len(set(seen)):
            raise ValueError("every EPC must appear in exactly one proximity pair")
        object.__setattr__(self, "proximity", tuple(tuple(int(e) for e in p) for p in self.proximity))

    def partner(self, epc: int) -> int | None:
        for a, b in self.proximity:
            if epc == a:
                return b
            if epc == b:
                return a
        return None


@dataclass
class GesturePool:
    """Stacked training gestures used as imputation donors.

    ``features`` has shape (M, N, l_rs, 2) holding (rss, phase) per EPC,
    ``available`` (M, N) flags non-null dataframes, ``ids`` are gesture
    indices (used for self-exclusion and tie breaking).
    """

    features: np.ndarray
    available: np.ndarray
    ids: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.available = np.asarray(self.available, dtype=bool)
        self.ids = np.asarray(self.ids, dtype=int)
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=int)

    def __len__(self) -> int:
        return len(self.ids)

    def subset(self, keep) -> "GesturePool":
        keep = np.asarray(keep)
        return GesturePool(
            self.features[keep],
            self.available[keep],
            self.ids[keep],
            None if self.labels is None else self.labels[keep],
        )

    def same_class(self, label: int) -> "GesturePool":
        if self.labels is None:
            raise ValueError("pool has no labels")
        return self.subset(self.labels == label)


@dataclass
class NeighborTable:
    kappa: np.ndarray
    ids: np.ndarray

    def __len__(self) -> int:
        return len(self.ids)

    def nearest(self, nu: int) -> np.ndarray:
        """Ids of the ``nu`` smallest distances, ties to the smaller id."""
        order = np.lexsort((self.ids, self.kappa))
        return self.ids[order[:nu]]


@dataclass(frozen=True)
class AuditRecord:
    sample_id: int
    epc: int
    branch: str
    case: str
    donors: tuple = field(default=())


def med(ref: np.ndarray, other: np.ndarray) -> float:
    """Mean over rows of the Euclidean distance between two (rows, 2) stacks."""
    ref = np.asarray(ref, dtype=float).reshape(-1, 2)
    other = np.asarray(other, dtype=float).reshape(-1, 2)
    if ref.shape != other.shape:
        raise ValueError(f"stack shapes differ: {ref.shape} vs {other.shape}")
    if len(ref) == 0:
        return 0.0
    return float(np.sqrt(((ref - other) ** 2).sum(axis=1)).mean())


def build_neighbor_table(
    features: np.ndarray,
    available: np.ndarray,
    pool: GesturePool,
    exclude_id: int | None = None,
) -> NeighborTable:
    """Distances from one gesture to every admissible pool gesture.

    A pool gesture is admissible when it has every EPC the reference has.
    """
    delta = np.flatnonzero(available)
    keep = np.all(pool.available[:, delta], axis=1)
    if exclude_id is not None:
        keep &= pool.ids != exclude_id
    if not keep.any():
        return NeighborTable(np.zeros(0), np.zeros(0, dtype=int))
    if len(delta) == 0:
        kappa = np.zeros(int(keep.sum()))
    else:
        ref = features[delta]
        diff = pool.features[keep][:, delta] - ref[None]
        kappa = np.sqrt((diff**2).sum(axis=-1)).mean(axis=(1, 2))
    return NeighborTable(kappa, pool.ids[keep])


def _mean_of(pool: GesturePool, ids: Sequence[int], epc_idx: int) -> np.ndarray:
    pos = {g: i for i, g in enumerate(pool.ids)}
    acc = 0.0
    for g in ids:
        acc = acc + pool.features[pos[g], epc_idx]
    return acc / len(ids)


def impute_nulls(
    features: np.ndarray,
    available: np.ndarray,
    pool: GesturePool | None,
    cfg: ImputeConfig = ImputeConfig(),
    mode: str = "train",
    sample_id: int = -1,
    on_exhausted: str = "raise",
) -> tuple[np.ndarray, list[AuditRecord]]:
    """Fill every null dataframe of one gesture.

    Parameters
    ----------
    features : ndarray, shape (N, l_rs, 2)
        The gesture's interpolated dataframes; null ones are zeros.
    available : ndarray of bool, shape (N,)
    pool : GesturePool
        Same-class training gestures. Unused in test mode.
    mode : {"train", "test"}
    sample_id : int
        Id of the gesture itself, excluded from the pool.
    on_exhausted : {"raise", "zero"}
        What to do with an EPC no rule can fill.

    Returns
    -------
    filled : ndarray, shape (N, l_rs, 2)
    records : list of AuditRecord
    """
    if mode not in ("train", "test"):
        raise ValueError(f"mode must be 'train' or 'test', got {mode!r}")
    features = np.array(features, dtype=float)
    available = np.asarray(available, dtype=bool)
    missing = [int(n) + 1 for n in np.flatnonzero(~available)]
    if not missing:
        return features, []
    if cfg.max_missing is not None and len(missing) > cfg.max_missing:
        raise TooManyMissing(f"sample {sample_id}: {len(missing)} missing EPCs {missing}")

    def case_of(mu):
        if len(missing) == 1:
            return "single"
        partner = cfg.partner(mu)
        return "same_pair" if partner in missing else "distinct_pairs"

    records: dict[int, AuditRecord] = {}
    donor_ok = available.copy()  # original or nearest-neighbour filled

    if mode == "train":
        if pool is None:
            raise ValueError("train-mode imputation needs a pool")
        table = build_neighbor_table(features, available, pool, exclude_id=sample_id)
        zeta = table.nearest(cfg.nu)
        pos = {g: i for i, g in enumerate(pool.ids)}
        for mu in missing:
            omega = [g for g in zeta if pool.available[pos[g], mu - 1]]
            if omega:
                features[mu - 1] = _mean_of(pool, omega, mu - 1)
                donor_ok[mu - 1] = True
                records[mu] = AuditRecord(sample_id, mu, MED, case_of(mu), tuple(int(g) for g in omega))

    for mu in missing:
        if mu in records:
            continue
        delta = cfg.partner(mu)
        if delta is not None and donor_ok[delta - 1]:
            features[mu - 1] = features[delta - 1]
            records[mu] = AuditRecord(sample_id, mu, PROXIMITY, case_of(mu), (delta,))
            continue
        if mode == "train":
            donors = [
                int(g)
                for g, ok in zip(pool.ids, pool.available[:, mu - 1])
                if ok and g != sample_id
            ]
            if donors:
                features[mu - 1] = _mean_of(pool, donors, mu - 1)
                records[mu] = AuditRecord(sample_id, mu, CLASS_MEAN, case_of(mu), tuple(donors))
                continue
        if on_exhausted == "raise":
            raise ImputationExhausted(f"sample {sample_id}: no rule can fill EPC {mu} in {mode} mode")
        logger.debug("sample %s: EPC %d left as zeros", sample_id, mu)
        features[mu - 1] = 0.0
        records[mu] = AuditRecord(sample_id, mu, ZERO, case_of(mu))

    return features, [records[mu] for mu in missing]


def write_audit(path, records: Iterable[AuditRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", "epc", "branch", "case", "n_donors"])
        for r in records:
            w.writerow([r.sample_id, r.epc, r.branch, r.case, len(r.donors)])

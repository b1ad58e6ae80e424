"""Reader-log parsing and EPC sorting.

A log file holds one reading per line (``timestamp,epc,rss,phase`` by
default). Files are pre-segmented: either one gesture per file, or several
gesture blocks separated by ``#`` metadata lines such as::

    # sample_id=3 label=7 subject=2 env=A distance=3.0
    0.0000,E2801160600002084F2D5AB1,-52.5,1.2210
    ...

EPC strings are mapped to numeric tag ids through an explicit sidecar table.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

N_TAGS = 8
N_CLASSES = 21
DEFAULT_COLUMNS = ("timestamp", "epc", "rss", "phase")

# dataframe status values
RAW = "raw"
SPARSE = "sparse"
NULL = "null"
COMPLETE = "complete"


class LogParseError(ValueError):
    """A malformed row in a reader log."""

    def __init__(self, path, line: int, message: str):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class UnknownEPCError(LogParseError):
    def __init__(self, path, line: int, epc: str):
        self.epc = epc
        super().__init__(path, line, f"unknown EPC {epc!r} (not in id table)")


@dataclass(frozen=True)
class Reading:
    timestamp: float
    epc: int
    rss: float
    phase: float


@dataclass
class GestureSample:
    """All readings of one gesture execution, stored column-wise."""

    sample_id: int
    label: int
    subject: int
    timestamps: np.ndarray
    epcs: np.ndarray
    rss: np.ndarray
    phase: np.ndarray
    environment: str = "A"
    distance_m: float = 3.0

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=float)
        self.epcs = np.asarray(self.epcs, dtype=int)
        self.rss = np.asarray(self.rss, dtype=float)
        self.phase = np.asarray(self.phase, dtype=float)
        n = len(self.timestamps)
        if not (len(self.epcs) == len(self.rss) == len(self.phase) == n):
            raise ValueError("reading columns differ in length")
        if n and np.any(np.diff(self.timestamps) < 0):
            # stable: ties keep file order
            order = np.argsort(self.timestamps, kind="stable")
            self.timestamps = self.timestamps[order]
            self.epcs = self.epcs[order]
            self.rss = self.rss[order]
            self.phase = self.phase[order]

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def readings(self) -> list[Reading]:
        return [
            Reading(float(t), int(e), float(r), float(p))
            for t, e, r, p in zip(self.timestamps, self.epcs, self.rss, self.phase)
        ]

    @classmethod
    def from_readings(cls, readings: Sequence[Reading], **meta) -> "GestureSample":
        cols = list(zip(*[(r.timestamp, r.epc, r.rss, r.phase) for r in readings])) or [(), (), (), ()]
        return cls(timestamps=cols[0], epcs=cols[1], rss=cols[2], phase=cols[3], **meta)


@dataclass
class Dataframe:
    """Per-EPC time series of one gesture.

    ``mask`` marks observed positions once the dataframe has been zero padded
    onto the gesture's full timestamp grid; before that every entry is an
    observation.
    """

    epc: int
    timestamps: np.ndarray
    rss: np.ndarray
    phase: np.ndarray
    status: str = RAW
    mask: np.ndarray | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def observed(self) -> np.ndarray:
        if self.mask is None:
            return np.ones(len(self.timestamps), dtype=bool)
        return self.mask

    def replace(self, **changes) -> "Dataframe":
        kw = dict(
            epc=self.epc,
            timestamps=self.timestamps,
            rss=self.rss,
            phase=self.phase,
            status=self.status,
            mask=self.mask,
        )
        kw.update(changes)
        return Dataframe(**kw)


def load_epc_table(path) -> dict[str, int]:
    """Read an ``epc,id`` sidecar table. Header row optional."""
    table: dict[str, int] = {}
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].startswith("#"):
                continue
            if lineno == 1 and row[0].strip().lower() == "epc":
                continue
            try:
                table[row[0].strip().upper()] = int(row[1])
            except (IndexError, ValueError) as exc:
                raise LogParseError(path, lineno, f"bad EPC table row {row!r}") from exc
    return table


def write_epc_table(path, table: Mapping[str, int]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epc", "id"])
        for epc, idx in sorted(table.items(), key=lambda kv: kv[1]):
            w.writerow([epc, idx])


def _parse_meta(text: str) -> dict:
    meta = {}
    for tok in text.split():
        if "=" in tok:
            key, val = tok.split("=", 1)
            meta[key.strip()] = val.strip()
    out = {}
    if "sample_id" in meta:
        out["sample_id"] = int(meta["sample_id"])
    if "label" in meta:
        out["label"] = int(meta["label"])
    if "subject" in meta:
        out["subject"] = int(meta["subject"])
    if "env" in meta:
        out["environment"] = meta["env"]
    if "distance" in meta:
        out["distance_m"] = float(meta["distance"])
    return out


def parse_log(
    path,
    epc_table: Mapping[str, int],
    columns: Sequence[str] = DEFAULT_COLUMNS,
    delimiter: str = ",",
    meta: Mapping | None = None,
) -> list[GestureSample]:
    """Parse a reader log into gesture samples.

    Parameters
    ----------
    path : path-like
        Log file.
    epc_table : mapping
        EPC string (case-insensitive) to numeric tag id.
    columns : sequence of str
        Column order; must name ``timestamp``, ``epc``, ``rss`` and ``phase``.
        Extra columns are ignored.
    meta : mapping, optional
        Default metadata (label, subject, ...) for blocks without a ``#`` line.

    Returns
    -------
    list of GestureSample
        One sample per block, readings sorted by timestamp. Empty file gives
        an empty list.
    """
    columns = [c.strip().lower() for c in columns]
    try:
        idx = {name: columns.index(name) for name in DEFAULT_COLUMNS}
    except ValueError as exc:
        raise ValueError(f"columns {columns} must include {DEFAULT_COLUMNS}") from exc
    table = {k.upper(): v for k, v in epc_table.items()}
    width = max(idx.values()) + 1

    base_meta = {"sample_id": 0, "label": 1, "subject": 0}
    base_meta.update(meta or {})
    samples: list[GestureSample] = []
    block_meta = dict(base_meta)
    rows: list[tuple[float, int, float, float]] = []

    def flush():
        if rows:
            t, e, r, p = zip(*rows)
            samples.append(GestureSample(timestamps=t, epcs=e, rss=r, phase=p, **block_meta))
            rows.clear()

    with open(path, newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            if text.startswith("#"):
                flush()
                block_meta = dict(base_meta)
                block_meta.update(_parse_meta(text[1:]))
                continue
            fields = [f.strip() for f in text.split(delimiter)]
            if len(fields) >= width and fields[idx["timestamp"]].lower() == "timestamp":
                continue  # header row
            if len(fields) < width:
                raise LogParseError(path, lineno, f"expected {width} fields, got {len(fields)}")
            epc_str = fields[idx["epc"]].upper()
            if epc_str not in table:
                raise UnknownEPCError(path, lineno, fields[idx["epc"]])
            try:
                t = float(fields[idx["timestamp"]])
                r = float(fields[idx["rss"]])
                p = float(fields[idx["phase"]])
            except ValueError as exc:
                raise LogParseError(path, lineno, f"non-numeric field in {text!r}") from exc
            if not np.isfinite(t):
                raise LogParseError(path, lineno, "timestamp is not finite")
            rows.append((t, table[epc_str], r, p))
    flush()
    return samples


def write_log(path, sample: GestureSample, id_to_epc: Mapping[int, str], header: bool = True) -> None:
    """Write one sample in the default log format (inverse of `parse_log`)."""
    with open(path, "w") as fh:
        fh.write(
            f"# sample_id={sample.sample_id} label={sample.label} subject={sample.subject} "
            f"env={sample.environment} distance={float(sample.distance_m)!r}\n"
        )
        if header:
            fh.write(",".join(DEFAULT_COLUMNS) + "\n")
        for t, e, r, p in zip(sample.timestamps, sample.epcs, sample.rss, sample.phase):
            # float() first: numpy scalars repr as "np.float64(...)"
            fh.write(f"{float(t)!r},{id_to_epc[int(e)]},{float(r)!r},{float(p)!r}\n")


def read_manifest(path) -> list[dict]:
    """Manifest rows ``sample_id,label,subject,env,distance,path``.

    Relative paths resolve against the manifest's directory.
    """
    root = Path(path).parent
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].startswith("#") or row[0] == "sample_id":
                continue
            if len(row) < 6:
                raise LogParseError(path, lineno, "manifest rows need 6 fields")
            try:
                rows.append(
                    dict(
                        sample_id=int(row[0]),
                        label=int(row[1]),
                        subject=int(row[2]),
                        environment=row[3],
                        distance_m=float(row[4]),
                        path=root / row[5],
                    )
                )
            except ValueError as exc:
                raise LogParseError(path, lineno, f"bad manifest row {row!r}") from exc
    return rows


def write_manifest(path, entries: Sequence[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", "label", "subject", "env", "distance", "path"])
        for e in entries:
            w.writerow([e["sample_id"], e["label"], e["subject"], e["environment"], e["distance_m"], e["path"]])


def load_dataset(manifest, epc_table: Mapping[str, int] | None = None) -> list[GestureSample]:
    """Load every sample listed in a manifest.

    The EPC table defaults to ``epc_map.csv`` next to the manifest.
    """
    if epc_table is None:
        epc_table = load_epc_table(Path(manifest).parent / "epc_map.csv")
    samples = []
    for entry in read_manifest(manifest):
        meta = {k: entry[k] for k in ("sample_id", "label", "subject", "environment", "distance_m")}
        parsed = parse_log(entry["path"], epc_table)
        for s in parsed:
            # manifest metadata is authoritative
            for k, v in meta.items():
                setattr(s, k, v)
        samples.extend(parsed)
    return samples


def sort_by_epc(sample: GestureSample, n_tags: int = N_TAGS) -> list[Dataframe]:
    """Split a sample into per-EPC dataframes, in EPC order 1..n_tags.

    Uses a stable argsort on the EPC column, so within a dataframe the
    original timestamp order is kept. Absent EPCs give an empty ``null``
    dataframe.
    """
    order = np.argsort(sample.epcs, kind="stable")
    e = sample.epcs[order]
    t, r, p = sample.timestamps[order], sample.rss[order], sample.phase[order]
    out = []
    for n in range(1, n_tags + 1):
        lo, hi = np.searchsorted(e, n, side="left"), np.searchsorted(e, n, side="right")
        out.append(
            Dataframe(
                epc=n,
                timestamps=t[lo:hi].copy(),
                rss=r[lo:hi].copy(),
                phase=p[lo:hi].copy(),
                status=RAW if hi > lo else NULL,
            )
        )
    return out


def iter_readings(dfs: Sequence[Dataframe]) -> Iterator[Reading]:
    for df in dfs:
        for t, r, p in zip(df.timestamps, df.rss, df.phase):
            yield Reading(float(t), df.epc, float(r), float(p))

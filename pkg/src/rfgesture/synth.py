"""Synthetic labelled gesture data from a multipath backscatter channel.

Each tag's distance to the reader antenna follows a per-class motion
primitive (raise, push, circle, swipe) with subject and repetition jitter.
The reader inventories tags one at a time; every reading passes the
baseband channel

    y = sum_i  lambda / (4 pi d_i) * exp(j theta_i) * G_a * sqrt(P_t) + noise

where the direct path has the geometric phase ``4 pi d_1 / lambda`` and the
secondary paths a random phase. Whole tags (frames) and single readings are
dropped at configurable rates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .ingest import N_CLASSES, N_TAGS, GestureSample, write_epc_table, write_log, write_manifest

SPEED_OF_LIGHT = 299_792_458.0
PRIMITIVES = ("raise", "push", "circle", "swipe")
# 9/15/42% are the measured wrist-tag losses; 2% stands in for "significantly lower"
FRAME_DROP = (0.09, 0.15, 0.02, 0.02, 0.15, 0.42, 0.02, 0.02)


@dataclass(frozen=True)
class ChannelConfig:
    wavelength: float = SPEED_OF_LIGHT / 865e6
    tx_power_dbm: float = 30.0
    antenna_gain_dbic: float = 9.0
    n_paths: int = 3
    noise_var: float = 1e-3
    excess_path_m: tuple = (2.0, 8.0)
    seed: int = 0

    def __post_init__(self):
        if self.wavelength <= 0:
            raise ValueError("wavelength must be positive")
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if self.noise_var < 0:
            raise ValueError("noise_var must be >= 0")

    @property
    def amplitude(self) -> float:
        """G_a * sqrt(P_t), with P_t in mW."""
        return 10 ** (self.antenna_gain_dbic / 20) * 10 ** (self.tx_power_dbm / 20)


@dataclass(frozen=True)
class DropoutConfig:
    frame_drop: tuple = FRAME_DROP
    reading_drop: float = 0.1

    def __post_init__(self):
        probs = list(self.frame_drop) + [self.reading_drop]
        if any(not 0 <= p <= 1 for p in probs):
            raise ValueError("dropout probabilities must lie in [0, 1]")


@dataclass(frozen=True)
class TrajectoryModel:
    """Per-class, per-tag distance functions.

    ``tag_weight`` scales how strongly each tag follows its class motion and
    ``nuisance_m`` the amplitude of class-independent wiggle; the defaults
    make the forearm and upper-arm tags (3, 4, 7, 8) the informative ones.
    ``class_similarity`` in [0, 1] blends every class towards one shared
    motion, producing confusable classes. ``snap_rest_phase`` moves each
    tag's nominal rest distance to the nearest point where its direct-path
    phase is pi, so small offsets do not straddle the wrap boundary.

    Tags in one ``linked`` group sit next to each other on the garment and
    share their class motion (primitive, sign, tempo, timing); only their
    amplitudes differ, by a factor drawn from ``partner_gain``.
    """

    n_classes: int = N_CLASSES
    class_seed: int = 7
    amplitude_m: float = 0.15
    tag_weight: tuple = (0.35, 0.35, 1.0, 1.0, 0.35, 0.35, 1.0, 1.0)
    nuisance_m: tuple = (0.04, 0.04, 0.01, 0.01, 0.04, 0.04, 0.01, 0.01)
    tag_offset_m: tuple = (-0.30, -0.28, -0.15, -0.05, -0.30, -0.28, -0.15, -0.05)
    subject_amp_jitter: float = 0.15
    subject_speed_jitter: float = 0.15
    subject_offset_m: float = 0.03
    rep_amp_jitter: float = 0.05
    rep_speed_jitter: float = 0.05
    rep_offset_m: float = 0.02
    class_similarity: float = 0.0
    max_tempo: int = 2
    linked: tuple = ((1, 2), (3, 4), (5, 6), (7, 8))
    partner_gain: tuple = (0.7, 1.0)
    snap_rest_phase: bool = False
    wavelength: float = SPEED_OF_LIGHT / 865e6
    duration_s: float = 2.5
    read_rate_hz: float = 160.0

    def groups(self) -> np.ndarray:
        """Group index per tag; unlinked tags form their own group."""
        n = len(self.tag_weight)
        group = -np.ones(n, dtype=int)
        for g, members in enumerate(self.linked):
            group[[m - 1 for m in members]] = g
        free = np.flatnonzero(group < 0)
        group[free] = len(self.linked) + np.arange(free.size)
        return group

    def class_table(self) -> dict:
        """Primitive index, sign, amplitude, tempo and time shift per (class, tag)."""
        rng = np.random.default_rng(self.class_seed)
        group = self.groups()
        shape = (self.n_classes, group.max() + 1)
        table = dict(
            prim=rng.integers(0, len(PRIMITIVES), size=shape),
            sign=rng.choice([-1.0, 1.0], size=shape),
            amp=rng.uniform(0.6, 1.4, size=shape),
            tempo=rng.integers(1, self.max_tempo + 1, size=shape),
            shift=rng.uniform(0.0, 0.2, size=shape),
        )
        table = {k: v[:, group] for k, v in table.items()}
        gain = rng.uniform(*self.partner_gain, size=table["amp"].shape)
        first = np.array([np.flatnonzero(group == g)[0] for g in group])
        gain[:, first == np.arange(len(group))] = 1.0
        table["amp"] = table["amp"] * gain
        return table


_SEPARABLE_TRAJ = TrajectoryModel(
    nuisance_m=(0.005, 0.005, 0.001, 0.001, 0.005, 0.005, 0.001, 0.001),
    subject_offset_m=0.01,
    subject_amp_jitter=0.1,
    subject_speed_jitter=0.1,
    rep_offset_m=0.002,
    rep_amp_jitter=0.02,
    rep_speed_jitter=0.02,
    partner_gain=(0.9, 1.0),
    snap_rest_phase=True,
)
_SEPARABLE_CH = ChannelConfig(noise_var=2e-4, excess_path_m=(6.0, 15.0))

# named (trajectory, channel) pairs; "separable" is the low-nuisance regime
# with weak reflections, "confusable" blends all classes towards one motion
PRESETS = {
    "realistic": (TrajectoryModel(), ChannelConfig()),
    "separable": (_SEPARABLE_TRAJ, _SEPARABLE_CH),
    "confusable": (replace(_SEPARABLE_TRAJ, class_similarity=0.7), _SEPARABLE_CH),
}


def primitive(name: str, s: np.ndarray, tempo: int = 1) -> np.ndarray:
    """Unit-amplitude motion profile over normalised time ``s`` in [0, 1].

    ``tempo`` repeats the periodic primitives (raise, circle) and sharpens
    the transition of the one-way ones (push, swipe).
    """
    s = np.clip(s, 0.0, 1.0)
    if name == "raise":
        return 0.5 * (1.0 - np.cos(2 * np.pi * tempo * s))
    if name == "push":
        u = np.clip((s - 0.5) * tempo + 0.5, 0.0, 1.0)
        return 0.5 * (1.0 - np.cos(np.pi * u))
    if name == "circle":
        return np.sin(2 * np.pi * tempo * s)
    if name == "swipe":
        g = 8.0 * tempo
        return 0.5 * np.tanh(g * (s - 0.5)) / np.tanh(g / 2) + 0.5
    raise ValueError(f"unknown primitive {name!r}")


def channel_sample(d, cfg: ChannelConfig = ChannelConfig(), rng=None, thetas=None):
    """RSS (dBm) and phase (rad, in [0, 2pi)) of readings at path distances ``d``.

    Parameters
    ----------
    d : array_like, shape (..., n_paths)
        Path distances in metres; the first is the direct path.
    thetas : array_like, shape (..., n_paths - 1), optional
        Phases of the secondary paths. Drawn uniformly from ``rng`` if omitted.
    """
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("path distances must be positive")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    lam = cfg.wavelength
    theta = np.empty_like(d)
    theta[..., 0] = np.mod(4 * np.pi * d[..., 0] / lam, 2 * np.pi)
    if d.shape[-1] > 1:
        if thetas is None:
            thetas = rng.uniform(0.0, 2 * np.pi, size=d[..., 1:].shape)
        theta[..., 1:] = thetas
    g = lam / (4 * np.pi * d) * np.exp(1j * theta)
    y = g.sum(axis=-1) * cfg.amplitude
    if cfg.noise_var > 0:
        sd = math.sqrt(cfg.noise_var / 2)
        y = y + sd * (rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape))
    rss = 20 * np.log10(np.abs(y))
    phase = np.mod(np.angle(y), 2 * np.pi)
    return rss, phase


def _subject_traits(traj: TrajectoryModel, seed: int, subject: int):
    rng = np.random.default_rng([seed, 1, subject])
    n = len(traj.tag_weight)
    return dict(
        amp=1.0 + traj.subject_amp_jitter * rng.uniform(-1, 1),
        speed=1.0 + traj.subject_speed_jitter * rng.uniform(-1, 1),
        offset=traj.subject_offset_m * rng.uniform(-1, 1, size=n),
    )


def session_scene(ch: ChannelConfig, seed: int, subject: int, n_tags: int):
    """Excess lengths and phases of the secondary paths, per tag.

    The room is static during a subject's recording session, so every
    repetition of that subject sees the same reflections.
    """
    rng = np.random.default_rng([seed, 3, subject])
    shape = (n_tags, ch.n_paths - 1)
    return rng.uniform(*ch.excess_path_m, size=shape), rng.uniform(0, 2 * np.pi, size=shape)


def tag_distances(
    traj: TrajectoryModel,
    label: int,
    t: np.ndarray,
    duration: float,
    amp: float,
    base_m: float,
    offsets: np.ndarray,
    rng,
    table=None,
) -> np.ndarray:
    """Distance of every tag at times ``t``; returns shape (n_tags, len(t))."""
    tab = table if table is not None else traj.class_table()
    c = label - 1
    n = len(traj.tag_weight)
    s = t / duration
    out = np.empty((n, len(t)))
    for k in range(n):
        shift = tab["shift"][c, k]
        sk = (s - shift) / (1.0 - shift)
        prim = PRIMITIVES[tab["prim"][c, k]]
        own = tab["sign"][c, k] * tab["amp"][c, k] * primitive(prim, sk, tab["tempo"][c, k])
        if traj.class_similarity:
            shared = primitive("raise", s)
            own = (1 - traj.class_similarity) * own + traj.class_similarity * shared
        motion = traj.amplitude_m * amp * traj.tag_weight[k] * own
        freqs = rng.uniform(0.5, 2.0, size=2)
        phases = rng.uniform(0, 2 * np.pi, size=2)
        wiggle = traj.nuisance_m[k] * np.sin(2 * np.pi * freqs[:, None] * t + phases[:, None]).sum(0) / 2
        rest = base_m + traj.tag_offset_m[k]
        if traj.snap_rest_phase:
            half = traj.wavelength / 2
            rest = (np.floor(rest / half) + 0.5) * half
        out[k] = rest + offsets[k] + motion + wiggle
    return out


def generate_sample(
    label: int,
    subject: int,
    rep: int,
    traj: TrajectoryModel = TrajectoryModel(),
    ch: ChannelConfig = ChannelConfig(),
    drop: DropoutConfig = DropoutConfig(),
    seed: int = 42,
    distance_m: float = 3.0,
    environment: str = "A",
    sample_id: int = 0,
    table=None,
) -> GestureSample:
    rng = np.random.default_rng([seed, 2, subject, label, rep])
    traits = _subject_traits(traj, seed, subject)
    n = len(traj.tag_weight)
    speed = traits["speed"] * (1.0 + traj.rep_speed_jitter * rng.uniform(-1, 1))
    duration = traj.duration_s / speed
    amp = traits["amp"] * (1.0 + traj.rep_amp_jitter * rng.uniform(-1, 1))
    rep_offset = traj.rep_offset_m * rng.uniform(-1, 1)

    # sequential inventory: one EPC per slot, round robin in shuffled cycles
    n_slots = max(n, int(duration * traj.read_rate_hz))
    gaps = rng.uniform(0.5, 1.5, size=n_slots) / traj.read_rate_hz
    times = np.cumsum(gaps) - gaps[0]
    cycles = -(-n_slots // n)
    epcs = np.concatenate([rng.permutation(n) for _ in range(cycles)])[:n_slots] + 1

    offsets = traits["offset"] + rep_offset
    dist = tag_distances(traj, label, times, duration, amp, distance_m, offsets, rng, table)
    d_direct = dist[epcs - 1, np.arange(n_slots)]
    excess, thetas = session_scene(ch, seed, subject, n)
    d_all = np.concatenate([d_direct[:, None], d_direct[:, None] + excess[epcs - 1]], axis=1)
    rss, phase = channel_sample(d_all, ch, rng, thetas[epcs - 1])

    keep = rng.random(n_slots) >= drop.reading_drop
    frame_lost = rng.random(n) < np.asarray(drop.frame_drop)
    keep &= ~frame_lost[epcs - 1]
    return GestureSample(
        sample_id=sample_id,
        label=label,
        subject=subject,
        timestamps=times[keep],
        epcs=epcs[keep],
        rss=rss[keep],
        phase=phase[keep],
        environment=environment,
        distance_m=distance_m,
    )


def generate_dataset(
    subjects: int,
    reps: int,
    traj: TrajectoryModel = TrajectoryModel(),
    ch: ChannelConfig = ChannelConfig(),
    drop: DropoutConfig = DropoutConfig(),
    seed: int = 42,
    distance_m: float = 3.0,
    environment: str = "A",
    classes: int | None = None,
) -> list[GestureSample]:
    """``subjects x classes x reps`` samples, ids in generation order.

    Every sample draws from its own RNG stream derived from
    ``(seed, subject, label, rep)``, so results do not depend on order.
    """
    if subjects < 1 or reps < 1:
        raise ValueError("subjects and reps must be >= 1")
    n_classes = classes or traj.n_classes
    table = traj.class_table()
    out = []
    for subject in range(1, subjects + 1):
        for label in range(1, n_classes + 1):
            for rep in range(reps):
                out.append(
                    generate_sample(
                        label, subject, rep, traj, ch, drop, seed, distance_m, environment,
                        sample_id=len(out), table=table,
                    )
                )
    return out


def epc_codes(n_tags: int = N_TAGS) -> dict[int, str]:
    """Deterministic 96-bit EPC hex strings for tag ids 1..n_tags."""
    return {n: f"E2801160600002084F2D{n:04X}" for n in range(1, n_tags + 1)}


def write_dataset(root, samples: Sequence[GestureSample], n_tags: int = N_TAGS) -> Path:
    """Write logs, ``manifest.csv`` and ``epc_map.csv`` under ``root``."""
    root = Path(root)
    (root / "logs").mkdir(parents=True, exist_ok=True)
    codes = epc_codes(n_tags)
    write_epc_table(root / "epc_map.csv", {v: k for k, v in codes.items()})
    entries = []
    for s in samples:
        rel = f"logs/sample_{s.sample_id:06d}.csv"
        write_log(root / rel, s, codes)
        entries.append(
            dict(
                sample_id=s.sample_id,
                label=s.label,
                subject=s.subject,
                environment=s.environment,
                distance_m=s.distance_m,
                path=rel,
            )
        )
    write_manifest(root / "manifest.csv", entries)
    return root / "manifest.csv"

"""Per-gesture signal conditioning.

Order of operations for one gesture (see `preprocess_dataframes`):

1. unwrap each dataframe's phase,
2. MAD-normalise the phase over the whole gesture,
3. smooth each dataframe's phase (Savitzky-Golay, then Gaussian),
4. Min-Max normalise each dataframe's RSS,
5. zero pad onto the gesture's timestamp grid,
6. null out dataframes with fewer than two observations.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.ndimage import gaussian_filter1d
from scipy.signal import savgol_filter

from .ingest import COMPLETE, NULL, SPARSE, Dataframe, GestureSample, N_TAGS, sort_by_epc


@dataclass(frozen=True)
class SmoothingConfig:
    sg_window: int = 11
    sg_polyorder: int = 3
    gauss_sigma: float = 2.0

    def __post_init__(self):
        if self.sg_window < 3 or self.sg_window % 2 == 0:
            raise ValueError("sg_window must be odd and >= 3")
        if not 0 <= self.sg_polyorder < self.sg_window:
            raise ValueError("sg_polyorder must satisfy 0 <= polyorder < sg_window")
        if self.gauss_sigma <= 0:
            raise ValueError("gauss_sigma must be positive")


def unwrap_phase(df: Dataframe) -> Dataframe:
    """Remove 2*pi jumps so adjacent samples differ by at most pi."""
    if len(df) < 2:
        return df
    return df.replace(phase=np.unwrap(df.phase))


def normalize_phase_mad(phi: np.ndarray) -> np.ndarray:
    """Centre on the median and scale by the median absolute deviation.

    A zero MAD (constant input) leaves the centred vector unscaled.
    """
    phi = np.asarray(phi, dtype=float)
    if phi.size == 0:
        raise ValueError("cannot normalise an empty phase vector")
    centred = phi - np.median(phi)
    beta = np.median(np.abs(centred))
    if beta == 0:
        return centred
    return centred / beta


def normalize_gesture_phase(dfs: Sequence[Dataframe]) -> list[Dataframe]:
    """MAD-normalise the concatenated phase of all dataframes of one gesture."""
    sizes = [len(df) for df in dfs]
    if not any(sizes):
        return list(dfs)
    phi = normalize_phase_mad(np.concatenate([df.phase for df in dfs]))
    parts = np.split(phi, np.cumsum(sizes)[:-1])
    return [df.replace(phase=part) if len(df) else df for df, part in zip(dfs, parts)]


def _smooth(x: np.ndarray, cfg: SmoothingConfig) -> np.ndarray:
    n = len(x)
    if n <= 1:
        return x.copy()
    window = min(cfg.sg_window, n if n % 2 else n - 1)
    polyorder = min(cfg.sg_polyorder, window - 1)
    y = savgol_filter(x, window, polyorder, mode="nearest") if window >= 3 else x.astype(float)
    return gaussian_filter1d(y, cfg.gauss_sigma, mode="nearest")


def smooth_phase(df: Dataframe, cfg: SmoothingConfig = SmoothingConfig()) -> Dataframe:
    """Savitzky-Golay followed by Gaussian smoothing of the phase column.

    Short series shrink the S-G window to the largest odd length that fits.
    """
    if len(df) == 0:
        return df
    return df.replace(phase=_smooth(np.asarray(df.phase, dtype=float), cfg))


def minmax(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return x.copy()
    lo, hi = x.min(), x.max()
    if hi == lo:
        return np.zeros_like(x)
    return (x - lo) / (hi - lo)


def normalize_rss_minmax(df: Dataframe) -> Dataframe:
    return df.replace(rss=minmax(df.rss))


def zero_pad(dfs: Sequence[Dataframe], full_timestamps: np.ndarray) -> list[Dataframe]:
    """Expand every dataframe onto ``full_timestamps``, zeros where unobserved.

    The presence mask records which entries are observations; a genuine
    observed zero (e.g. the RSS minimum) is therefore not mistaken for a gap.
    """
    full = np.asarray(full_timestamps, dtype=float)
    T = len(full)
    out = []
    for df in dfs:
        rss = np.zeros(T)
        phase = np.zeros(T)
        mask = np.zeros(T, dtype=bool)
        if len(df):
            pos = np.searchsorted(full, df.timestamps)
            if np.any(pos >= T) or np.any(full[np.minimum(pos, T - 1)] != df.timestamps):
                raise ValueError(f"EPC {df.epc}: timestamps not on the gesture grid")
            rss[pos] = df.rss
            phase[pos] = df.phase
            mask[pos] = True
        if not mask.any():
            status = NULL
        elif mask.all():
            status = COMPLETE
        else:
            status = SPARSE
        out.append(Dataframe(df.epc, full.copy(), rss, phase, status, mask))
    return out


def validate_padding(df: Dataframe) -> Dataframe:
    """Null out a padded dataframe with fewer than two observations."""
    if df.status == NULL or int(df.observed.sum()) < 2:
        T = len(df.timestamps)
        return df.replace(
            rss=np.zeros(T), phase=np.zeros(T), status=NULL, mask=np.zeros(T, dtype=bool)
        )
    return df


def preprocess_dataframes(
    sample: GestureSample,
    smoothing: SmoothingConfig = SmoothingConfig(),
    n_tags: int = N_TAGS,
) -> list[Dataframe]:
    """Run the full conditioning chain on one gesture; returns padded dataframes."""
    dfs = sort_by_epc(sample, n_tags)
    dfs = [unwrap_phase(df) for df in dfs]
    dfs = normalize_gesture_phase(dfs)
    dfs = [smooth_phase(df, smoothing) for df in dfs]
    dfs = [normalize_rss_minmax(df) for df in dfs]
    dfs = zero_pad(dfs, np.unique(sample.timestamps))
    return [validate_padding(df) for df in dfs]

"""Dual-slope R-peak detection.

A QRS complex is where the signal rises steeply into a point and falls
steeply out of it. For each sample ``i`` the detector measures slopes to
``i-k`` and ``i+k`` over a window of lags and scores how sharply ``i`` stands
out on both sides; peaks of that score above an adaptive threshold are beats.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class DualSlopeParams:
    """Detector settings; lags are in samples (defaults tuned for 300 Hz).

    ``theta_init`` is in standardized amplitude units per sample.
    """

    k_min: int = 8
    k_max: int = 19
    refractory: float = 0.2
    theta_init: float = 0.02
    theta_fraction: float = 0.7
    history: int = 8
    refine_window: float = 0.05

    def __post_init__(self):
        if not 0 < self.k_min < self.k_max:
            raise ValueError(f"need 0 < k_min < k_max, got {self.k_min}, {self.k_max}")
        if not self.refractory > 0:
            raise ValueError("refractory must be positive")
        if not 0 < self.theta_fraction < 1:
            raise ValueError("theta_fraction must lie in (0, 1)")
        if not self.theta_init > 0:
            raise ValueError("theta_init must be positive")
        if self.history < 1:
            raise ValueError("history must be >= 1")


@dataclass(frozen=True)
class BeatAnnotations:
    peaks: np.ndarray
    fs: float

    @property
    def rr(self) -> np.ndarray:
        return rr_intervals(self.peaks, self.fs)

    def __len__(self):
        return self.peaks.size


def dual_slope_score(samples, i: int, p: DualSlopeParams = DualSlopeParams()) -> float:
    """Score of a single index; ``k_max <= i < len - k_max``."""
    x = np.asarray(samples, dtype=np.float64)
    if not p.k_max <= i < x.size - p.k_max:
        raise IndexError(f"index {i} outside valid range [{p.k_max}, {x.size - p.k_max})")
    k = np.arange(p.k_min, p.k_max + 1)
    left = (x[i] - x[i - k]) / k
    right = (x[i] - x[i + k]) / k
    return float(max(left.max() + right.max(), -left.min() - right.min()))


def dual_slope_scores(samples, p: DualSlopeParams = DualSlopeParams()) -> np.ndarray:
    """Vectorized score for every index; entries outside the valid range are 0."""
    x = np.asarray(samples, dtype=np.float64)
    n = x.size
    out = np.zeros(n)
    lo, hi = p.k_max, n - p.k_max
    if hi <= lo:
        return out
    centre = x[lo:hi]
    max_l = np.full(hi - lo, -np.inf)
    min_l = np.full(hi - lo, np.inf)
    max_r = np.full(hi - lo, -np.inf)
    min_r = np.full(hi - lo, np.inf)
    for k in range(p.k_min, p.k_max + 1):
        left = (centre - x[lo - k:hi - k]) / k
        right = (centre - x[lo + k:hi + k]) / k
        np.maximum(max_l, left, out=max_l)
        np.minimum(min_l, left, out=min_l)
        np.maximum(max_r, right, out=max_r)
        np.minimum(min_r, right, out=min_r)
    out[lo:hi] = np.maximum(max_l + max_r, -min_l - min_r)
    return out


def _local_maxima(s: np.ndarray) -> np.ndarray:
    # strict rise on the left, non-strict fall on the right: plateaus report their first index
    return np.flatnonzero((s[1:-1] > s[:-2]) & (s[1:-1] >= s[2:])) + 1


def detect_r_peaks(samples, fs: float, p: DualSlopeParams = DualSlopeParams()) -> BeatAnnotations:
    x = np.asarray(samples, dtype=np.float64)
    if x.size <= 2 * p.k_max:
        raise ValueError(f"signal of length {x.size} too short for k_max={p.k_max}")
    scores = dual_slope_scores(x, p)
    floor = p.theta_init / 4
    refractory = p.refractory * fs
    candidates = _local_maxima(scores)
    candidates = candidates[scores[candidates] > floor]

    theta = p.theta_init
    recent: deque[float] = deque(maxlen=p.history)
    accepted: list[int] = []
    for c in candidates:
        sc = scores[c]
        if sc <= theta:
            continue
        if accepted and c - accepted[-1] <= refractory:
            if sc <= scores[accepted[-1]]:
                continue
            accepted[-1] = c
            recent[-1] = sc
        else:
            accepted.append(c)
            recent.append(sc)
        theta = max(p.theta_fraction * float(np.mean(recent)), floor)

    half = int(round(p.refine_window * fs))
    peaks: list[int] = []
    peak_scores: list[float] = []
    for c in accepted:
        lo, hi = max(c - half, 0), min(c + half + 1, x.size)
        r = lo + int(np.argmax(np.abs(x[lo:hi])))
        if peaks and r - peaks[-1] <= refractory:
            # refinement pulled two beats together; keep the stronger one
            if scores[c] > peak_scores[-1]:
                peaks[-1], peak_scores[-1] = r, scores[c]
            continue
        peaks.append(r)
        peak_scores.append(scores[c])
    return BeatAnnotations(np.array(peaks, dtype=np.int64), fs)


def rr_intervals(peaks, fs: float) -> np.ndarray:
    peaks = np.asarray(peaks)
    if peaks.size < 2:
        return np.zeros(0)
    gaps = np.diff(peaks)
    if np.any(gaps <= 0):
        raise ValueError("peak indices must be strictly increasing")
    return gaps / fs

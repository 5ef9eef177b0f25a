"""Standardization, linear-phase band-pass filtering and truncation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .records import Record

MAX_LEN = 9000


@dataclass(frozen=True)
class FilterSpec:
    low_cut: float = 3.0
    high_cut: float = 45.0
    fs: float = 300.0
    num_taps: int = 601

    def __post_init__(self):
        if not 0 < self.low_cut < self.high_cut < self.fs / 2:
            raise ValueError(
                f"need 0 < low_cut < high_cut < fs/2, got {self.low_cut}, {self.high_cut}, fs={self.fs}")
        if self.num_taps < 3 or self.num_taps % 2 == 0:
            raise ValueError(f"num_taps must be odd and >= 3, got {self.num_taps}")


@dataclass(frozen=True)
class FirFilter:
    taps: np.ndarray

    @property
    def num_taps(self) -> int:
        return self.taps.size

    @property
    def group_delay(self) -> int:
        return (self.taps.size - 1) // 2


def standardize(samples) -> np.ndarray:
    """Zero mean, unit (population) standard deviation; near-constant input maps to zeros."""
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        raise ValueError("cannot standardize an empty signal")
    centered = x - x.mean()
    std = centered.std()
    if std < 1e-12:
        return np.zeros_like(x)
    return centered / std


def _lowpass_kernel(cutoff_norm, n):
    # ideal low-pass impulse response; cutoff as a fraction of fs
    return 2 * cutoff_norm * np.sinc(2 * cutoff_norm * n)


def design_bandpass(spec: FilterSpec) -> FirFilter:
    """Hamming-windowed sinc band-pass built as the difference of two low-pass kernels."""
    m = np.arange(spec.num_taps) - (spec.num_taps - 1) / 2
    ideal = (_lowpass_kernel(spec.high_cut / spec.fs, m)
             - _lowpass_kernel(spec.low_cut / spec.fs, m))
    taps = ideal * np.hamming(spec.num_taps)
    # enforce exact symmetry against round-off in sinc
    taps = 0.5 * (taps + taps[::-1])
    return FirFilter(taps)


def frequency_response(filt: FirFilter, freqs, fs: float) -> np.ndarray:
    """Magnitude of the DTFT of the taps at the given frequencies (Hz)."""
    freqs = np.atleast_1d(np.asarray(freqs, dtype=np.float64))
    n = np.arange(filt.num_taps)
    phase = np.exp(-2j * np.pi * np.outer(freqs / fs, n))
    return np.abs(phase @ filt.taps)


def apply_filter(samples, filt: FirFilter) -> np.ndarray:
    """Zero-phase application: reflection-pad by the group delay, then valid convolution."""
    x = np.asarray(samples, dtype=np.float64)
    if x.size <= filt.num_taps:
        raise ValueError(f"signal of length {x.size} is not longer than the filter ({filt.num_taps} taps)")
    d = filt.group_delay
    padded = np.pad(x, (d, d), mode="reflect")
    return np.convolve(padded, filt.taps, mode="valid")


def truncate(samples, max_len: int = MAX_LEN) -> np.ndarray:
    return np.asarray(samples)[:max_len]


def preprocess_record(rec: Record, spec: FilterSpec | None = None, max_len: int = MAX_LEN,
                      filt: FirFilter | None = None) -> Record:
    """standardize -> band-pass -> truncate."""
    spec = spec or FilterSpec(fs=rec.fs)
    if spec.fs != rec.fs:
        raise ValueError(f"filter designed for fs={spec.fs} but record {rec.id!r} has fs={rec.fs}")
    filt = filt or design_bandpass(spec)
    x = standardize(rec.samples)
    x = apply_filter(x, filt)
    return rec.with_samples(truncate(x, max_len))

"""Deterministic synthetic ECG with exact R-peak ground truth.

Beats are sums of Gaussian bumps: a sharp Q-R-S spike plus smooth P and T
waves. Three rhythm modes stand in for the three diagnostic classes:

* ``regular``   - near-constant R-R intervals (seeded jitter), with P waves.
* ``irregular`` - R-R intervals drawn uniformly from [0.6, 1.4] x nominal;
  P waves are replaced by low-amplitude fibrillatory oscillation.
* ``noisy``     - regular rhythm plus 0.3 Hz baseline wander of large amplitude.

White noise is added to every mode at ``snr_db`` relative to the clean beat
waveform's power.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .records import ClassLabel, Record


class Rhythm(str, enum.Enum):
    REGULAR = "regular"
    IRREGULAR = "irregular"
    NOISY = "noisy"

    @property
    def label(self) -> ClassLabel:
        return {Rhythm.REGULAR: ClassLabel.NORMAL,
                Rhythm.IRREGULAR: ClassLabel.AFIB,
                Rhythm.NOISY: ClassLabel.OTHER}[self]


IRREGULAR_BAND = (0.6, 1.4)

# (amplitude, offset from R apex in s, width sigma in s)
_Q = (-0.12, -0.022, 0.006)
_R = (1.0, 0.0, 0.008)
_S = (-0.30, 0.022, 0.007)
_P = (0.15, -0.16, 0.020)
_T_AMP, _T_SIGMA = 0.30, 0.040

WANDER_HZ = 0.3
WANDER_AMP = 0.6
FWAVE_AMP = 0.05


@dataclass(frozen=True)
class SynthSpec:
    fs: float = 300.0
    duration: float = 30.0
    mean_hr: float = 75.0
    rhythm: Rhythm = Rhythm.REGULAR
    snr_db: float = 20.0
    seed: int = 0
    jitter: float = 0.02

    def __post_init__(self):
        object.__setattr__(self, "rhythm", Rhythm(self.rhythm))
        if self.duration < 0:
            raise ValueError(f"duration must be >= 0, got {self.duration}")
        if not 30 <= self.mean_hr <= 220:
            raise ValueError(f"mean_hr must lie in [30, 220], got {self.mean_hr}")
        if not self.fs > 0:
            raise ValueError(f"fs must be positive, got {self.fs}")
        if not 0 <= self.jitter < 1:
            raise ValueError(f"jitter must lie in [0, 1), got {self.jitter}")


def _beat_positions(spec: SynthSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    nominal = 60.0 / spec.mean_hr * spec.fs
    edge = int(round(0.1 * spec.fs))
    peaks = []
    pos = int(round(0.5 * nominal))
    while pos <= n - 1 - edge:
        peaks.append(pos)
        if spec.rhythm is Rhythm.IRREGULAR:
            factor = rng.uniform(*IRREGULAR_BAND)
        else:
            factor = rng.uniform(1 - spec.jitter, 1 + spec.jitter) if spec.jitter else 1.0
        pos += max(int(round(nominal * factor)), 1)
    return np.array(peaks, dtype=np.int64)


def _add_bump(x, t, center, amp, sigma):
    # bumps are truncated at 5 sigma to keep generation linear in length
    lo = max(int(np.floor(center - 5 * sigma)), 0)
    hi = min(int(np.ceil(center + 5 * sigma)) + 1, x.size)
    if lo < hi:
        seg = t[lo:hi] - center
        x[lo:hi] += amp * np.exp(-0.5 * (seg / sigma) ** 2)


def synth_ecg(spec: SynthSpec, id: str = "synth") -> tuple[Record, np.ndarray]:
    """Generate one recording; returns the record and its exact R apex indices."""
    fs = spec.fs
    n = int(round(spec.duration * fs))
    rng = np.random.default_rng(spec.seed)
    label = spec.rhythm.label
    if n == 0:
        return Record(id, np.zeros(0), fs, label), np.zeros(0, dtype=np.int64)
    peaks = _beat_positions(spec, n, rng)
    t = np.arange(n, dtype=np.float64)
    clean = np.zeros(n)
    nominal_rr = 60.0 / spec.mean_hr
    t_offset = float(np.clip(0.4 * nominal_rr, 0.16, 0.30))
    with_p = spec.rhythm is not Rhythm.IRREGULAR
    for p in peaks:
        for amp, off, sigma in (_Q, _R, _S):
            _add_bump(clean, t, p + off * fs, amp, sigma * fs)
        if with_p:
            amp, off, sigma = _P
            _add_bump(clean, t, p + off * fs, amp, sigma * fs)
        _add_bump(clean, t, p + t_offset * fs, _T_AMP, _T_SIGMA * fs)
    if not with_p:
        # fibrillatory waves: a slowly frequency-modulated 4-8 Hz oscillation
        f_inst = 6.0 + 2.0 * np.sin(2 * np.pi * 0.2 * t / fs + rng.uniform(0, 2 * np.pi))
        phase = 2 * np.pi * np.cumsum(f_inst) / fs + rng.uniform(0, 2 * np.pi)
        clean += FWAVE_AMP * np.sin(phase)
    power = float(np.mean(clean ** 2))
    noise_sigma = np.sqrt(power / 10 ** (spec.snr_db / 10)) if power > 0 else 0.0
    x = clean + noise_sigma * rng.standard_normal(n)
    if spec.rhythm is Rhythm.NOISY:
        x += WANDER_AMP * np.sin(2 * np.pi * WANDER_HZ * t / fs + rng.uniform(0, 2 * np.pi))
    return Record(id, x, fs, label), peaks


@dataclass(frozen=True)
class SynthDatasetSpec:
    """Recipe for a labelled synthetic corpus with classes cycling N, A, O."""

    n: int = 30
    fs: float = 300.0
    duration: float = 30.0
    hr_range: tuple = (85.0, 120.0)
    snr_db: float = 20.0
    noisy_snr_db: float = 5.0
    seed: int = 0


def synth_dataset(spec: SynthDatasetSpec):
    """Returns ``(Dataset, {record_id: true_peaks})``.

    Record ``i`` uses rhythm ``i % 3`` and per-record seed drawn from ``spec.seed``;
    noisy records use ``noisy_snr_db``.
    """
    from .records import Dataset

    rhythms = (Rhythm.REGULAR, Rhythm.IRREGULAR, Rhythm.NOISY)
    master = np.random.default_rng(spec.seed)
    seeds = master.integers(0, 2 ** 31 - 1, size=spec.n)
    hrs = master.uniform(*spec.hr_range, size=spec.n)
    records, truth = [], {}
    width = max(len(str(spec.n - 1)), 4)
    for i in range(spec.n):
        rhythm = rhythms[i % 3]
        snr = spec.noisy_snr_db if rhythm is Rhythm.NOISY else spec.snr_db
        rec_id = f"S{i:0{width}d}"
        rec, peaks = synth_ecg(SynthSpec(spec.fs, spec.duration, float(hrs[i]), rhythm, snr,
                                         int(seeds[i])), id=rec_id)
        records.append(rec)
        truth[rec_id] = peaks
    return Dataset(tuple(records)), truth

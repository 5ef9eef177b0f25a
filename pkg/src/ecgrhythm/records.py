"""Recording containers, on-disk formats and the stratified train/validation split."""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class ClassLabel(enum.IntEnum):
    NORMAL = 0
    AFIB = 1
    OTHER = 2

    @property
    def code(self) -> str:
        return _CODE_OF[self]

    @classmethod
    def from_code(cls, code: str) -> "ClassLabel":
        try:
            return _LABEL_OF[code]
        except KeyError:
            raise ValueError(f"unknown label code {code!r}") from None


_LABEL_OF = {"N": ClassLabel.NORMAL, "A": ClassLabel.AFIB, "O": ClassLabel.OTHER}
_CODE_OF = {v: k for k, v in _LABEL_OF.items()}

CLASS_NAMES = ("N", "A", "O")


class RecordFormatError(ValueError):
    """Raised when a record or reference file cannot be parsed."""


@dataclass(frozen=True)
class Record:
    """A single-lead ECG recording. ``samples`` are millivolts (or standardized units)."""

    id: str
    samples: np.ndarray
    fs: float
    label: ClassLabel | None = None

    def __post_init__(self):
        if not self.fs > 0:
            raise ValueError(f"record {self.id!r}: fs must be positive, got {self.fs}")
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError(f"record {self.id!r}: samples must be 1-D")
        if not np.all(np.isfinite(samples)):
            raise ValueError(f"record {self.id!r}: non-finite samples")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.size

    def with_samples(self, samples) -> "Record":
        return Record(self.id, samples, self.fs, self.label)


@dataclass(frozen=True)
class Dataset:
    records: tuple[Record, ...] = field(default_factory=tuple)

    def __post_init__(self):
        records = tuple(self.records)
        ids = [r.id for r in records]
        if len(set(ids)) != len(ids):
            dupes = sorted(i for i, n in Counter(ids).items() if n > 1)
            raise ValueError(f"duplicate record ids: {dupes}")
        object.__setattr__(self, "records", records)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def class_counts(self) -> dict[ClassLabel, int]:
        counts = Counter(r.label for r in self.records if r.label is not None)
        return {label: counts.get(label, 0) for label in ClassLabel}


def load_reference(path, noisy_as_other: bool = False) -> list[tuple[str, ClassLabel]]:
    """Parse a ``record_id,label`` file with labels N, A, O or ``~`` (noisy).

    Noisy lines are dropped unless ``noisy_as_other`` folds them into OTHER.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise RecordFormatError(f"cannot read reference file {path}: {exc}") from None
    entries = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 2 or not parts[0]:
            raise RecordFormatError(f"{path}:{lineno}: expected 'id,label', got {line!r}")
        rec_id, code = parts
        if code == "~":
            if noisy_as_other:
                entries.append((rec_id, ClassLabel.OTHER))
            continue
        if code not in _LABEL_OF:
            raise RecordFormatError(f"{path}:{lineno}: unknown label {code!r}")
        entries.append((rec_id, _LABEL_OF[code]))
    return entries


def write_reference(entries, path) -> None:
    lines = [f"{rec_id},{ClassLabel(label).code}" for rec_id, label in entries]
    Path(path).write_text("".join(line + "\n" for line in lines))


def load_record(path, fs: float, id: str | None = None, label: ClassLabel | None = None) -> Record:
    """Read a ``.csv`` (one value per line) or ``.f32`` (little-endian float32) record."""
    path = Path(path)
    rec_id = id if id is not None else path.stem
    suffix = path.suffix.lower()
    if suffix == ".f32":
        raw = path.read_bytes()
        if len(raw) % 4:
            raise RecordFormatError(f"{path}: size {len(raw)} is not a multiple of 4")
        samples = np.frombuffer(raw, dtype="<f4").astype(np.float64)
    elif suffix == ".csv":
        values = []
        for lineno, line in enumerate(path.read_text().splitlines(), start=1):
            line = line.strip()
            if not line:
                continue
            try:
                values.append(float(line))
            except ValueError:
                raise RecordFormatError(f"{path}:{lineno}: not a number: {line!r}") from None
        samples = np.array(values, dtype=np.float64)
    else:
        raise RecordFormatError(f"{path}: unsupported extension {path.suffix!r}")
    if samples.size == 0:
        raise RecordFormatError(f"{path}: empty record")
    if not np.all(np.isfinite(samples)):
        raise RecordFormatError(f"{path}: NaN or infinite sample")
    return Record(rec_id, samples, fs, label)


def save_record(record: Record, path) -> None:
    path = Path(path)
    if path.suffix.lower() == ".f32":
        path.write_bytes(np.asarray(record.samples, dtype="<f4").tobytes())
    elif path.suffix.lower() == ".csv":
        path.write_text("".join(f"{v!r}\n" for v in record.samples.tolist()))
    else:
        raise RecordFormatError(f"{path}: unsupported extension {path.suffix!r}")


def find_record_file(data_dir, rec_id: str) -> Path:
    data_dir = Path(data_dir)
    for ext in (".f32", ".csv"):
        candidate = data_dir / f"{rec_id}{ext}"
        if candidate.exists():
            return candidate
    raise FileNotFoundError(f"no record file for {rec_id!r} in {data_dir}")


def load_dataset(data_dir, reference, fs: float = 300.0, noisy_as_other: bool = False) -> Dataset:
    entries = load_reference(reference, noisy_as_other=noisy_as_other)
    return Dataset(tuple(load_record(find_record_file(data_dir, rid), fs, rid, label)
                         for rid, label in entries))


def split_dataset(ds: Dataset, train_fraction: float = 0.7, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Seeded per-class shuffle split; records keep their original relative order."""
    if not 0 < train_fraction <= 1:
        raise ValueError(f"train_fraction must lie in (0, 1], got {train_fraction}")
    if len(ds) == 0:
        raise ValueError("cannot split an empty dataset")
    rng = np.random.default_rng(seed)
    by_class: dict = {}
    for idx, rec in enumerate(ds.records):
        by_class.setdefault(rec.label, []).append(idx)
    # fixed class order keeps the generator stream reproducible
    order = sorted(by_class, key=lambda lab: -1 if lab is None else int(lab))
    quotas = _apportion([len(by_class[lab]) for lab in order], train_fraction)
    train_idx = set()
    for label, n_train in zip(order, quotas):
        members = np.array(by_class[label])
        train_idx.update(rng.permutation(members)[:n_train].tolist())
    train = tuple(r for i, r in enumerate(ds.records) if i in train_idx)
    val = tuple(r for i, r in enumerate(ds.records) if i not in train_idx)
    return Dataset(train), Dataset(val)


def _apportion(counts, fraction):
    """Largest-remainder rounding: per-class quotas within 1 of ``fraction * count``
    that sum to ``round(fraction * total)`` (halves round up)."""
    exact = [fraction * c for c in counts]
    quotas = [int(np.floor(e)) for e in exact]
    target = int(np.floor(fraction * sum(counts) + 0.5))
    remainders = sorted(range(len(counts)), key=lambda i: (-(exact[i] - quotas[i]), i))
    for i in remainders[:max(target - sum(quotas), 0)]:
        quotas[i] += 1
    return quotas

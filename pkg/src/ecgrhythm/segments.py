"""Fixed-length beat-group segmentation and the binary segment pack format."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .preprocess import FilterSpec, FirFilter, design_bandpass, preprocess_record, MAX_LEN
from .qrs import BeatAnnotations, DualSlopeParams, detect_r_peaks
from .records import ClassLabel, Dataset, Record


@dataclass(frozen=True)
class SegmentConfig:
    seg_len: int = 1000
    min_beats: int = 5
    lead_in: int = 100

    def __post_init__(self):
        if self.seg_len <= 0:
            raise ValueError("seg_len must be positive")
        if self.min_beats < 2:
            raise ValueError("min_beats must be >= 2")
        if not 0 <= self.lead_in < self.seg_len:
            raise ValueError("lead_in must lie in [0, seg_len)")


@dataclass(frozen=True)
class Segment:
    record_id: str
    samples: np.ndarray
    peak_offsets: np.ndarray
    label: ClassLabel
    start: int = 0

    def check(self, cfg: SegmentConfig) -> None:
        """Raise if the segment violates its length / beat-count invariants."""
        if self.samples.shape != (cfg.seg_len,):
            raise AssertionError(f"segment of {self.record_id!r} has shape {self.samples.shape}")
        offs = self.peak_offsets
        if offs.size < cfg.min_beats:
            raise AssertionError(f"segment of {self.record_id!r} holds {offs.size} < {cfg.min_beats} peaks")
        if np.any(np.diff(offs) <= 0) or offs[0] < 0 or offs[-1] >= cfg.seg_len:
            raise AssertionError(f"segment of {self.record_id!r} has invalid peak offsets")


def segment_record(rec: Record, ann: BeatAnnotations | np.ndarray,
                   cfg: SegmentConfig = SegmentConfig()) -> list[Segment]:
    """Cut one record into segments of ``min_beats`` consecutive beats.

    Beat groups advance by ``min_beats - 1`` peaks, so neighbouring groups
    share their boundary beat. A group is kept when its span is below
    ``seg_len - lead_in`` (a span of exactly that much would put the last
    peak one sample past the window); its window starts ``lead_in`` samples
    before the first peak, clamped to the record.
    """
    if rec.label is None:
        raise ValueError(f"record {rec.id!r} has no label")
    peaks = np.asarray(getattr(ann, "peaks", ann), dtype=np.int64)
    n = len(rec)
    if n < cfg.seg_len:
        return []
    stride = cfg.min_beats - 1
    capacity = cfg.seg_len - cfg.lead_in
    out = []
    for j in range(0, peaks.size - cfg.min_beats + 1, stride):
        group = peaks[j:j + cfg.min_beats]
        if group[-1] - group[0] >= capacity:
            continue
        start = int(np.clip(group[0] - cfg.lead_in, 0, n - cfg.seg_len))
        stop = start + cfg.seg_len
        inside = peaks[(peaks >= start) & (peaks < stop)] - start
        seg = Segment(rec.id, rec.samples[start:stop].copy(), inside, rec.label, start)
        seg.check(cfg)
        out.append(seg)
    return out


def segment_dataset(ds: Dataset, filter_spec: FilterSpec | None = None,
                    params: DualSlopeParams = DualSlopeParams(),
                    cfg: SegmentConfig = SegmentConfig(), max_len: int = MAX_LEN,
                    preprocessed: bool = False):
    """Preprocess, detect and segment every record.

    Returns ``(segments, index)`` where ``index[record_id]`` is the
    ``(begin, end)`` slice of that record's segments in ``segments``.
    Records yielding no segment are absent from the index.
    """
    segments: list[Segment] = []
    index: dict[str, tuple[int, int]] = {}
    filt: FirFilter | None = None
    for rec in ds:
        if rec.label is None:
            raise ValueError(f"record {rec.id!r} has no label")
        if not preprocessed:
            spec = filter_spec or FilterSpec(fs=rec.fs)
            if filt is None or spec.fs != rec.fs:
                filt = design_bandpass(spec)
            rec = preprocess_record(rec, spec, max_len, filt=filt)
        ann = detect_r_peaks(rec.samples, rec.fs, params)
        segs = segment_record(rec, ann, cfg)
        if segs:
            index[rec.id] = (len(segments), len(segments) + len(segs))
            segments.extend(segs)
    return segments, index


def class_counts(segments) -> dict[ClassLabel, int]:
    counts = {label: 0 for label in ClassLabel}
    for s in segments:
        counts[s.label] += 1
    return counts


def segments_to_arrays(segments) -> tuple[np.ndarray, np.ndarray]:
    x = np.stack([s.samples for s in segments]).astype(np.float32) if segments else np.zeros((0, 0), np.float32)
    y = np.array([int(s.label) for s in segments], dtype=np.int64)
    return x, y


def build_index(segments) -> dict[str, tuple[int, int]]:
    """Recover per-record contiguous ranges from an ordered segment list."""
    index: dict[str, tuple[int, int]] = {}
    for i, s in enumerate(segments):
        begin, _ = index.get(s.record_id, (i, i))
        if s.record_id in index and index[s.record_id][1] != i:
            raise ValueError(f"segments of {s.record_id!r} are not contiguous")
        index[s.record_id] = (begin, i + 1)
    return index


# pack layout (little-endian):
#   b"ECGS", u32 seg_len, u32 count,
#   per segment: u32 id_len, id bytes, u8 label, f32[seg_len] samples, u32 n_peaks, u32[n_peaks] offsets
_PACK_MAGIC = b"ECGS"


def save_segments(segments, path, seg_len: int | None = None) -> None:
    if seg_len is None:
        seg_len = segments[0].samples.size if segments else 0
    parts = [_PACK_MAGIC, struct.pack("<II", seg_len, len(segments))]
    for s in segments:
        if s.samples.size != seg_len:
            raise ValueError(f"segment of {s.record_id!r} has length {s.samples.size} != {seg_len}")
        rid = s.record_id.encode("utf-8")
        parts.append(struct.pack("<I", len(rid)) + rid + struct.pack("<B", int(s.label)))
        parts.append(np.asarray(s.samples, dtype="<f4").tobytes())
        parts.append(struct.pack("<I", s.peak_offsets.size))
        parts.append(np.asarray(s.peak_offsets, dtype="<u4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_segments(path) -> list[Segment]:
    blob = Path(path).read_bytes()
    if blob[:4] != _PACK_MAGIC:
        raise ValueError(f"{path}: not a segment pack")
    seg_len, count = struct.unpack_from("<II", blob, 4)
    pos = 12
    out = []
    try:
        for _ in range(count):
            (id_len,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            rid = blob[pos:pos + id_len].decode("utf-8")
            pos += id_len
            (label,) = struct.unpack_from("<B", blob, pos)
            pos += 1
            samples = np.frombuffer(blob, dtype="<f4", count=seg_len, offset=pos).astype(np.float32)
            pos += 4 * seg_len
            (n_peaks,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            offsets = np.frombuffer(blob, dtype="<u4", count=n_peaks, offset=pos).astype(np.int64)
            pos += 4 * n_peaks
            out.append(Segment(rid, samples, offsets, ClassLabel(label)))
    except (struct.error, ValueError) as exc:
        raise ValueError(f"{path}: corrupt segment pack ({exc})") from None
    if pos != len(blob):
        raise ValueError(f"{path}: {len(blob) - pos} trailing bytes")
    return out

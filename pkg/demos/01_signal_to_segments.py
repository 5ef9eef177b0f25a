"""
From a raw trace to training segments
=====================================

One synthetic record walks through standardization, band-pass filtering,
R-peak detection and beat-group segmentation.
"""

import numpy as np

from ecgrhythm import (FilterSpec, Rhythm, SynthSpec, design_bandpass, detect_r_peaks,
                       frequency_response, preprocess_record, rr_intervals, segment_record,
                       synth_ecg)

# A 30 s irregular record at 95 bpm, sampled at 300 Hz. ``truth`` holds the
# sample index of every R apex the generator placed.
rec, truth = synth_ecg(SynthSpec(mean_hr=95, rhythm=Rhythm.IRREGULAR, seed=11))
print(rec.id, len(rec), "samples,", truth.size, "beats, label", rec.label.name)

# The band-pass keeps 3-45 Hz. Its response at a few probe frequencies:
filt = design_bandpass(FilterSpec())
for f, h in zip((0.5, 3, 10, 40, 60), frequency_response(filt, [0.5, 3, 10, 40, 60], 300.0)):
    print(f"  |H({f:>4} Hz)| = {h:.4f}")

# standardize -> filter -> truncate, then detect beats on the clean signal
clean = preprocess_record(rec)
ann = detect_r_peaks(clean.samples, clean.fs)
print("detected", ann.peaks.size, "peaks; max offset from truth",
      int(np.max(np.abs(ann.peaks - truth))), "samples")

rr = rr_intervals(ann.peaks, clean.fs)
print(f"R-R mean {rr.mean():.3f} s, std {rr.std():.3f} s")

# Groups of five beats (four R-R intervals), 1000 samples each
segs = segment_record(clean, ann)
print(len(segs), "segments; starts", [s.start for s in segs])
print("peaks in first segment:", segs[0].peak_offsets.tolist())

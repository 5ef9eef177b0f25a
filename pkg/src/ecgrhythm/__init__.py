"""Single-lead ECG rhythm classification with numpy CNN/BiLSTM models.

Pipeline: :mod:`records` -> :mod:`preprocess` -> :mod:`qrs` -> :mod:`segments`
-> :mod:`models` / :mod:`training`, with :mod:`synth` providing labelled
synthetic data and :mod:`cli` wiring the stages into commands.
"""

__version__ = "0.1.0"

from .records import (CLASS_NAMES, ClassLabel, Dataset, Record, RecordFormatError, load_dataset,
                      load_record, load_reference, save_record, split_dataset)
from .preprocess import (FilterSpec, FirFilter, apply_filter, design_bandpass, frequency_response,
                         preprocess_record, standardize, truncate)
from .qrs import BeatAnnotations, DualSlopeParams, detect_r_peaks, dual_slope_score, rr_intervals
from .segments import Segment, SegmentConfig, segment_dataset, segment_record, segments_to_arrays
from .losses import FocalConfig, cross_entropy, focal_loss, focal_loss_grad
from .metrics import (ConfusionMatrix, confusion_matrix, f1, metrics_report, specificity,
                      weighted_f1)
from .models import CnnBackboneConfig, ECGClassifier, ModelConfig, build_model
from .training import Adam, AdamState, TrainConfig, TrainHistory, adam_step, evaluate, train
from .synth import Rhythm, SynthDatasetSpec, SynthSpec, synth_dataset, synth_ecg

__all__ = [
    "Adam", "AdamState", "BeatAnnotations", "CLASS_NAMES", "ClassLabel", "CnnBackboneConfig",
    "ConfusionMatrix", "Dataset", "DualSlopeParams", "ECGClassifier", "FilterSpec", "FirFilter",
    "FocalConfig", "ModelConfig", "Record", "RecordFormatError", "Rhythm", "Segment",
    "SegmentConfig", "SynthDatasetSpec", "SynthSpec", "TrainConfig", "TrainHistory",
    "adam_step", "apply_filter", "build_model", "confusion_matrix", "cross_entropy",
    "design_bandpass", "detect_r_peaks", "dual_slope_score", "evaluate", "f1", "focal_loss",
    "focal_loss_grad", "frequency_response", "load_dataset", "load_record", "load_reference",
    "metrics_report", "preprocess_record", "rr_intervals", "save_record", "segment_dataset",
    "segment_record", "segments_to_arrays", "specificity", "split_dataset", "standardize",
    "synth_dataset", "synth_ecg", "train", "truncate", "weighted_f1",
]

"""Confusion matrices and the per-class / support-weighted scores derived from them."""

from __future__ import annotations

import json

import numpy as np

from .records import CLASS_NAMES


class ConfusionMatrix:
    """``counts[true, predicted]`` for ``K`` classes."""

    def __init__(self, counts):
        counts = np.asarray(counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ValueError(f"confusion matrix must be square, got {counts.shape}")
        if np.any(counts < 0):
            raise ValueError("confusion counts must be non-negative")
        self.counts = counts

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def tp(self, k):
        return int(self.counts[k, k])

    def fn(self, k):
        return int(self.counts[k].sum() - self.counts[k, k])

    def fp(self, k):
        return int(self.counts[:, k].sum() - self.counts[k, k])

    def tn(self, k):
        return self.total - self.tp(k) - self.fn(k) - self.fp(k)

    def support(self, k):
        return int(self.counts[k].sum())

    def __eq__(self, other):
        return isinstance(other, ConfusionMatrix) and np.array_equal(self.counts, other.counts)

    def __repr__(self):
        return f"ConfusionMatrix({self.counts.tolist()})"


def confusion_matrix(preds, labels, num_classes: int = 3) -> ConfusionMatrix:
    preds = np.asarray(preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if preds.shape != labels.shape:
        raise ValueError("preds and labels must have the same length")
    for name, v in (("preds", preds), ("labels", labels)):
        if v.size and (v.min() < 0 or v.max() >= num_classes):
            raise ValueError(f"{name} contain a class index outside [0, {num_classes})")
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (labels, preds), 1)
    return ConfusionMatrix(counts)


def specificity(cm: ConfusionMatrix, k: int) -> float:
    tn, fp = cm.tn(k), cm.fp(k)
    return 1.0 if tn + fp == 0 else tn / (tn + fp)


def precision(cm: ConfusionMatrix, k: int) -> float:
    tp, fp = cm.tp(k), cm.fp(k)
    return 0.0 if tp + fp == 0 else tp / (tp + fp)


def recall(cm: ConfusionMatrix, k: int) -> float:
    tp, fn = cm.tp(k), cm.fn(k)
    return 0.0 if tp + fn == 0 else tp / (tp + fn)


def f1(cm: ConfusionMatrix, k: int) -> float:
    tp, fn, fp = cm.tp(k), cm.fn(k), cm.fp(k)
    denom = 2 * tp + fn + fp
    return 0.0 if denom == 0 else 2 * tp / denom


def weighted_f1(cm: ConfusionMatrix) -> float:
    total = cm.total
    if total == 0:
        return 0.0
    return sum(cm.support(k) * f1(cm, k) for k in range(cm.num_classes)) / total


def accuracy(cm: ConfusionMatrix) -> float:
    return 0.0 if cm.total == 0 else float(np.trace(cm.counts)) / cm.total


def metrics_report(cm: ConfusionMatrix, class_names=CLASS_NAMES) -> dict:
    per_class = {}
    for k in range(cm.num_classes):
        name = class_names[k] if k < len(class_names) else str(k)
        per_class[name] = {
            "precision": precision(cm, k),
            "recall": recall(cm, k),
            "f1": f1(cm, k),
            "specificity": specificity(cm, k),
            "support": cm.support(k),
        }
    return {
        "per_class": per_class,
        "weighted_f1": weighted_f1(cm),
        "accuracy": accuracy(cm),
        "confusion_matrix": cm.counts.tolist(),
        "total": cm.total,
    }


def report_to_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)

"""Adam, the focal-loss training loop, history export and segment/record evaluation."""

from __future__ import annotations

import csv
import io
import math
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .losses import FocalConfig, focal_loss, focal_loss_grad
from .metrics import (ConfusionMatrix, confusion_matrix, f1, metrics_report, specificity,
                      weighted_f1)
from .models import ECGClassifier
from .records import CLASS_NAMES


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 64
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    gamma: float = 2.0
    seed: int = 0
    train_fraction: float = 0.7
    eval_batch_size: int = 256

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.lr >= 0:
            raise ValueError("lr must be non-negative")
        FocalConfig(self.gamma)


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], 0)


def adam_step(params, grads, state: AdamState, lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update, applied in place. Returns ``(params, state)``."""
    if not (len(params) == len(grads) == len(state.m) == len(state.v)):
        raise ValueError("params, grads and moment lists differ in length")
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError(f"shape mismatch: param {p.shape}, grad {g.shape}, moment {m.shape}")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        step = (lr / c1) * m / (np.sqrt(v / c2) + eps)
        p -= step.astype(p.dtype, copy=False)
    return params, state


class Adam:
    """Adam over a module's ``Parameter`` objects."""

    def __init__(self, parameters, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.parameters = list(parameters)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.state = AdamState.zeros_like([p.value for p in self.parameters])

    def step(self):
        adam_step([p.value for p in self.parameters], [p.grad for p in self.parameters],
                  self.state, self.lr, self.beta1, self.beta2, self.eps)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_weighted_f1: float
    val_f1: tuple
    val_specificity: tuple
    val_accuracy: float


HISTORY_COLUMNS = ("epoch", "train_loss", "val_loss", "val_weighted_f1",
                   "val_specificity_N", "val_specificity_A", "val_specificity_O")


@dataclass
class TrainHistory:
    epochs: list = field(default_factory=list)

    def __len__(self):
        return len(self.epochs)

    def __getitem__(self, i) -> EpochRecord:
        return self.epochs[i]

    def append(self, rec: EpochRecord):
        self.epochs.append(rec)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(HISTORY_COLUMNS)
        for e in self.epochs:
            values = (e.train_loss, e.val_loss, e.val_weighted_f1, *e.val_specificity)
            writer.writerow([e.epoch, *(repr(float(v)) for v in values)])
        return buf.getvalue()

    def to_records(self) -> list[dict]:
        return [{"epoch": e.epoch, "train_loss": e.train_loss, "val_loss": e.val_loss,
                 "val_weighted_f1": e.val_weighted_f1, "val_f1": list(e.val_f1),
                 "val_specificity": list(e.val_specificity), "val_accuracy": e.val_accuracy}
                for e in self.epochs]


@dataclass
class TrainResult:
    model: ECGClassifier
    history: TrainHistory
    best_state: "OrderedDict[str, np.ndarray]"
    best_epoch: int
    final_state: "OrderedDict[str, np.ndarray]" = None


def _snapshot(model) -> "OrderedDict[str, np.ndarray]":
    return OrderedDict((k, v.copy()) for k, v in model.state_dict().items())


def validation_summary(model: ECGClassifier, x, y, gamma: float, batch_size: int = 256):
    """Eval-mode loss and confusion matrix on a labelled segment set."""
    probs = model.predict_proba(x, batch_size)
    loss = focal_loss(probs.astype(np.float64), y, gamma)
    cm = confusion_matrix(probs.argmax(axis=1), y, model.cfg.num_classes)
    return loss, cm, probs


def train(model: ECGClassifier, x_train, y_train, x_val=None, y_val=None,
          cfg: TrainConfig = TrainConfig(), log=None) -> TrainResult:
    """Minibatch focal-loss training with Adam; validates after every epoch.

    The model is left holding its final-epoch weights; ``best_state`` holds the
    weights of the epoch with the highest validation weighted F1 (earliest on ties).
    """
    x_train = np.asarray(x_train, dtype=model.dtype)
    y_train = np.asarray(y_train, dtype=np.int64)
    if x_train.shape[0] == 0:
        raise TrainingError("training set is empty")
    has_val = x_val is not None and len(x_val) > 0
    if has_val:
        x_val = np.asarray(x_val, dtype=model.dtype)
        y_val = np.asarray(y_val, dtype=np.int64)
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model.parameters(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    history = TrainHistory()
    best_f1, best_epoch, best_state = -math.inf, 0, None
    n = x_train.shape[0]
    K = model.cfg.num_classes
    for epoch in range(1, cfg.epochs + 1):
        model.train()
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb, yb = x_train[idx], y_train[idx]
            model.zero_grad()
            probs = model.forward(xb)
            loss = focal_loss(probs.astype(np.float64), yb, cfg.gamma)
            if not math.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss {loss} at epoch {epoch}, batch starting at {start}")
            model.backward(focal_loss_grad(probs, yb, cfg.gamma))
            opt.step()
            total += loss * idx.size
        train_loss = total / n
        if has_val:
            val_loss, cm, _ = validation_summary(model, x_val, y_val, cfg.gamma, cfg.eval_batch_size)
        else:
            val_loss, cm = float("nan"), ConfusionMatrix(np.zeros((K, K), dtype=np.int64))
        rec = EpochRecord(epoch, train_loss, val_loss, weighted_f1(cm) if has_val else float("nan"),
                          tuple(f1(cm, k) for k in range(K)),
                          tuple(specificity(cm, k) for k in range(K)),
                          float(np.trace(cm.counts)) / max(cm.total, 1))
        history.append(rec)
        if log is not None:
            log(f"epoch {epoch:3d}  train_loss {train_loss:.5f}  val_loss {val_loss:.5f}  "
                f"val_wF1 {rec.val_weighted_f1:.4f}")
        score = rec.val_weighted_f1 if has_val else -train_loss
        if score > best_f1:
            best_f1, best_epoch, best_state = score, epoch, _snapshot(model)
    return TrainResult(model, history, best_state, best_epoch, _snapshot(model))


def aggregate_records(probs, index) -> "OrderedDict[str, tuple[int, np.ndarray]]":
    """Record-level decision: argmax of the mean segment probability (lowest index on ties)."""
    out = OrderedDict()
    for rec_id, (begin, end) in index.items():
        mean = np.asarray(probs[begin:end], dtype=np.float64).mean(axis=0)
        out[rec_id] = (int(np.argmax(mean)), mean)
    return out


def evaluate(model: ECGClassifier, x, y, index=None, batch_size: int = 256,
             gamma: float = 2.0):
    """Segment-level and record-level metric reports.

    ``index`` maps record id -> ``(begin, end)`` range of its segments; when it
    is omitted the record report is ``None``.
    """
    x = np.asarray(x, dtype=model.dtype)
    y = np.asarray(y, dtype=np.int64)
    if x.shape[0] == 0:
        raise ValueError("nothing to evaluate")
    loss, cm, probs = validation_summary(model, x, y, gamma, batch_size)
    seg_report = metrics_report(cm)
    seg_report["loss"] = loss
    rec_report = None
    if index is not None:
        agg = aggregate_records(probs, index)
        preds, labels = [], []
        for rec_id, (pred, _) in agg.items():
            begin, end = index[rec_id]
            rec_labels = set(y[begin:end].tolist())
            if len(rec_labels) != 1:
                raise ValueError(f"record {rec_id!r} has segments with mixed labels")
            preds.append(pred)
            labels.append(rec_labels.pop())
        rec_report = metrics_report(confusion_matrix(preds, labels, model.cfg.num_classes))
    return seg_report, rec_report


def history_row(report: dict) -> tuple:
    """The validation fields of a history row, recomputed from an evaluation report."""
    return (report["loss"], report["weighted_f1"],
            *(report["per_class"][name]["specificity"] for name in CLASS_NAMES))

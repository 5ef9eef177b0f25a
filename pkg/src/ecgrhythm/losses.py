"""Cross-entropy and focal loss on softmax probabilities, with gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class FocalConfig:
    gamma: float = 2.0

    def __post_init__(self):
        if not self.gamma >= 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")


def _target_probs(probs, targets):
    probs = np.asarray(probs)
    targets = np.asarray(targets, dtype=np.int64)
    if probs.ndim != 2 or targets.shape != (probs.shape[0],):
        raise ValueError(f"probs {probs.shape} and targets {targets.shape} disagree")
    if targets.size and (targets.min() < 0 or targets.max() >= probs.shape[1]):
        raise ValueError(f"target index outside [0, {probs.shape[1]})")
    return probs[np.arange(targets.size), targets]


def cross_entropy(probs, targets) -> float:
    p = np.clip(_target_probs(probs, targets), PROB_FLOOR, 1.0)
    return float(np.mean(-np.log(p)))


def focal_terms(probs, targets, gamma: float = 2.0) -> np.ndarray:
    """Per-example focal loss ``-(1 - p)^gamma * log(p)`` of the target probability."""
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    p = np.clip(_target_probs(probs, targets), PROB_FLOOR, 1.0)
    return -((1.0 - p) ** gamma) * np.log(p)


def focal_loss(probs, targets, cfg: FocalConfig | float = FocalConfig()) -> float:
    gamma = cfg.gamma if isinstance(cfg, FocalConfig) else float(cfg)
    return float(np.mean(focal_terms(probs, targets, gamma)))


def focal_loss_grad(probs, targets, cfg: FocalConfig | float = FocalConfig()) -> np.ndarray:
    """Gradient of the mean focal loss with respect to ``probs``.

    Only the target column is non-zero. Inside the clamp it is
    ``(gamma (1-p)^(gamma-1) log p - (1-p)^gamma / p) / B``; below the clamp
    the loss is flat in ``p``.
    """
    gamma = cfg.gamma if isinstance(cfg, FocalConfig) else float(cfg)
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    probs = np.asarray(probs)
    targets = np.asarray(targets, dtype=np.int64)
    raw = _target_probs(probs, targets)
    p = np.clip(raw, PROB_FLOOR, 1.0)
    q = 1.0 - p
    log_p = np.log(p)
    if gamma == 0:
        focus_term = np.zeros_like(p)
    else:
        # (1-p)^(gamma-1) log p -> 0 as p -> 1 for every gamma > 0
        with np.errstate(divide="ignore", invalid="ignore"):
            focus_term = np.where(q > 0, gamma * q ** (gamma - 1) * log_p, 0.0)
    d = (focus_term - q ** gamma / p) / max(targets.size, 1)
    d = np.where(raw < PROB_FLOOR, 0.0, d)
    grad = np.zeros_like(probs, dtype=np.result_type(probs.dtype, np.float64))
    grad[np.arange(targets.size), targets] = d
    return grad.astype(probs.dtype, copy=False)

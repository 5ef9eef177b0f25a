"""Minimal numpy neural-network kernels with reverse-mode gradients."""

from .layers import (
    BatchNorm1d,
    Conv1d,
    Dense,
    Dropout,
    GlobalAvgPool1d,
    MaxPool1d,
    Module,
    Parameter,
    ReLU,
    Sequential,
    Softmax,
    Transpose,
    softmax,
    softmax_backward,
)
from .lstm import BiLSTM, LSTMDirection
from .gradcheck import gradient_check, max_error

__all__ = [
    "BatchNorm1d", "BiLSTM", "Conv1d", "Dense", "Dropout", "GlobalAvgPool1d",
    "LSTMDirection", "MaxPool1d", "Module", "Parameter", "ReLU", "Sequential",
    "Softmax", "Transpose", "gradient_check", "max_error", "softmax", "softmax_backward",
]

"""The three classifier layouts: BiLSTM baseline, CNN||BiLSTM concat, CNN->BiLSTM cascade."""

from __future__ import annotations

import json
from collections import OrderedDict
from dataclasses import asdict, dataclass, field

import numpy as np

from .nn import (BatchNorm1d, BiLSTM, Conv1d, Dense, Dropout, GlobalAvgPool1d, MaxPool1d,
                 Module, ReLU, Sequential, Softmax, Transpose)

SCHEMES = ("baseline", "concat", "cascade")
_SCHEME_ALIASES = {"a": "concat", "b": "cascade", "lstm": "baseline", "bilstm": "baseline"}


@dataclass(frozen=True)
class ConvSpec:
    out_channels: int
    kernel: int
    pool: bool


DEFAULT_CNN_LAYERS = (ConvSpec(32, 7, True), ConvSpec(64, 5, True),
                      ConvSpec(128, 5, False), ConvSpec(256, 3, False))


@dataclass(frozen=True)
class CnnBackboneConfig:
    layers: tuple = DEFAULT_CNN_LAYERS
    dropout: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(
            l if isinstance(l, ConvSpec) else ConvSpec(**l) if isinstance(l, dict) else ConvSpec(*l)
            for l in self.layers))

    @property
    def out_channels(self) -> int:
        return self.layers[-1].out_channels

    def out_length(self, input_len: int) -> int:
        n = input_len
        for layer in self.layers:
            if layer.pool:
                n = (n - 2) // 2 + 1
        return n

    @classmethod
    def with_channels(cls, channels, kernels=(7, 5, 5, 3), pools=(True, True, False, False),
                      dropout=0.2) -> "CnnBackboneConfig":
        return cls(tuple(ConvSpec(c, k, p) for c, k, p in zip(channels, kernels, pools)), dropout)


@dataclass(frozen=True)
class ModelConfig:
    scheme: str = "cascade"
    cnn: CnnBackboneConfig = field(default_factory=CnnBackboneConfig)
    lstm_hidden: int = 100
    lstm_dropout: float = 0.2
    num_classes: int = 3
    input_len: int = 1000

    def __post_init__(self):
        scheme = _SCHEME_ALIASES.get(self.scheme.lower(), self.scheme.lower())
        if scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        object.__setattr__(self, "scheme", scheme)
        if isinstance(self.cnn, dict):
            object.__setattr__(self, "cnn", CnnBackboneConfig(**self.cnn))
        if self.lstm_hidden < 1 or self.num_classes < 2 or self.input_len < 1:
            raise ValueError("lstm_hidden, num_classes and input_len must be positive")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        return cls(**json.loads(text))


def build_backbone(cfg: CnnBackboneConfig, rng, dropout_seeds, dtype) -> Sequential:
    blocks = []
    in_ch = 1
    for spec, seed in zip(cfg.layers, dropout_seeds):
        parts = OrderedDict(conv=Conv1d(in_ch, spec.out_channels, spec.kernel, padding="same",
                                        rng=rng, dtype=dtype),
                            bn=BatchNorm1d(spec.out_channels, dtype=dtype),
                            relu=ReLU())
        if spec.pool:
            parts["pool"] = MaxPool1d(2, 2)
        parts["drop"] = Dropout(cfg.dropout, seed=seed)
        blocks.append(Sequential(*parts.values(), names=list(parts)))
        in_ch = spec.out_channels
    return Sequential(*blocks)


class ECGClassifier(Module):
    """Segment batch ``(B, L)`` -> class probabilities ``(B, K)``."""

    def __init__(self, cfg: ModelConfig, seed: int = 0, dtype=np.float32):
        super().__init__()
        self.cfg = cfg
        self.dtype = dtype
        rng = np.random.default_rng(seed)
        drop_seeds = np.random.SeedSequence(seed).generate_state(len(cfg.cnn.layers) + 1).tolist()
        H = cfg.lstm_hidden
        self.cnn = self.gap = self.to_seq = None
        if cfg.scheme in ("concat", "cascade"):
            self.cnn = build_backbone(cfg.cnn, rng, drop_seeds[:-1], dtype)
        if cfg.scheme == "concat":
            self.gap = GlobalAvgPool1d()
        if cfg.scheme == "cascade":
            self.to_seq = Transpose()
        lstm_in = cfg.cnn.out_channels if cfg.scheme == "cascade" else 1
        self.lstm = BiLSTM(lstm_in, H, rng=rng, dtype=dtype)
        self.lstm_drop = Dropout(cfg.lstm_dropout, seed=drop_seeds[-1])
        self.head = Dense(self.feature_dim, cfg.num_classes, rng=rng, dtype=dtype)
        self.softmax = Softmax()

    @property
    def feature_dim(self) -> int:
        """Width of the vector entering the final dense layer."""
        if self.cfg.scheme == "concat":
            return self.cfg.cnn.out_channels + self.cfg.lstm_hidden
        return self.cfg.lstm_hidden

    def children(self):
        kids = OrderedDict()
        if self.cnn is not None:
            kids["cnn"] = self.cnn
        kids["lstm"] = self.lstm
        kids["lstm_drop"] = self.lstm_drop
        kids["head"] = self.head
        return kids

    def _as_batch(self, x):
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim != 2:
            raise ValueError(f"expected a (batch, length) segment batch, got {x.shape}")
        return x

    def cnn_feature_map(self, x):
        return self.cnn.forward(self._as_batch(x)[:, None, :])

    def cnn_features(self, x):
        """Globally pooled CNN feature vector ``(B, C_last)``."""
        return self.cnn_feature_map(x).mean(axis=2)

    def features(self, x):
        """Input to the dense head (post-dropout)."""
        x = self._as_batch(x)
        scheme = self.cfg.scheme
        if scheme == "baseline":
            return self.lstm_drop.forward(self.lstm.forward(x[:, :, None]))
        fmap = self.cnn.forward(x[:, None, :])
        if scheme == "cascade":
            return self.lstm_drop.forward(self.lstm.forward(self.to_seq.forward(fmap)))
        spatial = self.gap.forward(fmap)
        temporal = self.lstm_drop.forward(self.lstm.forward(x[:, :, None]))
        return np.concatenate([spatial, temporal], axis=1)

    def logits(self, x):
        return self.head.forward(self.features(x))

    def forward(self, x):
        self._cache = True
        return self.softmax.forward(self.logits(x))

    def backward(self, grad_probs):
        self._require_cache()
        g = self.head.backward(self.softmax.backward(grad_probs))
        scheme = self.cfg.scheme
        if scheme == "baseline":
            return self.lstm.backward(self.lstm_drop.backward(g))[:, :, 0]
        if scheme == "cascade":
            g = self.to_seq.backward(self.lstm.backward(self.lstm_drop.backward(g)))
            return self.cnn.backward(g)[:, 0, :]
        C = self.cfg.cnn.out_channels
        dx = self.cnn.backward(self.gap.backward(g[:, :C]))[:, 0, :]
        dx += self.lstm.backward(self.lstm_drop.backward(g[:, C:]))[:, :, 0]
        return dx

    def predict_proba(self, x, batch_size: int = 256):
        """Eval-mode probabilities, computed in chunks; restores the previous mode."""
        was_training = self.training
        self.eval()
        try:
            x = self._as_batch(x)
            out = [self.forward(x[i:i + batch_size]) for i in range(0, x.shape[0], batch_size)]
            return np.concatenate(out) if out else np.zeros((0, self.cfg.num_classes), self.dtype)
        finally:
            self.train(was_training)

    def parameter_inventory(self) -> list[tuple[str, tuple]]:
        return [(name, tuple(p.shape)) for name, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(int(np.prod(shape)) for _, shape in self.parameter_inventory())


def expected_parameter_count(cfg: ModelConfig) -> int:
    """Closed-form parameter count for ``cfg`` (weights, biases, BN affine terms)."""
    H, K = cfg.lstm_hidden, cfg.num_classes
    cnn = 0
    in_ch = 1
    for spec in cfg.cnn.layers:
        cnn += spec.out_channels * in_ch * spec.kernel + spec.out_channels  # conv
        cnn += 2 * spec.out_channels  # BN gamma, beta
        in_ch = spec.out_channels

    def bilstm(f):
        return 2 * (f * 4 * H + H * 4 * H + 4 * H)

    if cfg.scheme == "baseline":
        return bilstm(1) + H * K + K
    if cfg.scheme == "concat":
        return cnn + bilstm(1) + (cfg.cnn.out_channels + H) * K + K
    return cnn + bilstm(cfg.cnn.out_channels) + H * K + K


def build_model(cfg: ModelConfig, seed: int = 0, dtype=np.float32) -> ECGClassifier:
    return ECGClassifier(cfg, seed=seed, dtype=dtype)

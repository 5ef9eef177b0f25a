"""Randomized finite-difference cases for every layer and both losses.

Each case builds a fresh double-precision fragment with seed-dependent shapes.
Piecewise-linear ops are held to the tight tolerance; anything with a curved
forward map gets the loose one.
"""

import numpy as np

from ecgrhythm.losses import cross_entropy, focal_loss, focal_loss_grad
from ecgrhythm.nn import (BatchNorm1d, BiLSTM, Conv1d, Dense, Dropout, GlobalAvgPool1d,
                          LSTMDirection, MaxPool1d, ReLU, Sequential, Softmax, Transpose,
                          gradient_check, max_error)

LINEAR_TOL = 1e-7
SMOOTH_TOL = 1e-4
LOSS_TOL = 1e-6
F64 = np.float64


def _away_from_zero(rng, shape, gap=0.05):
    x = rng.standard_normal(shape)
    return np.sign(x) * (np.abs(x) + gap)


def _distinct(rng, shape):
    # a random permutation of a spaced grid keeps pooling windows tie-free
    n = int(np.prod(shape))
    return (rng.permutation(n) * 0.1 - n * 0.05).reshape(shape)


def _dense(rng):
    b, i, o = rng.integers(1, 5), rng.integers(1, 7), rng.integers(1, 6)
    return Dense(i, o, rng=rng, dtype=F64), rng.standard_normal((b, i))


def _conv(rng):
    b, c_in, c_out = rng.integers(1, 4), rng.integers(1, 4), rng.integers(1, 4)
    k, stride = int(rng.integers(1, 6)), int(rng.integers(1, 3))
    length = int(rng.integers(k, 33))
    padding = ("valid", "same")[int(rng.integers(2))]
    layer = Conv1d(c_in, c_out, k, stride, padding, rng=rng, dtype=F64)
    layer.bias.value[:] = rng.standard_normal(c_out)
    return layer, rng.standard_normal((b, c_in, length))


def _maxpool(rng):
    b, c, length = rng.integers(1, 4), rng.integers(1, 4), rng.integers(2, 33)
    k = int(rng.integers(2, 4))
    if length < k:
        length = k
    return MaxPool1d(k, int(rng.integers(1, k + 1))), _distinct(rng, (b, c, length))


def _relu(rng):
    return ReLU(), _away_from_zero(rng, (rng.integers(1, 4), rng.integers(1, 4), rng.integers(1, 20)))


def _dropout(rng):
    layer = Dropout(float(rng.uniform(0.1, 0.6)), seed=int(rng.integers(1 << 30)))
    return layer, rng.standard_normal((rng.integers(1, 4), rng.integers(1, 4), rng.integers(1, 20)))


def _gap(rng):
    return GlobalAvgPool1d(), rng.standard_normal((rng.integers(1, 4), rng.integers(1, 5),
                                                   rng.integers(1, 20)))


def _transpose(rng):
    return Transpose(), rng.standard_normal((rng.integers(1, 4), rng.integers(1, 5),
                                             rng.integers(1, 9)))


def _batchnorm3d(rng):
    c = int(rng.integers(1, 5))
    layer = BatchNorm1d(c, dtype=F64)
    layer.gamma.value[:] = rng.uniform(0.5, 1.5, c)
    layer.beta.value[:] = rng.standard_normal(c)
    return layer, rng.standard_normal((rng.integers(2, 5), c, rng.integers(1, 16))) * 2 + 1


def _batchnorm2d(rng):
    c = int(rng.integers(1, 6))
    layer = BatchNorm1d(c, dtype=F64)
    layer.gamma.value[:] = rng.uniform(0.5, 1.5, c)
    return layer, rng.standard_normal((rng.integers(2, 6), c))


def _softmax(rng):
    return Softmax(), rng.standard_normal((rng.integers(1, 5), rng.integers(2, 6))) * 2


def _lstm(rng):
    b, t, f, h = rng.integers(1, 4), rng.integers(1, 8), rng.integers(1, 4), rng.integers(1, 6)
    return LSTMDirection(f, h, rng=rng, dtype=F64), rng.standard_normal((b, t, f))


def _bilstm(rng):
    b, t, f, h = rng.integers(1, 4), rng.integers(1, 8), rng.integers(1, 4), rng.integers(1, 6)
    layer = BiLSTM(f, h, rng=rng, dtype=F64)
    for p in layer.parameters():
        p.value += 0.1 * rng.standard_normal(p.value.shape)
    return layer, rng.standard_normal((b, t, f))


def _conv_block(rng):
    c_in, c_out = int(rng.integers(1, 3)), int(rng.integers(1, 4))
    layer = Sequential(Conv1d(c_in, c_out, 3, padding="same", rng=rng, dtype=F64),
                       BatchNorm1d(c_out, dtype=F64), ReLU(), MaxPool1d(2, 2),
                       Dropout(0.2, seed=int(rng.integers(1 << 30))))
    return layer, rng.standard_normal((rng.integers(2, 4), c_in, rng.integers(4, 24)))


LAYER_CASES = {
    "dense": (_dense, LINEAR_TOL),
    "conv1d": (_conv, LINEAR_TOL),
    "maxpool1d": (_maxpool, LINEAR_TOL),
    "relu": (_relu, LINEAR_TOL),
    "dropout": (_dropout, LINEAR_TOL),
    "global_avg_pool": (_gap, LINEAR_TOL),
    "transpose": (_transpose, LINEAR_TOL),
    "batchnorm_3d": (_batchnorm3d, SMOOTH_TOL),
    "batchnorm_2d": (_batchnorm2d, SMOOTH_TOL),
    "softmax": (_softmax, SMOOTH_TOL),
    "lstm_direction": (_lstm, SMOOTH_TOL),
    "bilstm": (_bilstm, SMOOTH_TOL),
    "conv_block": (_conv_block, SMOOTH_TOL),
}


def run_layer_case(name: str, seed: int) -> tuple[float, float]:
    """Returns ``(max relative error, tolerance)`` for one seeded case."""
    build, tol = LAYER_CASES[name]
    rng = np.random.default_rng([seed, sum(map(ord, name))])
    layer, x = build(rng)
    layer.train()
    return max_error(gradient_check(layer, x, seed=seed)), tol


def _random_probs(rng, b, k):
    logits = rng.standard_normal((b, k)) * 1.5
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def run_loss_case(loss: str, seed: int, gamma: float = 2.0, eps: float = 1e-6) -> float:
    """Central-difference check of the loss gradient w.r.t. the probabilities."""
    rng = np.random.default_rng([seed, 7])
    b, k = int(rng.integers(1, 9)), int(rng.integers(2, 6))
    probs = _random_probs(rng, b, k)
    targets = rng.integers(0, k, b)
    if loss == "cross_entropy":
        value, gamma = (lambda p: cross_entropy(p, targets)), 0.0
    else:
        value = lambda p: focal_loss(p, targets, gamma)
    analytic = focal_loss_grad(probs, targets, gamma)
    numeric = np.zeros_like(probs)
    for idx in np.ndindex(probs.shape):
        hi, lo = probs.copy(), probs.copy()
        hi[idx] += eps
        lo[idx] -= eps
        numeric[idx] = (value(hi) - value(lo)) / (2 * eps)
    scale = max(np.abs(analytic).max(), np.abs(numeric).max())
    return float(np.abs(analytic - numeric).max() / scale) if scale else 0.0


LOSS_CASES = [("cross_entropy", 0.0)] + [("focal", g) for g in (0.0, 0.5, 1.0, 2.0, 5.0)]


def run_full_suite(seeds=range(20)):
    """Every layer and loss case over ``seeds``; yields ``(label, error, tol)``."""
    for name in LAYER_CASES:
        for seed in seeds:
            err, tol = run_layer_case(name, seed)
            yield f"{name}[{seed}]", err, tol
    for loss, gamma in LOSS_CASES:
        for seed in seeds:
            yield f"{loss}(gamma={gamma})[{seed}]", run_loss_case(loss, seed, gamma), LOSS_TOL

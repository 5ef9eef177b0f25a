"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

import numpy as np

from .layers import Dropout, Module


# Tensors whose gradient is structurally zero (a conv bias feeding batch norm)
# would otherwise compare roundoff against roundoff; their scale is floored at
# this fraction of the largest gradient anywhere in the fragment.
ZERO_GRAD_FLOOR = 1e-6


def _rel_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 0.0) -> float:
    # scaled by the tensor's own gradient magnitude so near-zero entries
    # do not dominate
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), floor)
    if scale == 0.0:
        return 0.0
    return float(np.abs(analytic - numeric).max() / scale)


def gradient_check(fragment: Module, x: np.ndarray, eps: float = 1e-5, seed: int = 0,
                   max_per_tensor: int | None = None, check_input: bool = True,
                   loss=None) -> dict[str, float]:
    """Compare analytic and central-difference gradients of a scalar loss.

    The default loss is ``sum(out * R)`` for a fixed random ``R``, so every
    output entry contributes. Pass ``loss`` as ``(value_fn, grad_fn)`` over the
    fragment output to check a specific loss instead.

    Returns a dict mapping each parameter name (and ``"input"``) to its
    relative error ``max|a - n| / max(|a|, |n|)`` over that tensor (the scale
    is floored at ``ZERO_GRAD_FLOOR`` times the fragment's largest gradient); the
    overall figure is ``max(result.values(), default=0.0)``. Dropout masks
    are frozen by restoring every dropout generator before each evaluation.
    ``max_per_tensor`` limits checks to a random subset of entries per tensor.
    """
    rng = np.random.default_rng(seed)
    x = np.array(x, dtype=np.float64)
    dropouts = [m for m in fragment.modules() if isinstance(m, Dropout)]
    rng_states = [d.rng.bit_generator.state for d in dropouts]
    buffers = {name: b.copy() for name, b in fragment.named_buffers()}

    def restore():
        for d, st in zip(dropouts, rng_states):
            d.rng.bit_generator.state = st

    restore()
    out = fragment.forward(x)
    if loss is None:
        R = rng.standard_normal(out.shape)

        def value_fn(o):
            return float(np.sum(o * R))

        def grad_fn(o):
            return R
    else:
        value_fn, grad_fn = loss

    fragment.zero_grad()
    dx = fragment.backward(grad_fn(out))

    def evaluate():
        restore()
        return value_fn(fragment.forward(x))

    targets = [(name, p.value, p.grad.copy()) for name, p in fragment.named_parameters()]
    if check_input:
        targets.append(("input", x, dx))

    pairs = {}
    for name, arr, analytic in targets:
        flat = arr.reshape(-1)
        idx = np.arange(flat.size)
        if max_per_tensor is not None and flat.size > max_per_tensor:
            idx = rng.choice(flat.size, size=max_per_tensor, replace=False)
        numeric = np.empty(idx.size)
        for n, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = evaluate()
            flat[i] = orig - eps
            f_minus = evaluate()
            flat[i] = orig
            numeric[n] = (f_plus - f_minus) / (2 * eps)
        pairs[name] = (analytic.reshape(-1)[idx], numeric)

    floor = ZERO_GRAD_FLOOR * max((np.abs(a).max(initial=0.0) for a, _ in pairs.values()),
                                  default=0.0)
    errors = {name: _rel_error(a, n, floor) for name, (a, n) in pairs.items()}

    for name, b in fragment.named_buffers():
        b[...] = buffers[name]
    restore()
    return errors


def max_error(errors: dict[str, float]) -> float:
    return max(errors.values(), default=0.0)

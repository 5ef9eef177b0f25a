"""Dense-array layers with hand-written reverse-mode gradients.

Every layer caches what its backward pass needs during ``forward`` and
accumulates parameter gradients into ``Parameter.grad`` on ``backward``.
Call ``zero_grad`` between optimizer steps.
"""

from __future__ import annotations

from collections import OrderedDict
from typing import Iterator

import numpy as np


class Parameter:
    """A trainable array together with its accumulated gradient."""

    __slots__ = ("value", "grad")

    def __init__(self, value: np.ndarray):
        self.value = value
        self.grad = np.zeros_like(value)

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad[...] = 0


class Module:
    """Base class: a differentiable map with optional parameters and buffers."""

    def __init__(self):
        self.training = True
        self._cache = None

    # subclasses override
    def forward(self, x):
        raise NotImplementedError

    def backward(self, grad_out):
        raise NotImplementedError

    def __call__(self, x):
        return self.forward(x)

    def _require_cache(self):
        if self._cache is None:
            raise RuntimeError(f"{type(self).__name__}.backward called before forward")
        return self._cache

    def children(self) -> "OrderedDict[str, Module]":
        return OrderedDict()

    def own_parameters(self) -> "OrderedDict[str, Parameter]":
        return OrderedDict()

    def own_buffers(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict()

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for name, p in self.own_parameters().items():
            yield prefix + name, p
        for cname, child in self.children().items():
            yield from child.named_parameters(f"{prefix}{cname}.")

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name, b in self.own_buffers().items():
            yield prefix + name, b
        for cname, child in self.children().items():
            yield from child.named_buffers(f"{prefix}{cname}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def train(self, mode: bool = True):
        self.training = mode
        for child in self.children().values():
            child.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def modules(self) -> Iterator["Module"]:
        yield self
        for child in self.children().values():
            yield from child.modules()

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        """Parameters then buffers, keyed by dotted path."""
        state = OrderedDict()
        for name, p in self.named_parameters():
            state[name] = p.value
        for name, b in self.named_buffers():
            state[name] = b
        return state

    def load_state_dict(self, state):
        own = self.state_dict()
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(extra)}")
        for name, target in own.items():
            src = np.asarray(state[name])
            if src.shape != target.shape:
                raise ValueError(f"{name}: shape {src.shape} != {target.shape}")
            target[...] = src


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Conv1d(Module):
    """1-D cross-correlation over ``(batch, channels, length)`` input.

    ``padding`` is ``"valid"`` or ``"same"``; ``"same"`` zero-pads so that the
    output length is ``ceil(L / stride)``.
    """

    def __init__(self, in_channels, out_channels, kernel_size, stride=1,
                 padding="valid", rng=None, dtype=np.float32):
        super().__init__()
        if kernel_size < 1 or stride < 1:
            raise ValueError("kernel_size and stride must be >= 1")
        if padding not in ("valid", "same"):
            raise ValueError(f"padding must be 'valid' or 'same', got {padding!r}")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.padding = padding
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weight = Parameter(glorot_uniform(
            rng, (out_channels, in_channels, kernel_size),
            in_channels * kernel_size, out_channels * kernel_size, dtype))
        self.bias = Parameter(np.zeros(out_channels, dtype=dtype))

    def own_parameters(self):
        return OrderedDict(weight=self.weight, bias=self.bias)

    def _pads(self, length):
        if self.padding == "valid":
            return 0, 0
        out_len = -(-length // self.stride)
        total = max((out_len - 1) * self.stride + self.kernel_size - length, 0)
        return total // 2, total - total // 2

    def output_length(self, length):
        left, right = self._pads(length)
        return (length + left + right - self.kernel_size) // self.stride + 1

    def forward(self, x):
        if x.ndim != 3 or x.shape[1] != self.in_channels:
            raise ValueError(
                f"Conv1d expects (batch, {self.in_channels}, length), got {x.shape}")
        left, right = self._pads(x.shape[2])
        xp = np.pad(x, ((0, 0), (0, 0), (left, right))) if left or right else x
        out_len = (xp.shape[2] - self.kernel_size) // self.stride + 1
        if out_len < 1:
            raise ValueError(f"input length {x.shape[2]} shorter than kernel {self.kernel_size}")
        k, s = self.kernel_size, self.stride
        # cols: (batch, in_ch * k, out_len), channel-major to match weight.reshape
        cols = np.stack([xp[:, :, j:j + s * (out_len - 1) + 1:s] for j in range(k)], axis=2)
        cols = cols.reshape(x.shape[0], self.in_channels * k, out_len)
        w2 = self.weight.value.reshape(self.out_channels, -1)
        out = np.matmul(w2, cols) + self.bias.value[None, :, None]
        self._cache = (cols, x.shape, left, xp.shape[2], out_len)
        return out

    def backward(self, grad_out):
        cols, x_shape, left, padded_len, out_len = self._require_cache()
        batch = x_shape[0]
        k, s = self.kernel_size, self.stride
        w2 = self.weight.value.reshape(self.out_channels, -1)
        self.bias.grad += grad_out.sum(axis=(0, 2))
        # sum_b grad_out[b] @ cols[b].T
        self.weight.grad += np.tensordot(grad_out, cols, axes=([0, 2], [0, 2])).reshape(
            self.weight.shape)
        dcols = np.matmul(w2.T, grad_out).reshape(batch, self.in_channels, k, out_len)
        dxp = np.zeros((batch, self.in_channels, padded_len), dtype=grad_out.dtype)
        for j in range(k):
            dxp[:, :, j:j + s * (out_len - 1) + 1:s] += dcols[:, :, j, :]
        return dxp[:, :, left:left + x_shape[2]]


class BatchNorm1d(Module):
    """Per-channel normalization over the batch and length axes.

    Accepts ``(batch, channels, length)`` or ``(batch, channels)``.
    """

    def __init__(self, num_channels, eps=1e-5, momentum=0.1, dtype=np.float32):
        super().__init__()
        self.num_channels = num_channels
        self.eps = eps
        self.momentum = momentum
        self.gamma = Parameter(np.ones(num_channels, dtype=dtype))
        self.beta = Parameter(np.zeros(num_channels, dtype=dtype))
        self.running_mean = np.zeros(num_channels, dtype=dtype)
        self.running_var = np.ones(num_channels, dtype=dtype)

    def own_parameters(self):
        return OrderedDict(gamma=self.gamma, beta=self.beta)

    def own_buffers(self):
        return OrderedDict(running_mean=self.running_mean, running_var=self.running_var)

    def _axes_and_view(self, x):
        if x.ndim == 3:
            return (0, 2), (1, -1, 1)
        if x.ndim == 2:
            return (0,), (1, -1)
        raise ValueError(f"BatchNorm1d expects 2-D or 3-D input, got {x.shape}")

    def forward(self, x):
        if x.shape[1] != self.num_channels:
            raise ValueError(f"expected {self.num_channels} channels, got {x.shape[1]}")
        axes, view = self._axes_and_view(x)
        if self.training:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            m = self.momentum
            self.running_mean[...] = (1 - m) * self.running_mean + m * mean
            self.running_var[...] = (1 - m) * self.running_var + m * var
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        x_hat = (x - mean.reshape(view)) * inv_std.reshape(view)
        self._cache = (x_hat, inv_std, axes, view, self.training)
        return self.gamma.value.reshape(view) * x_hat + self.beta.value.reshape(view)

    def backward(self, grad_out):
        x_hat, inv_std, axes, view, used_batch_stats = self._require_cache()
        self.gamma.grad += (grad_out * x_hat).sum(axis=axes)
        self.beta.grad += grad_out.sum(axis=axes)
        g = grad_out * self.gamma.value.reshape(view)
        if not used_batch_stats:
            return g * inv_std.reshape(view)
        n = grad_out.size // self.num_channels
        g_mean = g.sum(axis=axes).reshape(view) / n
        gx_mean = (g * x_hat).sum(axis=axes).reshape(view) / n
        return (g - g_mean - x_hat * gx_mean) * inv_std.reshape(view)


class MaxPool1d(Module):
    """Max pooling along the last axis; ties resolve to the earliest position."""

    def __init__(self, kernel_size=2, stride=None):
        super().__init__()
        self.kernel_size = kernel_size
        self.stride = stride or kernel_size

    def forward(self, x):
        k, s = self.kernel_size, self.stride
        out_len = (x.shape[-1] - k) // s + 1
        if out_len < 1:
            raise ValueError(f"input length {x.shape[-1]} shorter than pool {k}")
        windows = np.stack([x[..., j:j + s * (out_len - 1) + 1:s] for j in range(k)], axis=-1)
        arg = windows.argmax(axis=-1)
        out = np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0]
        self.argmax = np.arange(out_len) * s + arg  # absolute input positions
        self._cache = (x.shape, self.argmax)
        return out

    def backward(self, grad_out):
        in_shape, idx = self._require_cache()
        dx = np.zeros(in_shape, dtype=grad_out.dtype)
        lead = int(np.prod(in_shape[:-1]))
        flat_dx = dx.reshape(lead, in_shape[-1])
        flat_idx = idx.reshape(lead, -1)
        rows = np.repeat(np.arange(lead), flat_idx.shape[1])
        np.add.at(flat_dx, (rows, flat_idx.ravel()), grad_out.reshape(lead, -1).ravel())
        return dx


class ReLU(Module):
    def forward(self, x):
        mask = x > 0
        self._cache = mask
        return x * mask

    def backward(self, grad_out):
        return grad_out * self._require_cache()


class Dropout(Module):
    """Inverted dropout; identity in eval mode or when ``rate == 0``."""

    def __init__(self, rate=0.0, seed=0):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = rate
        self.rng = np.random.default_rng(seed)

    def forward(self, x):
        if not self.training or self.rate == 0.0:
            self._cache = None
            self._identity = True
            return x
        self._identity = False
        keep = self.rng.random(x.shape) >= self.rate
        scale = np.asarray(1.0 / (1.0 - self.rate), dtype=x.dtype)
        self._cache = keep * scale
        return x * self._cache

    def backward(self, grad_out):
        if getattr(self, "_identity", None) is None:
            raise RuntimeError("Dropout.backward called before forward")
        if self._identity:
            return grad_out
        return grad_out * self._cache


class Dense(Module):
    """Affine map ``x @ W.T + b`` with ``W`` of shape ``(out, in)``."""

    def __init__(self, in_features, out_features, rng=None, dtype=np.float32):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_features = in_features
        self.out_features = out_features
        self.weight = Parameter(glorot_uniform(
            rng, (out_features, in_features), in_features, out_features, dtype))
        self.bias = Parameter(np.zeros(out_features, dtype=dtype))

    def own_parameters(self):
        return OrderedDict(weight=self.weight, bias=self.bias)

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ValueError(f"Dense expects (batch, {self.in_features}), got {x.shape}")
        self._cache = x
        return x @ self.weight.value.T + self.bias.value

    def backward(self, grad_out):
        x = self._require_cache()
        self.weight.grad += grad_out.T @ x
        self.bias.grad += grad_out.sum(axis=0)
        return grad_out @ self.weight.value


class GlobalAvgPool1d(Module):
    """Mean over the time axis: ``(batch, channels, length) -> (batch, channels)``."""

    def forward(self, x):
        self._cache = x.shape
        return x.mean(axis=2)

    def backward(self, grad_out):
        shape = self._require_cache()
        return np.broadcast_to(grad_out[:, :, None] / shape[2], shape).copy()


class Transpose(Module):
    """Swap the last two axes, e.g. a ``(B, C, L)`` map into a ``(B, L, C)`` sequence."""

    def forward(self, x):
        self._cache = True
        return np.ascontiguousarray(np.swapaxes(x, 1, 2))

    def backward(self, grad_out):
        self._require_cache()
        return np.ascontiguousarray(np.swapaxes(grad_out, 1, 2))


class Sequential(Module):
    def __init__(self, *layers, names=None):
        super().__init__()
        names = names or [str(i) for i in range(len(layers))]
        self.layers = OrderedDict(zip(names, layers))

    def children(self):
        return self.layers

    def __iter__(self):
        return iter(self.layers.values())

    def __len__(self):
        return len(self.layers)

    def forward(self, x):
        for layer in self.layers.values():
            x = layer.forward(x)
        return x

    def backward(self, grad_out):
        for layer in reversed(self.layers.values()):
            grad_out = layer.backward(grad_out)
        return grad_out


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_backward(probs: np.ndarray, grad_probs: np.ndarray) -> np.ndarray:
    """Vector-Jacobian product of softmax, given its output."""
    inner = (grad_probs * probs).sum(axis=-1, keepdims=True)
    return probs * (grad_probs - inner)


class Softmax(Module):
    def forward(self, x):
        p = softmax(x)
        self._cache = p
        return p

    def backward(self, grad_out):
        return softmax_backward(self._require_cache(), grad_out)

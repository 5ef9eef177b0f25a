"""Gated LSTM cells run in both time directions."""

from __future__ import annotations

from collections import OrderedDict

import numpy as np

from .layers import Module, Parameter, glorot_uniform




class LSTMDirection(Module):
    """One unidirectional LSTM over ``(batch, T, features)`` returning the last hidden state.

    Gate blocks are stacked in the order input, forget, cell, output along the
    last axis of ``W`` (features x 4H), ``U`` (H x 4H) and ``b`` (4H).
    """

    def __init__(self, input_size, hidden_size, rng=None, dtype=np.float32, forget_bias=1.0):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        H = hidden_size
        self.input_size = input_size
        self.hidden_size = H
        self.W = Parameter(glorot_uniform(rng, (input_size, 4 * H), input_size, 4 * H, dtype))
        self.U = Parameter(glorot_uniform(rng, (H, 4 * H), H, 4 * H, dtype))
        b = np.zeros(4 * H, dtype=dtype)
        b[H:2 * H] = forget_bias
        self.b = Parameter(b)

    def own_parameters(self):
        return OrderedDict(W=self.W, U=self.U, b=self.b)

    def forward(self, x):
        if x.ndim != 3 or x.shape[2] != self.input_size:
            raise ValueError(f"LSTM expects (batch, T, {self.input_size}), got {x.shape}")
        B, T, _ = x.shape
        if T < 1:
            raise ValueError("sequence length must be >= 1")
        H = self.hidden_size
        U = self.U.value
        dtype = np.result_type(x.dtype, U.dtype)
        # sigmoid(z) = 0.5 * tanh(z / 2) + 0.5 on i, f, o; plain tanh on g
        scale = np.full(4 * H, 0.5, dtype=dtype)
        scale[2 * H:3 * H] = 1.0
        shift = np.full(4 * H, 0.5, dtype=dtype)
        shift[2 * H:3 * H] = 0.0
        # time-major storage keeps every per-step slice contiguous
        xt = np.ascontiguousarray(np.swapaxes(x, 0, 1))
        xw = xt.reshape(T * B, -1) @ self.W.value
        xw += self.b.value
        xw = xw.reshape(T, B, 4 * H)
        gates = np.empty((T, B, 4 * H), dtype=dtype)
        hs = np.zeros((T + 1, B, H), dtype=dtype)
        cs = np.zeros((T + 1, B, H), dtype=dtype)
        tanh_c = np.empty((T, B, H), dtype=dtype)
        ig = np.empty((B, H), dtype=dtype)
        for t in range(T):
            a = gates[t]
            np.matmul(hs[t], U, out=a)
            a += xw[t]
            a *= scale
            np.tanh(a, out=a)
            a *= scale
            a += shift
            c = cs[t + 1]
            np.multiply(a[:, H:2 * H], cs[t], out=c)
            np.multiply(a[:, :H], a[:, 2 * H:3 * H], out=ig)
            c += ig
            np.tanh(c, out=tanh_c[t])
            np.multiply(a[:, 3 * H:], tanh_c[t], out=hs[t + 1])
        self._cache = (xt, gates, hs, cs, tanh_c)
        return hs[T].copy()

    def backward(self, grad_h):
        xt, gates, hs, cs, tanh_c = self._require_cache()
        T, B, _ = xt.shape
        H = self.hidden_size
        U_T = np.ascontiguousarray(self.U.value.T)
        dz_all = np.empty_like(gates)
        dh = grad_h.astype(gates.dtype, copy=True)
        dc = np.zeros((B, H), dtype=gates.dtype)
        tmp = np.empty((B, H), dtype=gates.dtype)
        # vanishing gradients over long sequences sink into subnormal floats,
        # which are ~10x slower; flush far-below-precision values periodically
        tiny = 1e-24 if gates.dtype == np.float32 else 0.0
        for t in range(T - 1, -1, -1):
            a = gates[t]
            i, f, g, o = a[:, :H], a[:, H:2 * H], a[:, 2 * H:3 * H], a[:, 3 * H:]
            tc = tanh_c[t]
            dz = dz_all[t]
            # output gate: dh * tanh(c) * o * (1 - o)
            np.multiply(dh, tc, out=tmp)
            np.multiply(tmp, o, out=dz[:, 3 * H:])
            dz[:, 3 * H:] *= 1.0 - o
            # dc += dh * o * (1 - tanh(c)^2)
            np.multiply(dh, o, out=tmp)
            tmp *= 1.0 - tc * tc
            dc += tmp
            np.multiply(dc, g, out=tmp)
            np.multiply(tmp, i, out=dz[:, :H])
            dz[:, :H] *= 1.0 - i
            np.multiply(dc, cs[t], out=tmp)
            np.multiply(tmp, f, out=dz[:, H:2 * H])
            dz[:, H:2 * H] *= 1.0 - f
            np.multiply(dc, i, out=dz[:, 2 * H:3 * H])
            dz[:, 2 * H:3 * H] *= 1.0 - g * g
            dc *= f
            dh = dz @ U_T
            if tiny and t % 8 == 0:
                dc[np.abs(dc) < tiny] = 0.0
                dh[np.abs(dh) < tiny] = 0.0
        dz_flat = dz_all.reshape(T * B, 4 * H)
        self.U.grad += hs[:T].reshape(T * B, H).T @ dz_flat
        self.W.grad += xt.reshape(T * B, -1).T @ dz_flat
        self.b.grad += dz_flat.sum(axis=0)
        dxt = (dz_flat @ self.W.value.T).reshape(T, B, -1)
        return np.ascontiguousarray(np.swapaxes(dxt, 0, 1))


class BiLSTM(Module):
    """Bidirectional LSTM whose output is the sum of both directions' final states.

    The forward direction reads ``x[:, 0..T-1]`` and contributes its state after
    step ``T-1``; the backward direction reads the reversed sequence and
    contributes its state after reaching step ``0``. Output shape ``(batch, H)``.
    """

    def __init__(self, input_size, hidden_size, rng=None, dtype=np.float32, forget_bias=1.0):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.fwd = LSTMDirection(input_size, hidden_size, rng, dtype, forget_bias)
        self.bwd = LSTMDirection(input_size, hidden_size, rng, dtype, forget_bias)

    def children(self):
        return OrderedDict(fwd=self.fwd, bwd=self.bwd)

    def forward(self, x):
        self._cache = True
        return self.fwd.forward(x) + self.bwd.forward(x[:, ::-1])

    def backward(self, grad_out):
        self._require_cache()
        dx = self.fwd.backward(grad_out)
        dx += self.bwd.backward(grad_out)[:, ::-1]
        return dx

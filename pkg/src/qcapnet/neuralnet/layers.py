"""Layers with explicit forward and backward passes.

Images are channels-last, ``(batch, rows, cols, channels)``, with rows
indexing qubits and columns indexing circuit layers.  Each layer caches what
its backward pass needs during ``forward(..., train=True)``.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

ACTIVATIONS = ("relu", "sigmoid", "none", "exp")


def sigmoid(z):
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def activate(z, name):
    if name == "relu":
        return np.maximum(z, 0)
    if name == "sigmoid":
        return sigmoid(z)
    if name == "exp":
        return np.exp(z)
    if name == "none":
        return z
    raise ValueError(f"unknown activation {name!r}")


def activation_grad(z, a, name, grad):
    """Gradient w.r.t. the pre-activation ``z`` given output ``a`` and upstream ``grad``."""
    if name == "relu":
        return grad * (z > 0)
    if name == "sigmoid":
        return grad * a * (1 - a)
    if name == "exp":
        return grad * a
    return grad


def same_padding(k: int) -> tuple:
    return k // 2, k - 1 - k // 2


class Layer:
    kind = "layer"
    activation = "none"

    def params(self) -> list:
        return []

    def grads(self) -> list:
        return []

    def output_shape(self, in_shape):
        return in_shape

    def describe(self) -> dict:
        return {"kind": self.kind}


class Conv2D(Layer):
    """Same-padded 2-D convolution.  Output (i, j) sees rows i-kh//2 .. and
    columns j-kw//2 .. of the zero-padded input."""

    kind = "conv"

    def __init__(self, kernels, biases, activation="relu"):
        self.K = kernels  # (kh, kw, c_in, c_out)
        self.b = biases
        self.activation = activation
        self.dK = np.zeros_like(kernels)
        self.db = np.zeros_like(biases)
        self.need_input_grad = True

    def params(self):
        return [self.K, self.b]

    def grads(self):
        return [self.dK, self.db]

    def output_shape(self, in_shape):
        return (*in_shape[:2], self.K.shape[3])

    def describe(self):
        kh, kw, _, f = self.K.shape
        return {"kind": self.kind, "kernels": f, "shape": [kh, kw], "activation": self.activation}

    def _patches(self, x):
        kh, kw, c, _ = self.K.shape
        (t, b), (l, r) = same_padding(kh), same_padding(kw)
        xp = np.pad(x, ((0, 0), (t, b), (l, r), (0, 0)))
        win = sliding_window_view(xp, (kh, kw), axis=(1, 2))  # (N, H, W, C, kh, kw)
        return np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(-1, kh * kw * c)

    def forward(self, x, train=False):
        n, h, w, _ = x.shape
        kh, kw, c, f = self.K.shape
        if x.shape[3] != c:
            raise ValueError(f"conv expects {c} input channels, got {x.shape[3]}")
        cols = self._patches(x)
        z = (cols @ self.K.reshape(-1, f) + self.b).reshape(n, h, w, f)
        a = activate(z, self.activation)
        if train:
            self._cache = (x.shape, cols, z, a)
        return a

    def backward(self, grad):
        shape, cols, z, a = self._cache
        n, h, w, c = shape
        kh, kw, _, f = self.K.shape
        dz = activation_grad(z, a, self.activation, grad).reshape(-1, f)
        self.dK[...] = (cols.T @ dz).reshape(self.K.shape)
        self.db[...] = dz.sum(axis=0)
        self._cache = None
        if not self.need_input_grad:
            return None
        dcols = (dz @ self.K.reshape(-1, f).T).reshape(n, h, w, kh, kw, c)
        (t, _), (l, _) = same_padding(kh), same_padding(kw)
        dxp = np.zeros((n, h + kh - 1, w + kw - 1, c), dtype=grad.dtype)
        for a_ in range(kh):
            for b_ in range(kw):
                dxp[:, a_ : a_ + h, b_ : b_ + w, :] += dcols[:, :, :, a_, b_, :]
        return dxp[:, t : t + h, l : l + w, :]


def conv_apply(x, kernels, biases, activation="relu"):
    """One convolution without gradient bookkeeping; ``x`` may lack the batch axis."""
    single = x.ndim == 3
    x = x[None] if single else x
    out = Conv2D(kernels, biases, activation).forward(x)
    return out[0] if single else out


class Pool2D(Layer):
    """Non-overlapping pooling; trailing partial windows use their actual size."""

    kind = "pool"

    def __init__(self, shape, mode="avg"):
        self.shape = tuple(int(s) for s in shape)
        self.mode = mode
        if mode not in ("avg", "max"):
            raise ValueError(f"unknown pooling mode {mode!r}")

    def output_shape(self, in_shape):
        h, w, c = in_shape
        ph, pw = self.shape
        return (-(-h // ph), -(-w // pw), c)

    def describe(self):
        return {"kind": self.kind, "shape": list(self.shape), "mode": self.mode}

    def _blocks(self, x, fill):
        n, h, w, c = x.shape
        ph, pw = self.shape
        ho, wo = -(-h // ph), -(-w // pw)
        xp = np.full((n, ho * ph, wo * pw, c), fill, dtype=x.dtype)
        xp[:, :h, :w] = x
        return xp.reshape(n, ho, ph, wo, pw, c), ho, wo

    def _counts(self, h, w, dtype):
        ph, pw = self.shape
        rows = np.minimum(ph, h - np.arange(0, h, ph))
        cols = np.minimum(pw, w - np.arange(0, w, pw))
        return np.outer(rows, cols).astype(dtype)[None, :, :, None]

    def forward(self, x, train=False):
        n, h, w, c = x.shape
        if self.mode == "avg":
            blocks, _, _ = self._blocks(x, 0)
            out = blocks.sum(axis=(2, 4)) / self._counts(h, w, x.dtype)
            if train:
                self._cache = x.shape
            return out
        blocks, _, _ = self._blocks(x, -np.inf)
        out = blocks.max(axis=(2, 4))
        if train:
            self._cache = (x.shape, blocks, out)
        return out

    def backward(self, grad):
        ph, pw = self.shape
        if self.mode == "avg":
            n, h, w, c = self._cache
            g = grad / self._counts(h, w, grad.dtype)
            up = np.repeat(np.repeat(g, ph, axis=1), pw, axis=2)
            return up[:, :h, :w]
        (n, h, w, c), blocks, out = self._cache
        mask = blocks == out[:, :, None, :, None, :]
        # split ties evenly so the backward pass stays a proper gradient average
        mask = mask / mask.sum(axis=(2, 4), keepdims=True)
        g = mask * grad[:, :, None, :, None, :]
        ho, wo = out.shape[1:3]
        return g.reshape(n, ho * ph, wo * pw, c)[:, :h, :w]


class Flatten(Layer):
    kind = "flatten"

    def output_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x, train=False):
        if train:
            self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._cache)


class Dense(Layer):
    kind = "dense"

    def __init__(self, weights, biases, activation="relu"):
        self.W = weights  # (in, out)
        self.b = biases
        self.activation = activation
        self.dW = np.zeros_like(weights)
        self.db = np.zeros_like(biases)
        self.need_input_grad = True

    def params(self):
        return [self.W, self.b]

    def grads(self):
        return [self.dW, self.db]

    def output_shape(self, in_shape):
        return (self.W.shape[1],)

    def describe(self):
        return {"kind": self.kind, "units": int(self.W.shape[1]), "activation": self.activation}

    def forward(self, x, train=False, linear_only=False):
        if x.shape[1] != self.W.shape[0]:
            raise ValueError(f"dense layer expects {self.W.shape[0]} inputs, got {x.shape[1]}")
        z = x @ self.W + self.b
        a = z if linear_only else activate(z, self.activation)
        if train:
            self._cache = (x, z, a, linear_only)
        return a

    def backward(self, grad):
        x, z, a, linear_only = self._cache
        dz = grad if linear_only else activation_grad(z, a, self.activation, grad)
        self.dW[...] = x.T @ dz
        self.db[...] = dz.sum(axis=0)
        self._cache = None
        return dz @ self.W.T if self.need_input_grad else None

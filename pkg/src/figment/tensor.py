"""Minimal numpy kernel with hand-written backward passes.

Every layer is a pair of functions: ``*_forward`` returns ``(output, cache)``
and ``*_backward(cache, upstream)`` accumulates parameter gradients in place
and returns the gradient with respect to the layer input.  Leading axes are
treated as batch axes throughout.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, ShapeError

PROB_EPS = 1e-7
SIGMOID_CLAMP = 30.0


class Parameter:
    """A trainable array together with its gradient and AdaGrad accumulator."""

    __slots__ = ("name", "value", "grad", "accum", "trainable")

    def __init__(self, value, name="", trainable=True, dtype=None):
        self.value = np.array(value, dtype=dtype or np.float64)
        self.name = name
        self.trainable = trainable
        self.grad = np.zeros_like(self.value)
        self.accum = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad[...] = 0.0

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


def glorot_uniform(rng, shape, fan_in, fan_out, name="", dtype=np.float64):
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return Parameter(rng.uniform(-a, a, size=shape), name=name, dtype=dtype)


def zeros_param(shape, name="", dtype=np.float64):
    return Parameter(np.zeros(shape), name=name, dtype=dtype)


# -- pointwise -------------------------------------------------------------


def sigmoid(x):
    x = np.clip(x, -SIGMOID_CLAMP, SIGMOID_CLAMP)
    return 1.0 / (1.0 + np.exp(-x))


def sigmoid_backward(p, g):
    """Gradient through ``p = sigmoid(x)`` given the forward output ``p``."""
    return g * p * (1.0 - p)


def rectifier(x):
    return np.maximum(x, 0.0)


def rectifier_backward(x, g):
    # subgradient at exactly 0 is 0
    return g * (x > 0)


def tanh_backward(y, g):
    return g * (1.0 - y * y)


# -- dense -----------------------------------------------------------------


@dataclass
class SparseRows:
    """Batch of binary sparse rows: row ``rows[k]`` has a one at ``cols[k]``."""

    rows: np.ndarray
    cols: np.ndarray
    n_rows: int
    dim: int

    @classmethod
    def from_lists(cls, id_lists, dim):
        lengths = [len(ids) for ids in id_lists]
        rows = np.repeat(np.arange(len(id_lists)), lengths)
        cols = np.concatenate([np.asarray(ids, dtype=np.int64) for ids in id_lists]) if id_lists else np.zeros(0, np.int64)
        return cls(rows, cols.astype(np.int64), len(id_lists), dim)

    @property
    def shape(self):
        return (self.n_rows, self.dim)

    def to_dense(self):
        out = np.zeros(self.shape)
        out[self.rows, self.cols] = 1.0
        return out


def dense_forward(W, x, b=None):
    """``y = W x (+ b)`` for a vector, a batch of row vectors, or SparseRows."""
    d_out, d_in = W.shape
    if isinstance(x, SparseRows):
        if x.dim != d_in:
            raise ShapeError(f"dense: W is {W.shape}, input is {x.shape}")
        y = np.zeros((x.n_rows, d_out), dtype=W.value.dtype)
        np.add.at(y, x.rows, W.value.T[x.cols])
    else:
        x = np.asarray(x)
        if x.shape[-1] != d_in:
            raise ShapeError(f"dense: W is {W.shape}, input is {x.shape}")
        y = x @ W.value.T
    if b is not None:
        y = y + b.value
    return y, x


def dense_backward(W, x, g, b=None):
    if isinstance(x, SparseRows):
        gT = np.zeros_like(W.grad.T)
        np.add.at(gT, x.cols, g[x.rows])
        W.grad += gT.T
        dx = None
    else:
        g2 = g.reshape(-1, g.shape[-1])
        W.grad += g2.T @ x.reshape(-1, x.shape[-1])
        dx = g @ W.value
    if b is not None:
        b.grad += g.reshape(-1, g.shape[-1]).sum(axis=0)
    return dx


# -- lookup ----------------------------------------------------------------


def lookup_forward(table, ids):
    ids = np.asarray(ids, dtype=np.int64)
    n = table.shape[0]
    if ids.size:
        bad = ids[(ids < 0) | (ids >= n)]
        if bad.size:
            raise IndexError(f"lookup id {int(bad[0])} out of range for table with {n} rows")
    return table.value[ids], ids


def lookup_backward(table, ids, g):
    """Scatter-add ``g`` into the rows touched by ``ids``."""
    if ids.size:
        np.add.at(table.grad, ids.ravel(), g.reshape(-1, table.shape[1]))


# -- convolution and pooling -----------------------------------------------


def conv1d_narrow(E, H, b=None):
    """Narrow convolution of a filter bank over a token sequence, then rectifier.

    ``E`` has shape ``(..., s, d)`` (one row per position), ``H`` is a
    Parameter of shape ``(n, d, w)``.  Feature map ``k`` at position ``i`` is
    ``relu(<E[i:i+w].T, H[k]>_F + b[k])``.  Returns maps of shape
    ``(..., n, s - w + 1)``.
    """
    E = np.asarray(E)
    n, d, w = H.shape
    s = E.shape[-2]
    if E.shape[-1] != d:
        raise ShapeError(f"conv: filters are {H.shape}, input is {E.shape}")
    if w > s:
        raise ConfigError(f"filter width {w} exceeds sequence length {s}")
    P = s - w + 1
    lead = E.shape[:-2]
    # windows: (..., P, d, w)
    win = sliding_window_view(E, w, axis=-2).reshape(lead + (P, d * w))
    z = win @ H.value.reshape(n, d * w).T  # (..., P, n)
    if b is not None:
        z = z + b.value
    z = np.swapaxes(z, -1, -2)
    return rectifier(z), (win, z, s)


def conv1d_narrow_backward(H, cache, g, b=None):
    win, z, s = cache
    n, d, w = H.shape
    gz = np.swapaxes(rectifier_backward(z, g), -1, -2)  # (..., P, n)
    P = gz.shape[-2]
    gz2 = gz.reshape(-1, n)
    H.grad += (gz2.T @ win.reshape(-1, d * w)).reshape(n, d, w)
    if b is not None:
        b.grad += gz2.sum(axis=0)
    dwin = (gz @ H.value.reshape(n, d * w)).reshape(gz.shape[:-1] + (d, w))
    dE = np.zeros(gz.shape[:-2] + (s, d), dtype=dwin.dtype)
    for k in range(w):
        dE[..., k:k + P, :] += dwin[..., k]
    return dE


def maxpool(m):
    """Max over the last axis; returns ``(values, argmax)``, first index on ties."""
    m = np.asarray(m)
    if m.shape[-1] == 0:
        raise ValueError("max pooling over an empty feature map")
    idx = np.argmax(m, axis=-1)
    return np.take_along_axis(m, idx[..., None], axis=-1)[..., 0], idx


def maxpool_backward(idx, length, g):
    out = np.zeros(np.shape(g) + (length,))
    np.put_along_axis(out, np.asarray(idx)[..., None], np.asarray(g)[..., None], axis=-1)
    return out


# -- loss ------------------------------------------------------------------


def bce(y, p):
    """Binary cross-entropy, elementwise, on clamped probabilities."""
    p = np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
    return -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))


def bce_grad(y, p):
    """d bce / d p; zero where the clamp is active."""
    pc = np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
    inside = (p >= PROB_EPS) & (p <= 1.0 - PROB_EPS)
    return (-(y / pc) + (1.0 - y) / (1.0 - pc)) * inside


# -- optimisation ----------------------------------------------------------


def adagrad_step(param, learning_rate, epsilon=1e-8):
    if learning_rate <= 0:
        raise ConfigError(f"learning rate must be positive, got {learning_rate}")
    g = param.grad
    param.accum += g * g
    param.value -= learning_rate * g / (np.sqrt(param.accum) + epsilon)
    param.zero_grad()


class Adagrad:
    def __init__(self, params, learning_rate=0.01, epsilon=1e-8):
        if learning_rate <= 0:
            raise ConfigError(f"learning rate must be positive, got {learning_rate}")
        self.params = [p for p in params if p.trainable]
        self.learning_rate = learning_rate
        self.epsilon = epsilon

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        for p in self.params:
            adagrad_step(p, self.learning_rate, self.epsilon)


# -- gradient checking -----------------------------------------------------


def grad_check(fn, params, h=1e-5, floor=1e-4, return_all=False):
    """Compare analytic gradients against central finite differences.

    ``fn()`` must run forward and backward, accumulate into ``p.grad`` for
    every parameter, and return the scalar loss.  Relative error per
    coordinate is ``|a - n| / max(|a|, |n|, floor)``; the worst is returned.
    """
    for p in params:
        p.zero_grad()
    fn()
    analytic = [p.grad.copy() for p in params]
    worst = 0.0
    errors = []
    for p, a in zip(params, analytic):
        numeric = np.zeros_like(a)
        flat = p.value.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            for q in params:
                q.zero_grad()
            up = fn()
            flat[i] = old - h
            for q in params:
                q.zero_grad()
            down = fn()
            flat[i] = old
            numeric.reshape(-1)[i] = (up - down) / (2 * h)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), floor)
        err = np.abs(a - numeric) / denom
        errors.append(err)
        if err.size:
            worst = max(worst, float(err.max()))
    for p in params:
        p.zero_grad()
    if return_all:
        return worst, errors
    return worst

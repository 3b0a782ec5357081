"""Dense float64 tensors with reverse-mode gradients.

Deliberately small: only the operations the dispatch policy needs. Every op
validates that its result is finite; a NaN or Inf anywhere aborts instead of
silently corrupting training. Graph recording can be switched off with
`no_grad()` for inference, which returns plain leaf tensors and skips all
closure allocation.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager

import numpy as np


class GradientError(RuntimeError):
    pass


_STATE = threading.local()


def _grad_enabled() -> bool:
    return getattr(_STATE, "grad", True)


@contextmanager
def no_grad():
    prev = _grad_enabled()
    _STATE.grad = False
    try:
        yield
    finally:
        _STATE.grad = prev


class Tensor:
    __slots__ = ("values", "grad", "parents", "grad_fn", "name")

    def __init__(self, values, parents=(), grad_fn=None, name=None):
        self.values = np.asarray(values, dtype=np.float64)
        # One reduction catches NaN and Inf anywhere (NaN propagates, Inf
        # saturates); cheaper than an elementwise isfinite scan.
        if not np.isfinite(self.values.sum()):
            raise GradientError(f"non-finite values in tensor {name or '<anon>'}")
        self.grad = None
        self.parents = parents if _grad_enabled() else ()
        self.grad_fn = grad_fn if _grad_enabled() else None
        self.name = name

    @property
    def shape(self):
        return self.values.shape

    def accumulate(self, g):
        self.grad = g if self.grad is None else self.grad + g

    def __repr__(self):
        return f"Tensor(name={self.name!r}, shape={self.values.shape})"


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(root: Tensor, seed=None) -> None:
    """Populate .grad over the whole graph reachable from root.

    Clears previous gradients first, so repeated calls on the same trace
    produce identical results.
    """
    order = _topo_order(root)
    for node in order:
        node.grad = None
    root.grad = np.ones_like(root.values) if seed is None else np.asarray(seed, dtype=np.float64)
    for node in reversed(order):
        if node.grad_fn is not None and node.grad is not None:
            node.grad_fn(node.grad)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum g down to `shape` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def _wrap(values, parents, grad_fn, name=None):
    if not _grad_enabled():
        return Tensor(values, name=name)
    return Tensor(values, parents=parents, grad_fn=grad_fn, name=name)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    out = a.values @ b.values

    def grad_fn(g):
        a.accumulate(_unbroadcast(g @ np.swapaxes(b.values, -1, -2), a.shape))
        b.accumulate(_unbroadcast(np.swapaxes(a.values, -1, -2) @ g, b.shape))

    return _wrap(out, (a, b), grad_fn)


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b in one graph node; x may carry leading batch axes."""
    out = x.values @ w.values + b.values

    def grad_fn(g):
        x.accumulate(g @ w.values.T)
        flat_g = g.reshape(-1, g.shape[-1])
        w.accumulate(x.values.reshape(-1, x.values.shape[-1]).T @ flat_g)
        b.accumulate(flat_g.sum(axis=0))

    return _wrap(out, (x, w, b), grad_fn)


def split_heads(x: Tensor, heads: int) -> Tensor:
    """(b, n, d) -> (b, heads, n, d // heads)."""
    b, n, d = x.values.shape
    out = x.values.reshape(b, n, heads, d // heads).transpose(0, 2, 1, 3)

    def grad_fn(g):
        x.accumulate(g.transpose(0, 2, 1, 3).reshape(b, n, d))

    return _wrap(out, (x,), grad_fn)


def merge_heads(x: Tensor) -> Tensor:
    """(b, heads, n, dh) -> (b, n, heads * dh)."""
    b, h, n, dh = x.values.shape
    out = x.values.transpose(0, 2, 1, 3).reshape(b, n, h * dh)

    def grad_fn(g):
        x.accumulate(g.reshape(b, n, h, dh).transpose(0, 2, 1, 3))

    return _wrap(out, (x,), grad_fn)


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.values + b.values

    def grad_fn(g):
        a.accumulate(_unbroadcast(g, a.shape))
        b.accumulate(_unbroadcast(g, b.shape))

    return _wrap(out, (a, b), grad_fn)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.values * b.values

    def grad_fn(g):
        a.accumulate(_unbroadcast(g * b.values, a.shape))
        b.accumulate(_unbroadcast(g * a.values, b.shape))

    return _wrap(out, (a, b), grad_fn)


def scale(a: Tensor, c: float) -> Tensor:
    out = a.values * c

    def grad_fn(g):
        a.accumulate(g * c)

    return _wrap(out, (a,), grad_fn)


def relu(a: Tensor) -> Tensor:
    out = np.maximum(a.values, 0.0)

    def grad_fn(g):
        a.accumulate(g * (a.values > 0.0))

    return _wrap(out, (a,), grad_fn)


def reshape(a: Tensor, shape) -> Tensor:
    out = a.values.reshape(shape)

    def grad_fn(g):
        a.accumulate(g.reshape(a.shape))

    return _wrap(out, (a,), grad_fn)


def transpose(a: Tensor, axes) -> Tensor:
    out = a.values.transpose(axes)
    inverse = np.argsort(axes)

    def grad_fn(g):
        a.accumulate(g.transpose(inverse))

    return _wrap(out, (a,), grad_fn)


def concat(tensors: list[Tensor], axis: int = -1) -> Tensor:
    out = np.concatenate([t.values for t in tensors], axis=axis)
    sizes = [t.values.shape[axis] for t in tensors]
    offsets = np.cumsum(sizes)[:-1]

    def grad_fn(g):
        for t, piece in zip(tensors, np.split(g, offsets, axis=axis)):
            t.accumulate(piece)

    return _wrap(out, tuple(tensors), grad_fn)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.values - a.values.max(axis=axis, keepdims=True)
    exp = np.exp(shifted)
    out = exp / exp.sum(axis=axis, keepdims=True)

    def grad_fn(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        a.accumulate(out * (g - inner))

    return _wrap(out, (a,), grad_fn)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.values - a.values.max(axis=axis, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - log_norm
    probs = np.exp(out)

    def grad_fn(g):
        a.accumulate(g - probs * g.sum(axis=axis, keepdims=True))

    return _wrap(out, (a,), grad_fn)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-8) -> Tensor:
    mu = x.values.mean(axis=-1, keepdims=True)
    centered = x.values - mu
    var = (centered**2).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = centered * inv_std
    out = gamma.values * x_hat + beta.values

    def grad_fn(g):
        gamma.accumulate(_unbroadcast(g * x_hat, gamma.shape))
        beta.accumulate(_unbroadcast(g, beta.shape))
        g_hat = g * gamma.values
        x.accumulate(
            (
                g_hat
                - g_hat.mean(axis=-1, keepdims=True)
                - x_hat * (g_hat * x_hat).mean(axis=-1, keepdims=True)
            )
            * inv_std
        )

    return _wrap(out, (x, gamma, beta), grad_fn)


def weighted_sum(a: Tensor, weights: np.ndarray) -> Tensor:
    """Scalar dot product with a constant weight array (same shape as a)."""
    w = np.asarray(weights, dtype=np.float64)
    out = float((a.values * w).sum())

    def grad_fn(g):
        a.accumulate(g * w)

    return _wrap(out, (a,), grad_fn)

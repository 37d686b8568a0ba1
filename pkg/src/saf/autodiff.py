"""Minimal reverse-mode automatic differentiation on numpy arrays.

A ``Tensor`` wraps an f64 ndarray plus backward links to the tensors it
was computed from.  Ops accept plain ndarrays/floats as constants; only
``Tensor`` inputs with ``requires_grad`` participate in backprop, so
large constant operands (eigenvector matrices, sparse Laplacians) cost
nothing extra.  ``backward(t)`` fills ``.grad`` on every reachable
tensor that requires it.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

__all__ = ["Tensor", "backward"]


def _t(x) -> np.ndarray:
    return x.value if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def _links(*pairs):
    return tuple(
        (p, fn) for p, fn in pairs if isinstance(p, Tensor) and p.requires_grad
    )


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "_links")

    def __init__(self, value, requires_grad: bool = False, links=()):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self._links = links
        self.requires_grad = requires_grad or bool(links)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, requires_grad={self.requires_grad})"

    # arithmetic
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)


def add(a, b):
    va, vb = _t(a), _t(b)
    return Tensor(
        va + vb,
        links=_links(
            (a, lambda g: _unbroadcast(g, va.shape)),
            (b, lambda g: _unbroadcast(g, vb.shape)),
        ),
    )


def sub(a, b):
    va, vb = _t(a), _t(b)
    return Tensor(
        va - vb,
        links=_links(
            (a, lambda g: _unbroadcast(g, va.shape)),
            (b, lambda g: _unbroadcast(-g, vb.shape)),
        ),
    )


def mul(a, b):
    va, vb = _t(a), _t(b)
    return Tensor(
        va * vb,
        links=_links(
            (a, lambda g: _unbroadcast(g * vb, va.shape)),
            (b, lambda g: _unbroadcast(g * va, vb.shape)),
        ),
    )


def div(a, b):
    va, vb = _t(a), _t(b)
    return Tensor(
        va / vb,
        links=_links(
            (a, lambda g: _unbroadcast(g / vb, va.shape)),
            (b, lambda g: _unbroadcast(-g * va / (vb * vb), vb.shape)),
        ),
    )


def matmul(a, b):
    va, vb = _t(a), _t(b)
    return Tensor(
        va @ vb,
        links=_links(
            (a, lambda g: g @ vb.T),
            (b, lambda g: va.T @ g),
        ),
    )


def spmm(mat, x):
    """Constant sparse matrix times tensor; gradient applies the transpose."""
    vx = _t(x)
    mat_t = mat.T.tocsr() if sp.issparse(mat) else np.asarray(mat).T
    return Tensor(mat @ vx, links=_links((x, lambda g: mat_t @ g)))


def transpose(a):
    return Tensor(_t(a).T, links=_links((a, lambda g: g.T)))


def reshape(a, shape):
    va = _t(a)
    return Tensor(va.reshape(shape), links=_links((a, lambda g: g.reshape(va.shape))))


def getitem(a, idx):
    va = _t(a)

    def bwd(g):
        out = np.zeros_like(va)
        np.add.at(out, idx, g)
        return out

    return Tensor(va[idx], links=_links((a, bwd)))


def relu(a):
    va = _t(a)
    mask = va > 0
    return Tensor(np.where(mask, va, 0.0), links=_links((a, lambda g: g * mask)))


def sigmoid(a):
    va = _t(a)
    s = np.where(va >= 0, 1.0 / (1.0 + np.exp(-np.abs(va))),
                 np.exp(-np.abs(va)) / (1.0 + np.exp(-np.abs(va))))
    return Tensor(s, links=_links((a, lambda g: g * s * (1.0 - s))))


def absolute(a):
    va = _t(a)
    return Tensor(np.abs(va), links=_links((a, lambda g: g * np.sign(va))))


def clip(a, lo, hi):
    """Clamp; zero gradient outside [lo, hi], pass-through on the boundary."""
    va = _t(a)
    mask = (va >= lo) & (va <= hi)
    return Tensor(np.clip(va, lo, hi), links=_links((a, lambda g: g * mask)))


def maximum_scalar(a, c):
    """max(a, c) with gradient passing only where a > c."""
    va = _t(a)
    mask = va > c
    return Tensor(np.maximum(va, c), links=_links((a, lambda g: g * mask)))


def amax_first(a):
    """Global max as a scalar; subgradient routes to the first argmax."""
    va = _t(a)
    idx = np.unravel_index(int(np.argmax(va)), va.shape)

    def bwd(g):
        out = np.zeros_like(va)
        out[idx] = g
        return out

    return Tensor(va[idx], links=_links((a, bwd)))


def tsum(a, axis=None, keepdims=False):
    va = _t(a)

    def bwd(g):
        if axis is None:
            return np.broadcast_to(g, va.shape).copy()
        gg = np.expand_dims(g, axis) if not keepdims else g
        return np.broadcast_to(gg, va.shape).copy()

    return Tensor(va.sum(axis=axis, keepdims=keepdims), links=_links((a, bwd)))


def tmean(a):
    va = _t(a)
    n = va.size
    return Tensor(va.mean(), links=_links((a, lambda g: np.full(va.shape, g / n))))


def softmax_cross_entropy(logits, labels, idx):
    """Mean negative log-softmax of the true class over the rows ``idx``.

    Fused op: forward uses the log-sum-exp trick, backward emits
    (softmax - onehot)/len(idx) scattered back into the full matrix.
    """
    full = _t(logits)
    rows = full[idx]
    lab = np.asarray(labels)[idx]
    mx = rows.max(axis=1, keepdims=True)
    ex = np.exp(rows - mx)
    denom = ex.sum(axis=1, keepdims=True)
    logp = (rows - mx) - np.log(denom)
    n = len(rows)
    val = -logp[np.arange(n), lab].mean()

    def bwd(g):
        grad_rows = ex / denom
        grad_rows[np.arange(n), lab] -= 1.0
        out = np.zeros_like(full)
        out[idx] = grad_rows * (g / n)
        return out

    return Tensor(val, links=_links((logits, bwd)))


def backward(out: Tensor, seed=None) -> None:
    """Accumulate gradients of ``out`` into every contributing tensor."""
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(out, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node._links:
            stack.append((parent, False))
    out.grad = np.ones_like(out.value) if seed is None else np.asarray(seed, dtype=np.float64)
    for node in reversed(topo):
        g = node.grad
        if g is None:
            continue
        for parent, fn in node._links:
            contrib = fn(g)
            parent.grad = contrib if parent.grad is None else parent.grad + contrib

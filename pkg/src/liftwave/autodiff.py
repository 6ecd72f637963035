"""Minimal reverse-mode differentiation over a dynamically recorded tape.

Covers exactly the primitives the wavelet filter layers need: dense matmul,
row gather/scatter for odd/even partitions, edge-sparse products whose edge
values are themselves differentiable, masked segment softmax, shrinkage, and
the classification loss. Tensors wrap float64 buffers; gradients accumulate
on parameters during ``backward``. Sparse operators and bases participate
only as constants.

Subgradient conventions: relu'(0) = 0 and the shrinkage derivative is 0 on
the closed dead zone |y| <= theta.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np
import scipy.sparse as sp

from . import _kernels


class AutodiffError(RuntimeError):
    pass


_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable tape recording inside the block (evaluation passes)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    """Value buffer plus the recorded operation that produced it."""

    __slots__ = ("values", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, values, requires_grad=False, parents=(), backward=None):
        self.values = np.asarray(values, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = tuple(parents) if self.requires_grad else ()
        self._backward = backward if self.requires_grad else None

    @property
    def shape(self):
        return self.values.shape

    def __repr__(self):
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.values.shape}{flag})"


def constant(values) -> Tensor:
    return Tensor(values, requires_grad=False)


def parameter(values) -> Tensor:
    return Tensor(np.array(values, dtype=np.float64, copy=True), requires_grad=True)


def _make(values, parents, backward) -> Tensor:
    tracked = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    return Tensor(values, requires_grad=tracked, parents=parents, backward=backward)


def _accumulate(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad += g


def backward(loss: Tensor):
    """Populate ``grad`` on every tracked tensor reachable from ``loss``.

    The tape is traversed once in reverse topological order; a scalar loss
    is required and cycles are rejected.
    """
    if loss.values.size != 1:
        raise AutodiffError(f"loss must be scalar, got shape {loss.values.shape}")
    order = []
    state = {}  # id -> 1 visiting, 2 done
    stack = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        nid = id(node)
        if processed:
            state[nid] = 2
            order.append(node)
            continue
        mark = state.get(nid)
        if mark == 2:
            continue
        if mark == 1:
            raise AutodiffError("cycle detected in the operation tape")
        state[nid] = 1
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and state.get(id(p)) != 2:
                stack.append((p, False))
    loss.grad = np.ones_like(loss.values)
    for node in reversed(order):
        if node._backward is not None:
            node._backward(node.grad)


def zero_gradients(tensors):
    for t in tensors:
        t.grad = None


# ---------------------------------------------------------------------------
# elementwise / shape primitives


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.values + b.values

    def bwd(g):
        if a.values.shape == g.shape:
            _accumulate(a, g)
        else:
            _accumulate(a, g.sum(axis=0).reshape(a.values.shape))
        if b.values.shape == g.shape:
            _accumulate(b, g)
        else:
            _accumulate(b, g.sum(axis=0).reshape(b.values.shape))

    return _make(out, (a, b), bwd)


def neg(a: Tensor) -> Tensor:
    return _make(-a.values, (a,), lambda g: _accumulate(a, -g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    return add(a, neg(b))


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.values.shape != b.values.shape:
        raise AutodiffError("mul requires matching shapes")
    out = a.values * b.values

    def bwd(g):
        _accumulate(a, g * b.values)
        _accumulate(b, g * a.values)

    return _make(out, (a, b), bwd)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _make(a.values * c, (a,), lambda g: _accumulate(a, g * c))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.values)
    return _make(out, (a,), lambda g: _accumulate(a, g * out))


def log(a: Tensor) -> Tensor:
    out = np.log(a.values)
    return _make(out, (a,), lambda g: _accumulate(a, g / a.values))


def tsum(a: Tensor) -> Tensor:
    out = np.asarray(a.values.sum())
    return _make(out, (a,), lambda g: _accumulate(a, np.broadcast_to(g, a.values.shape)))


def tmean(a: Tensor) -> Tensor:
    n = a.values.size
    out = np.asarray(a.values.mean())
    return _make(
        out, (a,), lambda g: _accumulate(a, np.broadcast_to(g / n, a.values.shape))
    )


def reshape(a: Tensor, shape) -> Tensor:
    orig = a.values.shape
    return _make(
        a.values.reshape(shape), (a,), lambda g: _accumulate(a, g.reshape(orig))
    )


def transpose(a: Tensor) -> Tensor:
    return _make(a.values.T, (a,), lambda g: _accumulate(a, g.T))


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    out = a.values @ b.values

    def bwd(g):
        _accumulate(a, g @ b.values.T)
        _accumulate(b, a.values.T @ g)

    return _make(out, (a, b), bwd)


def const_matmul(const, x: Tensor) -> Tensor:
    """Product with a constant left operand (dense array or scipy sparse)."""
    out = const @ x.values

    def bwd(g):
        _accumulate(x, const.T @ g)

    return _make(np.asarray(out), (x,), bwd)


# ---------------------------------------------------------------------------
# row indexing


def take_rows(a: Tensor, idx: np.ndarray) -> Tensor:
    idx = np.asarray(idx, dtype=np.int64)
    out = a.values[idx]

    def bwd(g):
        ga = np.zeros_like(a.values)
        np.add.at(ga, idx, g)
        _accumulate(a, ga)

    return _make(out, (a,), bwd)


def merge_rows(n: int, idx_a: np.ndarray, a: Tensor, idx_b: np.ndarray, b: Tensor) -> Tensor:
    """Scatter two disjoint row blocks back into an n-row array."""
    idx_a = np.asarray(idx_a, dtype=np.int64)
    idx_b = np.asarray(idx_b, dtype=np.int64)
    out = np.zeros((n,) + a.values.shape[1:], dtype=np.float64)
    out[idx_a] = a.values
    out[idx_b] = b.values

    def bwd(g):
        _accumulate(a, g[idx_a])
        _accumulate(b, g[idx_b])

    return _make(out, (a, b), bwd)


def concat_cols(parts) -> Tensor:
    parts = list(parts)
    out = np.concatenate([p.values for p in parts], axis=1)
    widths = [p.values.shape[1] for p in parts]
    splits = np.cumsum(widths)[:-1]

    def bwd(g):
        for p, chunk in zip(parts, np.split(g, splits, axis=1)):
            _accumulate(p, chunk)

    return _make(out, tuple(parts), bwd)


def concat_rows(parts) -> Tensor:
    parts = list(parts)
    out = np.concatenate([p.values for p in parts], axis=0)
    heights = [p.values.shape[0] for p in parts]
    splits = np.cumsum(heights)[:-1]

    def bwd(g):
        for p, chunk in zip(parts, np.split(g, splits, axis=0)):
            _accumulate(p, chunk)

    return _make(out, tuple(parts), bwd)


def row_scale(x: Tensor, s: Tensor) -> Tensor:
    """Multiply each row of x by the matching entry of a column vector s."""
    if s.values.shape != (x.values.shape[0], 1):
        raise AutodiffError("row_scale expects s of shape (n, 1)")
    out = x.values * s.values

    def bwd(g):
        _accumulate(x, g * s.values)
        _accumulate(s, (g * x.values).sum(axis=1, keepdims=True))

    return _make(out, (x, s), bwd)


def mean_rows(a: Tensor) -> Tensor:
    """Column means as a single-row matrix (global mean pooling)."""
    n = a.values.shape[0]
    out = a.values.mean(axis=0, keepdims=True)

    def bwd(g):
        _accumulate(a, np.broadcast_to(g / n, a.values.shape).copy())

    return _make(out, (a,), bwd)


# ---------------------------------------------------------------------------
# edge-sparse primitives (fixed sparsity pattern, differentiable values)


def spmm_edges(rows, cols, vals: Tensor, x: Tensor, n_out: int) -> Tensor:
    """out[rows[e]] += vals[e] * x[cols[e]]; differentiable in vals and x."""
    rows = np.ascontiguousarray(rows, dtype=np.int64)
    cols = np.ascontiguousarray(cols, dtype=np.int64)
    v = np.ascontiguousarray(vals.values, dtype=np.float64)
    xv = np.ascontiguousarray(x.values, dtype=np.float64)
    out = _kernels.spmm_edge_forward(rows, cols, v, xv, n_out)

    def bwd(g):
        g = np.ascontiguousarray(g, dtype=np.float64)
        if vals.requires_grad:
            _accumulate(vals, _kernels.spmm_edge_grad_vals(rows, cols, g, xv))
        if x.requires_grad:
            _accumulate(x, _kernels.spmm_edge_grad_x(rows, cols, v, g, xv.shape[0]))

    return _make(out, (vals, x), bwd)


def segment_softmax(vals: Tensor, indptr: np.ndarray) -> Tensor:
    """Softmax within consecutive index segments (masked row softmax)."""
    indptr = np.ascontiguousarray(indptr, dtype=np.int64)
    v = np.ascontiguousarray(vals.values, dtype=np.float64)
    probs = _kernels.segment_softmax_forward(v, indptr)

    def bwd(g):
        g = np.ascontiguousarray(g, dtype=np.float64)
        _accumulate(vals, _kernels.segment_softmax_grad(probs, g, indptr))

    return _make(probs, (vals,), bwd)


# ---------------------------------------------------------------------------
# nonlinearities, regularization, loss


def relu(a: Tensor) -> Tensor:
    mask = a.values > 0
    return _make(np.where(mask, a.values, 0.0), (a,), lambda g: _accumulate(a, g * mask))


def soft_threshold(a: Tensor, theta: float) -> Tensor:
    """Shrink toward zero by theta; gradient passes only outside the dead zone."""
    if theta < 0:
        raise AutodiffError("theta must be nonnegative")
    out, mask = _kernels.soft_threshold_forward(a.values, float(theta))
    return _make(out, (a,), lambda g: _accumulate(a, g * mask))


def dropout(a: Tensor, rate: float, training: bool, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; identity at inference or rate 0."""
    if not 0.0 <= rate < 1.0:
        raise AutodiffError(f"dropout rate {rate} outside [0, 1)")
    if not training or rate == 0.0:
        return a
    keep = rng.random(a.values.shape) >= rate
    factor = keep / (1.0 - rate)
    return _make(a.values * factor, (a,), lambda g: _accumulate(a, g * factor))


def row_softmax(a: Tensor) -> Tensor:
    z = a.values - a.values.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)

    def bwd(g):
        dot = (g * p).sum(axis=1, keepdims=True)
        _accumulate(a, p * (g - dot))

    return _make(p, (a,), bwd)


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray, mask: np.ndarray) -> Tensor:
    """Mean negative log-softmax of the true class over the masked rows."""
    mask = np.asarray(mask, dtype=np.int64)
    if len(mask) == 0:
        raise AutodiffError("empty mask in cross-entropy")
    labels = np.asarray(labels, dtype=np.int64)[mask]
    z = logits.values[mask]
    zmax = z.max(axis=1, keepdims=True)
    shifted = z - zmax
    logsum = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logsum
    rows = np.arange(len(mask))
    loss = np.asarray(-logp[rows, labels].mean())

    def bwd(g):
        p = np.exp(logp)
        p[rows, labels] -= 1.0
        full = np.zeros_like(logits.values)
        full[mask] = p * (float(g) / len(mask))
        _accumulate(logits, full)

    return _make(loss, (logits,), bwd)

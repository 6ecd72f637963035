"""Pure-NumPy implementations of the hot kernels.

Signature-compatible with the compiled module in ``_speedups.pyx``. The
scatter kernels accumulate in edge order and match the compiled ones
bit-for-bit; per-edge reductions (dot products, softmax sums) may differ at
rounding level because NumPy's reductions are not strictly sequential.
"""

import numpy as np


def spmm_edge_forward(rows, cols, vals, x, n_out):
    """out[rows[e], :] += vals[e] * x[cols[e], :]."""
    out = np.zeros((n_out, x.shape[1]), dtype=np.float64)
    if len(vals):
        np.add.at(out, rows, vals[:, None] * x[cols])
    return out


def spmm_edge_grad_vals(rows, cols, gout, x):
    """d(out)/d(vals): per-edge dot of the output gradient and gathered input."""
    if not len(rows):
        return np.zeros(0, dtype=np.float64)
    return np.einsum("ej,ej->e", gout[rows], x[cols])


def spmm_edge_grad_x(rows, cols, vals, gout, n_in):
    """d(out)/d(x): scatter of vals[e] * gout[rows[e], :] into row cols[e]."""
    gx = np.zeros((n_in, gout.shape[1]), dtype=np.float64)
    if len(vals):
        np.add.at(gx, cols, vals[:, None] * gout[rows])
    return gx


def segment_softmax_forward(vals, indptr):
    """Softmax within each [indptr[r], indptr[r+1]) segment; empty segments allowed."""
    n_edges = len(vals)
    if n_edges == 0:
        return np.zeros(0, dtype=np.float64)
    counts = np.diff(indptr)
    # reduceat over the nonempty rows only: their starts are strictly
    # increasing and their edges tile the value array
    live = counts > 0
    starts = indptr[:-1][live]
    live_counts = counts[live]
    seg_max = np.maximum.reduceat(vals, starts)
    shifted = np.exp(vals - np.repeat(seg_max, live_counts))
    seg_sum = np.add.reduceat(shifted, starts)
    return shifted / np.repeat(seg_sum, live_counts)


def segment_softmax_grad(probs, gout, indptr):
    """Backward of segment softmax: p * (g - sum_seg(p * g))."""
    n_edges = len(probs)
    if n_edges == 0:
        return np.zeros(0, dtype=np.float64)
    counts = np.diff(indptr)
    live = counts > 0
    starts = indptr[:-1][live]
    seg_dot = np.add.reduceat(probs * gout, starts)
    return probs * (gout - np.repeat(seg_dot, counts[live]))


def soft_threshold_forward(x, theta):
    """Shrink toward zero by theta; returns (output, pass-through mask)."""
    mask = (np.abs(x) > theta).astype(np.uint8)
    out = np.sign(x) * np.maximum(np.abs(x) - theta, 0.0)
    return out, mask

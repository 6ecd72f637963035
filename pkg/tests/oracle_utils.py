"""Independent reference implementations used only as test oracles.

These deliberately avoid the code paths they check: the eigensolver is a
cyclic Jacobi sweep, the softmax runs in extended precision, and the
lifting step is a naive per-entry loop.
"""

import numpy as np


def jacobi_eigh(a, tol=1e-14, max_sweeps=100):
    """Cyclic Jacobi rotations on a symmetric matrix; returns ascending pairs."""
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    v = np.eye(n)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2))
        if off < tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(a[p, q]) < 1e-300:
                    continue
                beta = (a[q, q] - a[p, p]) / (2.0 * a[p, q])
                sign = 1.0 if beta >= 0 else -1.0
                t = sign / (abs(beta) + np.sqrt(beta * beta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = c * t
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
                v = v @ rot
    vals = np.diag(a).copy()
    order = np.argsort(vals)
    return vals[order], v[:, order]


def longdouble_row_softmax(values):
    """Softmax of a 1-D array in extended precision."""
    x = np.asarray(values, dtype=np.longdouble)
    x = x - x.max()
    e = np.exp(x)
    return (e / e.sum()).astype(np.float64)


def loop_lift_step(x_odd, x_even, update_dense, predict_dense):
    """Entrywise update-first lifting step (dense operator matrices)."""
    n_even, n_odd = update_dense.shape
    coarse = np.array(x_even, dtype=np.float64, copy=True)
    for j in range(n_even):
        for i in range(n_odd):
            coarse[j] += update_dense[j, i] * x_odd[i]
    detail = np.array(x_odd, dtype=np.float64, copy=True)
    for i in range(n_odd):
        for j in range(n_even):
            detail[i] -= predict_dense[i, j] * coarse[j]
    return coarse, detail


def numeric_gradient(f, x, h=1e-6):
    """Central finite differences of a scalar function of an array."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + h
        fp = f(x)
        flat[k] = orig - h
        fm = f(x)
        flat[k] = orig
        gflat[k] = (fp - fm) / (2 * h)
    return g

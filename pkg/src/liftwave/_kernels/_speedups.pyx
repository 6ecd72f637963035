# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: edge-sparse products, segment softmax, soft threshold."""

import numpy as np

cimport numpy as cnp

cnp.import_array()

cdef extern from "math.h":
    double c_exp "exp"(double x) nogil


def spmm_edge_forward(cnp.int64_t[::1] rows, cnp.int64_t[::1] cols,
                      double[::1] vals, double[:, ::1] x, Py_ssize_t n_out):
    cdef Py_ssize_t n_edges = vals.shape[0]
    cdef Py_ssize_t d = x.shape[1]
    out_arr = np.zeros((n_out, d), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t e, j, r, c
    cdef double v
    for e in range(n_edges):
        r = rows[e]
        c = cols[e]
        v = vals[e]
        for j in range(d):
            out[r, j] += v * x[c, j]
    return out_arr


def spmm_edge_grad_vals(cnp.int64_t[::1] rows, cnp.int64_t[::1] cols,
                        double[:, ::1] gout, double[:, ::1] x):
    cdef Py_ssize_t n_edges = rows.shape[0]
    cdef Py_ssize_t d = x.shape[1]
    gv_arr = np.zeros(n_edges, dtype=np.float64)
    cdef double[::1] gv = gv_arr
    cdef Py_ssize_t e, j, r, c
    cdef double acc
    for e in range(n_edges):
        r = rows[e]
        c = cols[e]
        acc = 0.0
        for j in range(d):
            acc += gout[r, j] * x[c, j]
        gv[e] = acc
    return gv_arr


def spmm_edge_grad_x(cnp.int64_t[::1] rows, cnp.int64_t[::1] cols,
                     double[::1] vals, double[:, ::1] gout, Py_ssize_t n_in):
    cdef Py_ssize_t n_edges = vals.shape[0]
    cdef Py_ssize_t d = gout.shape[1]
    gx_arr = np.zeros((n_in, d), dtype=np.float64)
    cdef double[:, ::1] gx = gx_arr
    cdef Py_ssize_t e, j, r, c
    cdef double v
    for e in range(n_edges):
        r = rows[e]
        c = cols[e]
        v = vals[e]
        for j in range(d):
            gx[c, j] += v * gout[r, j]
    return gx_arr


def segment_softmax_forward(double[::1] vals, cnp.int64_t[::1] indptr):
    cdef Py_ssize_t n_edges = vals.shape[0]
    cdef Py_ssize_t n_rows = indptr.shape[0] - 1
    out_arr = np.zeros(n_edges, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t r, e, lo, hi
    cdef double m, s
    for r in range(n_rows):
        lo = indptr[r]
        hi = indptr[r + 1]
        if hi <= lo:
            continue
        m = vals[lo]
        for e in range(lo + 1, hi):
            if vals[e] > m:
                m = vals[e]
        s = 0.0
        for e in range(lo, hi):
            out[e] = c_exp(vals[e] - m)
            s += out[e]
        for e in range(lo, hi):
            out[e] /= s
    return out_arr


def segment_softmax_grad(double[::1] probs, double[::1] gout,
                         cnp.int64_t[::1] indptr):
    cdef Py_ssize_t n_edges = probs.shape[0]
    cdef Py_ssize_t n_rows = indptr.shape[0] - 1
    gv_arr = np.zeros(n_edges, dtype=np.float64)
    cdef double[::1] gv = gv_arr
    cdef Py_ssize_t r, e, lo, hi
    cdef double dot
    for r in range(n_rows):
        lo = indptr[r]
        hi = indptr[r + 1]
        if hi <= lo:
            continue
        dot = 0.0
        for e in range(lo, hi):
            dot += probs[e] * gout[e]
        for e in range(lo, hi):
            gv[e] = probs[e] * (gout[e] - dot)
    return gv_arr


def soft_threshold_forward(x, double theta):
    x_arr = np.ascontiguousarray(x, dtype=np.float64)
    flat = x_arr.reshape(-1)
    cdef double[::1] xv = flat
    cdef Py_ssize_t n = xv.shape[0]
    out_arr = np.zeros(n, dtype=np.float64)
    mask_arr = np.zeros(n, dtype=np.uint8)
    cdef double[::1] out = out_arr
    cdef unsigned char[::1] mask = mask_arr
    cdef Py_ssize_t i
    cdef double v
    for i in range(n):
        v = xv[i]
        if v > theta:
            out[i] = v - theta
            mask[i] = 1
        elif v < -theta:
            out[i] = v + theta
            mask[i] = 1
    return out_arr.reshape(x_arr.shape), mask_arr.reshape(x_arr.shape)

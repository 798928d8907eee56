# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner-loop kernels. Same contracts as ``_pykernels``."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def forward(const double[:, ::1] X, const cnp.int64_t[::1] src_a, const cnp.int64_t[::1] src_b,
            const double[::1] w0, const double[:, ::1] W):
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1], k, j
    cdef cnp.int64_t a, b
    cdef double acc
    out = np.empty(n)
    cdef double[::1] p = out
    with nogil:
        for k in range(n):
            a = src_a[k]
            b = src_b[k]
            acc = 0.0
            for j in range(d):
                acc = acc + X[k, j] * (w0[j] + 0.5 * (W[a, j] + W[b, j]))
            p[k] = acc
    return out


def backward(const double[:, ::1] X, const cnp.int64_t[::1] src_a, const cnp.int64_t[::1] src_b,
             const double[::1] r, Py_ssize_t n_sources):
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1], k, j
    cdef cnp.int64_t a, b
    cdef double rk, v
    s0_arr = np.zeros(d)
    S_arr = np.zeros((n_sources, d))
    cdef double[::1] s0 = s0_arr
    cdef double[:, ::1] S = S_arr
    with nogil:
        for k in range(n):
            a = src_a[k]
            b = src_b[k]
            rk = r[k]
            for j in range(d):
                v = rk * X[k, j]
                s0[j] += v
                S[a, j] += 0.5 * v
                S[b, j] += 0.5 * v
    return s0_arr, S_arr


def soft_threshold(v, double tau):
    src = np.ascontiguousarray(v, dtype=np.float64)
    out = np.empty_like(src)
    cdef const double[::1] x = src.reshape(-1)
    cdef double[::1] o = out.reshape(-1)
    cdef Py_ssize_t i, n = x.shape[0]
    cdef double m
    with nogil:
        for i in range(n):
            m = x[i]
            if m > tau:
                o[i] = m - tau
            elif m < -tau:
                o[i] = m + tau
            else:
                o[i] = 0.0
    return out

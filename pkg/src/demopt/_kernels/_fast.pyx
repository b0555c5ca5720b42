# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: axis transform contraction, per-chunk top-k, scatter-merge.

Must agree with ``pyref.py``: identical top-k indices and tie-breaks,
identical duplicate summation order in the scatter, float64 accumulation in
the contraction.
"""

import numpy as np

cimport cython
from libc.math cimport fabs
from libc.string cimport memset


ctypedef fused real_t:
    float
    double


def dct_axis(real_t[:, :, ::1] x, double[:, ::1] basis):
    cdef Py_ssize_t P = x.shape[0]
    cdef Py_ssize_t N = x.shape[1]
    cdef Py_ssize_t Q = x.shape[2]
    if basis.shape[0] != N or basis.shape[1] != N:
        raise ValueError("basis must be (N, N) matching the transformed axis")
    if real_t is float:
        out_np = np.empty((P, N, Q), dtype=np.float32)
    else:
        out_np = np.empty((P, N, Q), dtype=np.float64)
    cdef real_t[:, :, ::1] out = out_np
    acc_np = np.zeros(Q, dtype=np.float64)
    cdef double[::1] acc = acc_np
    cdef Py_ssize_t p, k, n, q
    cdef double b, s
    if Q == 1:
        # trailing-axis case: plain (P, N) x (N, N)^T with scalar accumulators
        for p in range(P):
            for k in range(N):
                s = 0.0
                for n in range(N):
                    s += basis[k, n] * <double> x[p, n, 0]
                out[p, k, 0] = <real_t> s
        return out_np
    for p in range(P):
        for k in range(N):
            memset(&acc[0], 0, Q * sizeof(double))
            for n in range(N):
                b = basis[k, n]
                for q in range(Q):
                    acc[q] += b * <double> x[p, n, q]
            for q in range(Q):
                out[p, k, q] = <real_t> acc[q]
    return out_np


def topk_abs(real_t[:, ::1] rows, Py_ssize_t k):
    cdef Py_ssize_t C = rows.shape[0]
    cdef Py_ssize_t L = rows.shape[1]
    if k < 1 or k > L:
        raise ValueError("k out of range")
    idx_np = np.empty((C, k), dtype=np.int32)
    if real_t is float:
        val_np = np.empty((C, k), dtype=np.float32)
    else:
        val_np = np.empty((C, k), dtype=np.float64)
    cdef int[:, ::1] idx = idx_np
    cdef real_t[:, ::1] val = val_np
    used_np = np.zeros(L, dtype=np.uint8)
    cdef unsigned char[::1] used = used_np
    cdef Py_ssize_t c, j, i, best
    cdef double a, best_abs
    for c in range(C):
        memset(&used[0], 0, L)
        for j in range(k):
            best = -1
            best_abs = -1.0
            for i in range(L):
                if used[i]:
                    continue
                a = fabs(<double> rows[c, i])
                # strict > keeps the lowest index on ties
                if a > best_abs:
                    best_abs = a
                    best = i
            used[best] = 1
            idx[c, j] = <int> best
            val[c, j] = rows[c, best]
    return idx_np, val_np


def scatter_merge(int[:, ::1] idx, double[:, ::1] val, Py_ssize_t length,
                  double world_divisor=0.0):
    cdef Py_ssize_t C = idx.shape[0]
    cdef Py_ssize_t M = idx.shape[1]
    dense_np = np.zeros((C, length), dtype=np.float64)
    cdef double[:, ::1] dense = dense_np
    counts_np = np.zeros(length, dtype=np.int64)
    cdef long long[::1] counts = counts_np
    cdef Py_ssize_t c, m, b
    for c in range(C):
        memset(&counts[0], 0, length * sizeof(long long))
        for m in range(M):
            b = idx[c, m]
            if b < 0 or b >= length:
                raise ValueError("scatter index out of range")
            dense[c, b] += val[c, m]
            counts[b] += 1
        if world_divisor > 0:
            for b in range(length):
                if counts[b] > 0:
                    dense[c, b] /= world_divisor
        else:
            for b in range(length):
                if counts[b] > 1:
                    dense[c, b] /= <double> counts[b]
    return dense_np

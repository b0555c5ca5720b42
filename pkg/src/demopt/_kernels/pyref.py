"""Pure-numpy reference implementations of the hot kernels.

Semantics are the contract; the compiled backend in ``_fast.pyx`` must match
these bit-for-bit where integer results are involved (top-k indices, scatter
summation order) and to float rounding for the transform contraction.
"""

from __future__ import annotations

import numpy as np


def dct_axis(x: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """Apply a transform matrix along the middle axis of a (P, N, Q) block.

    out[p, k, q] = sum_n basis[k, n] * x[p, n, q], accumulated in float64 and
    rounded back to the input dtype.
    """
    x64 = x.astype(np.float64, copy=False)
    out = np.tensordot(basis, x64, axes=([1], [1]))  # (N, P, Q)
    out = np.ascontiguousarray(out.transpose(1, 0, 2))
    return out.astype(x.dtype, copy=False)


def topk_abs(rows: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-row top-k by absolute value, signed values kept.

    Output columns are ordered by (|value| descending, index ascending); the
    stable sort makes the lowest index win ties, deterministically.
    """
    if k < 1 or k > rows.shape[1]:
        raise ValueError("k out of range")
    order = np.argsort(-np.abs(rows), axis=1, kind="stable")[:, :k]
    vals = np.take_along_axis(rows, order, axis=1)
    return order.astype(np.int32), vals


def scatter_merge(
    idx: np.ndarray, val: np.ndarray, length: int, world_divisor: float = 0.0
) -> np.ndarray:
    """Scatter (index, value) pairs into dense rows, averaging duplicates.

    idx, val have shape (C, M); the result has shape (C, length) in float64.
    Bins hit by multiple columns hold the mean over contributors; when
    ``world_divisor`` > 0 every hit bin is divided by it instead of by its
    contributor count.
    """
    c, _ = idx.shape
    flat = (np.arange(c, dtype=np.int64)[:, None] * length + idx.astype(np.int64)).ravel()
    sums = np.bincount(flat, weights=val.astype(np.float64, copy=False).ravel(),
                       minlength=c * length)
    counts = np.bincount(flat, minlength=c * length)
    if world_divisor > 0:
        np.divide(sums, float(world_divisor), out=sums, where=counts > 0)
    else:
        np.divide(sums, counts, out=sums, where=counts > 0)
    return sums.reshape(c, length)

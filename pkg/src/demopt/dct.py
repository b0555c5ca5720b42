"""Orthonormal separable DCT applied per chunk.

The forward transform is the orthonormal type-II DCT; its inverse is the
matrix transpose (type III).  Transform matrices are built once per edge
length and cached, so per-step work is a handful of small matrix products.
Products are accumulated in float64 even for float32 blocks, with rounding
back to the block dtype after each axis.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np

from demopt import _kernels
from demopt.errors import ShapeMismatchError


@dataclass(frozen=True)
class DctBasis:
    """Precomputed transform pair for one edge length.

    ``forward`` rows are the orthonormal DCT-II basis vectors;
    ``inverse`` is its transpose.
    """

    size: int
    forward: np.ndarray
    inverse: np.ndarray


def build_basis(n: int) -> DctBasis:
    """forward[k, j] = sqrt(2/N) * c_k * cos(pi * (2j+1) * k / (2N)), c_0 = 1/sqrt(2)."""
    if n < 1:
        raise ShapeMismatchError(f"basis size must be >= 1, got {n}")
    j = np.arange(n, dtype=np.float64)
    k = j[:, None]
    forward = math.sqrt(2.0 / n) * np.cos(np.pi * (2.0 * j + 1.0) * k / (2.0 * n))
    forward[0, :] /= math.sqrt(2.0)
    forward = np.ascontiguousarray(forward)
    return DctBasis(size=n, forward=forward, inverse=np.ascontiguousarray(forward.T))


class BasisCache:
    """Lazily built, never-evicted map from edge length to basis.

    Shared read-mostly across worker threads; the lock makes construction
    race-free (at most one build per size).
    """

    def __init__(self):
        self._bases: dict[int, DctBasis] = {}
        self._lock = threading.Lock()

    def get(self, n: int) -> DctBasis:
        basis = self._bases.get(n)
        if basis is None:
            with self._lock:
                basis = self._bases.get(n)
                if basis is None:
                    basis = build_basis(n)
                    self._bases[n] = basis
        return basis

    def sizes(self) -> tuple[int, ...]:
        return tuple(sorted(self._bases))


def _apply_separable(blocks: np.ndarray, cache: BasisCache, inverse: bool) -> np.ndarray:
    """Apply the per-axis transform to a batch shaped (num_blocks, s_0, ..., s_{d-1})."""
    if blocks.ndim < 2:
        raise ShapeMismatchError("expected a batch of blocks with at least one axis each")
    out = np.ascontiguousarray(blocks)
    shape = out.shape
    for axis in range(1, out.ndim):
        n = shape[axis]
        basis = cache.get(n)
        mat = basis.inverse if inverse else basis.forward
        pre = math.prod(shape[:axis])
        post = math.prod(shape[axis + 1:])
        out = _kernels.dct_axis(out.reshape(pre, n, post), mat).reshape(shape)
    return out


def dct_forward_blocks(blocks: np.ndarray, cache: BasisCache) -> np.ndarray:
    """Separable forward DCT over a batch of chunks; same shape out."""
    return _apply_separable(blocks, cache, inverse=False)


def dct_inverse_blocks(coeffs: np.ndarray, cache: BasisCache) -> np.ndarray:
    """Separable inverse DCT over a batch of coefficient chunks."""
    return _apply_separable(coeffs, cache, inverse=True)


def dct_forward_chunk(block: np.ndarray, cache: BasisCache) -> np.ndarray:
    """Forward transform of a single chunk."""
    return dct_forward_blocks(block[None, ...], cache)[0]


def dct_inverse_chunk(coeffs: np.ndarray, cache: BasisCache) -> np.ndarray:
    """Inverse transform of a single chunk."""
    return dct_inverse_blocks(coeffs[None, ...], cache)[0]

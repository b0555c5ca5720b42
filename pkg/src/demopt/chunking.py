"""Dense tensors and their decomposition into contiguous chunks.

Tensors are plain C-contiguous numpy arrays (float32 or float64, fixed at
construction).  A ``ChunkGeometry`` splits an n-D tensor of shape
``(n_0, ..., n_{d-1})`` into blocks of shape ``(s_0, ..., s_{d-1})`` where
every ``s_i`` divides ``n_i``.  Chunking is a pure reindexing: round-tripping
through ``chunk``/``unchunk`` is bit-exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from demopt.errors import NonDivisibleError, ShapeMismatchError

# Tensors are bare numpy arrays; the alias only documents intent.
DenseTensor = np.ndarray


@dataclass(frozen=True)
class ChunkGeometry:
    """Blocking of a tensor shape into equal contiguous chunks."""

    tensor_shape: tuple[int, ...]
    chunk_shape: tuple[int, ...]
    chunk_grid: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        tshape = tuple(int(n) for n in self.tensor_shape)
        cshape = tuple(int(s) for s in self.chunk_shape)
        object.__setattr__(self, "tensor_shape", tshape)
        object.__setattr__(self, "chunk_shape", cshape)
        if len(tshape) == 0:
            raise ShapeMismatchError("tensor shape must have at least one dimension")
        if len(cshape) != len(tshape):
            raise ShapeMismatchError(
                f"chunk shape {cshape} has different rank than tensor shape {tshape}"
            )
        for n, s in zip(tshape, cshape):
            if s < 1 or n < 1:
                raise ShapeMismatchError("shapes must be positive")
            if n % s != 0:
                raise NonDivisibleError(f"chunk edge {s} does not divide tensor edge {n}")
        object.__setattr__(
            self, "chunk_grid", tuple(n // s for n, s in zip(tshape, cshape))
        )

    @property
    def num_chunks(self) -> int:
        return math.prod(self.chunk_grid)

    @property
    def chunk_volume(self) -> int:
        return math.prod(self.chunk_shape)


def clamp_chunk_shape(tensor_shape, requested: int) -> ChunkGeometry:
    """Pick, per dimension, the largest divisor of the edge that is <= requested.

    Keeps chunking exactly invertible for shapes the requested edge does not
    divide; ``s_i = 1`` always exists so this never fails.
    """
    if requested < 1:
        raise ShapeMismatchError(f"requested chunk edge must be >= 1, got {requested}")
    chunk_shape = []
    for n in tensor_shape:
        n = int(n)
        if n < 1:
            raise ShapeMismatchError(f"tensor edges must be positive, got {n}")
        s = min(requested, n)
        while n % s != 0:
            s -= 1
        chunk_shape.append(s)
    return ChunkGeometry(tuple(int(n) for n in tensor_shape), tuple(chunk_shape))


def chunk(t: DenseTensor, g: ChunkGeometry) -> np.ndarray:
    """Split ``t`` into blocks, returned as an array of shape (num_chunks, *chunk_shape).

    Blocks are ordered row-major over the chunk grid, so concatenating them
    back (see ``unchunk``) reproduces ``t`` exactly.
    """
    if tuple(t.shape) != g.tensor_shape:
        raise ShapeMismatchError(
            f"tensor shape {tuple(t.shape)} does not match geometry {g.tensor_shape}"
        )
    d = len(g.tensor_shape)
    interleaved_shape = []
    for grid, s in zip(g.chunk_grid, g.chunk_shape):
        interleaved_shape.extend((grid, s))
    # (g0, s0, g1, s1, ...) -> (g0, g1, ..., s0, s1, ...)
    order = tuple(range(0, 2 * d, 2)) + tuple(range(1, 2 * d, 2))
    blocks = np.ascontiguousarray(t).reshape(interleaved_shape).transpose(order)
    return np.ascontiguousarray(blocks).reshape((g.num_chunks,) + g.chunk_shape)


def unchunk(blocks: np.ndarray, g: ChunkGeometry) -> DenseTensor:
    """Inverse of ``chunk``: reassemble blocks into the full tensor."""
    expected = (g.num_chunks,) + g.chunk_shape
    if tuple(blocks.shape) != expected:
        raise ShapeMismatchError(
            f"block array shape {tuple(blocks.shape)} does not match geometry {expected}"
        )
    d = len(g.tensor_shape)
    split = blocks.reshape(g.chunk_grid + g.chunk_shape)
    # (g0, g1, ..., s0, s1, ...) -> (g0, s0, g1, s1, ...)
    order = []
    for i in range(d):
        order.extend((i, d + i))
    return np.ascontiguousarray(split.transpose(order)).reshape(g.tensor_shape)

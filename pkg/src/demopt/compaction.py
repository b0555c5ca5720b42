"""Fast-component extraction and reconstruction.

The forward direction chunks a momentum tensor, DCT-transforms each chunk,
and keeps the k coefficients of largest absolute value per chunk as a
(frequency-index, amplitude) pair.  The reverse direction scatters the kept
coefficients back into dense chunks -- averaging amplitudes where several
workers picked the same bin -- and applies the inverse DCT.

Amplitudes are held in float32, the wire precision, from the moment of
extraction.  That makes serialization lossless and guarantees that the
extracting worker's own reconstruction equals what every receiving worker
computes from the same components.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from demopt import _kernels
from demopt.chunking import ChunkGeometry, DenseTensor, chunk, unchunk
from demopt.dct import BasisCache, dct_forward_blocks, dct_inverse_blocks
from demopt.errors import GeometryMismatchError, InvalidKError, KMismatchError

MERGE_RULES = ("contributor_average", "world_average")


@dataclass(frozen=True)
class CompressedComponents:
    """Per-tensor top-k DCT components from one worker.

    ``freq`` holds flattened row-major in-chunk coefficient indices in
    [0, chunk_volume); ``ampl`` the signed float32 amplitudes.  Both have
    shape (*chunk_grid, k), and within one chunk the k indices are distinct.
    """

    tensor_id: int
    geometry: ChunkGeometry
    k: int
    freq: np.ndarray
    ampl: np.ndarray

    def __eq__(self, other) -> bool:
        if not isinstance(other, CompressedComponents):
            return NotImplemented
        return (
            self.tensor_id == other.tensor_id
            and self.geometry == other.geometry
            and self.k == other.k
            and np.array_equal(self.freq, other.freq)
            and np.array_equal(self.ampl, other.ampl)
        )


@dataclass(frozen=True)
class MergedComponents:
    """Rank-ordered concatenation of W workers' components along the last axis."""

    tensor_id: int
    geometry: ChunkGeometry
    k: int
    world_size: int
    freq: np.ndarray
    ampl: np.ndarray


def _reconstruct_dense(
    freq: np.ndarray,
    ampl: np.ndarray,
    g: ChunkGeometry,
    cache: BasisCache,
    dtype,
    world_divisor: float = 0.0,
) -> DenseTensor:
    """Scatter components into dense coefficient chunks, inverse-DCT, unchunk.

    The scatter and inverse transform run in float64; the result is cast to
    ``dtype`` at the end.
    """
    num_chunks = g.num_chunks
    volume = g.chunk_volume
    idx = np.ascontiguousarray(freq.reshape(num_chunks, -1), dtype=np.int32)
    val = np.ascontiguousarray(ampl.reshape(num_chunks, -1), dtype=np.float64)
    dense = _kernels.scatter_merge(idx, val, volume, world_divisor)
    blocks = dct_inverse_blocks(dense.reshape((num_chunks,) + g.chunk_shape), cache)
    return unchunk(blocks.astype(dtype, copy=False), g)


def extract_fast_components(
    m: DenseTensor,
    g: ChunkGeometry,
    k: int,
    cache: BasisCache,
    tensor_id: int = 0,
) -> tuple[DenseTensor, CompressedComponents]:
    """Top-k DCT components of ``m`` per chunk, plus their reconstruction ``q``.

    ``q`` has the shape and dtype of ``m`` and is exactly what a receiver
    would rebuild from the components alone, so ``m - q`` is the momentum
    residual left behind after synchronization.
    """
    volume = g.chunk_volume
    if not 1 <= k <= volume:
        raise InvalidKError(f"k={k} outside [1, {volume}] for chunk shape {g.chunk_shape}")
    coeffs = dct_forward_blocks(chunk(m, g), cache)
    idx, vals = _kernels.topk_abs(
        np.ascontiguousarray(coeffs.reshape(g.num_chunks, volume)), k
    )
    freq = idx.reshape(g.chunk_grid + (k,))
    ampl = vals.astype(np.float32).reshape(g.chunk_grid + (k,))
    components = CompressedComponents(
        tensor_id=tensor_id, geometry=g, k=k, freq=freq, ampl=ampl
    )
    q = _reconstruct_dense(freq, ampl, g, cache, m.dtype)
    return q, components


def merge_components(parts: Sequence[CompressedComponents]) -> MergedComponents:
    """All-gather merge: concatenate W workers' components along the last axis."""
    if not parts:
        raise GeometryMismatchError("need at least one worker's components")
    first = parts[0]
    for p in parts[1:]:
        if p.geometry != first.geometry or p.tensor_id != first.tensor_id:
            raise GeometryMismatchError(
                f"components disagree on tensor/geometry for tensor {first.tensor_id}"
            )
        if p.k != first.k:
            raise KMismatchError(f"components disagree on k for tensor {first.tensor_id}")
    return MergedComponents(
        tensor_id=first.tensor_id,
        geometry=first.geometry,
        k=first.k,
        world_size=len(parts),
        freq=np.concatenate([p.freq for p in parts], axis=-1),
        ampl=np.concatenate([p.ampl for p in parts], axis=-1),
    )


def reconstruct_merged(
    merged: MergedComponents,
    cache: BasisCache,
    dtype=np.float32,
    merge_rule: str = "contributor_average",
) -> DenseTensor:
    """Duplicate-averaged reconstruction of merged components.

    Under ``contributor_average`` a bin selected by several workers holds the
    mean over those workers; bins picked by a single worker pass through
    unscaled.  ``world_average`` divides every selected bin by the world size
    instead.
    """
    if merge_rule not in MERGE_RULES:
        raise ValueError(f"merge_rule must be one of {MERGE_RULES}, got {merge_rule!r}")
    divisor = float(merged.world_size) if merge_rule == "world_average" else 0.0
    return _reconstruct_dense(
        merged.freq, merged.ampl, merged.geometry, cache, dtype, world_divisor=divisor
    )


def merge_and_reconstruct(
    parts: Sequence[CompressedComponents],
    g: ChunkGeometry,
    cache: BasisCache,
    dtype=np.float32,
    merge_rule: str = "contributor_average",
) -> DenseTensor:
    """Merge all workers' components for one tensor and rebuild the shared update."""
    merged = merge_components(parts)
    if merged.geometry != g:
        raise GeometryMismatchError("components geometry does not match the target")
    return reconstruct_merged(merged, cache, dtype=dtype, merge_rule=merge_rule)

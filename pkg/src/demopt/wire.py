"""Binary wire format for one worker's per-step components, plus byte math.

Message layout (little-endian):

    magic "DEMO" (4 bytes), version u8 = 1, rank u16, step u32, tensor_count u32
    per tensor:
        tensor_id u32, k u16, chunk_count u32, index_width u8 (2 or 4)
        chunk_count * k frequency indices (index_width bytes each,
            row-major chunk order)
        chunk_count * k amplitudes (IEEE-754 float32)

The encoding is canonical: equal payloads serialize to equal bytes.  The
chunk geometry itself never travels; every worker derives it from the shared
model, so deserialization takes a tensor_id -> ChunkGeometry mapping.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from demopt.chunking import ChunkGeometry
from demopt.compaction import CompressedComponents
from demopt.errors import MalformedPayloadError

MAGIC = b"DEMO"
VERSION = 1
AMPLITUDE_WIDTH = 4

_HEADER = struct.Struct("<4sBHII")
_TENSOR_HEADER = struct.Struct("<IHIB")

HEADER_BYTES = _HEADER.size  # 15
TENSOR_HEADER_BYTES = _TENSOR_HEADER.size  # 11


def index_width_for(chunk_volume: int) -> int:
    """2-byte indices when every index fits u16, 4-byte otherwise."""
    if chunk_volume <= 0x10000:
        return 2
    if chunk_volume <= 0x100000000:
        return 4
    raise ValueError(f"chunk volume {chunk_volume} too large for the wire format")


@dataclass(frozen=True)
class SyncPayload:
    """All of one worker's compressed components for a single step."""

    step: int
    rank: int
    entries: tuple[CompressedComponents, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        ids = [e.tensor_id for e in self.entries]
        if any(b <= a for a, b in zip(ids, ids[1:])):
            raise ValueError(f"entries must have strictly increasing tensor ids, got {ids}")


def component_bytes(geometry: ChunkGeometry, k: int) -> int:
    """Index plus amplitude bytes for one tensor's components."""
    width = index_width_for(geometry.chunk_volume)
    return geometry.num_chunks * k * (width + AMPLITUDE_WIDTH)


def bytes_per_step(model_geometry, k: int, world_size: int = 1) -> int:
    """Analytic per-worker payload bytes for one step.

    ``model_geometry`` is a sequence of ChunkGeometry (or (shape, geometry)
    pairs).  The per-worker payload is what each worker contributes to the
    all-gather and is independent of ``world_size``.
    """
    total = 0
    for entry in model_geometry:
        g = entry[1] if isinstance(entry, (tuple, list)) else entry
        total += component_bytes(g, k)
    return total


def serialize_accounted(payload: SyncPayload) -> tuple[bytes, dict[int, int]]:
    """Encode a payload; also return measured component bytes per tensor."""
    parts = [
        _HEADER.pack(MAGIC, VERSION, payload.rank, payload.step, len(payload.entries))
    ]
    per_tensor: dict[int, int] = {}
    for entry in payload.entries:
        g = entry.geometry
        width = index_width_for(g.chunk_volume)
        idx_dtype = "<u2" if width == 2 else "<u4"
        idx_bytes = np.ascontiguousarray(entry.freq, dtype=idx_dtype).tobytes()
        ampl_bytes = np.ascontiguousarray(entry.ampl, dtype="<f4").tobytes()
        parts.append(
            _TENSOR_HEADER.pack(entry.tensor_id, entry.k, g.num_chunks, width)
        )
        parts.append(idx_bytes)
        parts.append(ampl_bytes)
        per_tensor[entry.tensor_id] = len(idx_bytes) + len(ampl_bytes)
    return b"".join(parts), per_tensor


def serialize(payload: SyncPayload) -> bytes:
    return serialize_accounted(payload)[0]


def deserialize(data: bytes, geometry_by_id: Mapping[int, ChunkGeometry]) -> SyncPayload:
    """Decode a message; raises MalformedPayloadError with the failing offset."""
    if len(data) < HEADER_BYTES:
        raise MalformedPayloadError("message shorter than header", len(data))
    magic, version, rank, step, tensor_count = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise MalformedPayloadError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise MalformedPayloadError(f"unsupported version {version}", 4)
    offset = HEADER_BYTES
    entries = []
    last_id = -1
    for _ in range(tensor_count):
        if len(data) < offset + TENSOR_HEADER_BYTES:
            raise MalformedPayloadError("truncated tensor header", offset)
        tensor_id, k, chunk_count, width = _TENSOR_HEADER.unpack_from(data, offset)
        offset += TENSOR_HEADER_BYTES
        if tensor_id <= last_id:
            raise MalformedPayloadError(
                f"tensor ids not strictly increasing at id {tensor_id}", offset
            )
        last_id = tensor_id
        g = geometry_by_id.get(tensor_id)
        if g is None:
            raise MalformedPayloadError(f"unknown tensor id {tensor_id}", offset)
        if chunk_count != g.num_chunks:
            raise MalformedPayloadError(
                f"chunk count {chunk_count} does not match geometry "
                f"({g.num_chunks} chunks)", offset)
        expected_width = index_width_for(g.chunk_volume)
        if width != expected_width:
            raise MalformedPayloadError(
                f"index width {width} does not match chunk volume "
                f"{g.chunk_volume}", offset)
        if not 1 <= k <= g.chunk_volume:
            raise MalformedPayloadError(f"k={k} out of range", offset)
        count = chunk_count * k
        idx_nbytes = count * width
        if len(data) < offset + idx_nbytes:
            raise MalformedPayloadError("truncated index block", offset)
        idx_dtype = "<u2" if width == 2 else "<u4"
        freq = np.frombuffer(data, dtype=idx_dtype, count=count, offset=offset)
        if freq.size and int(freq.max()) >= g.chunk_volume:
            raise MalformedPayloadError("frequency index out of range", offset)
        offset += idx_nbytes
        ampl_nbytes = count * AMPLITUDE_WIDTH
        if len(data) < offset + ampl_nbytes:
            raise MalformedPayloadError("truncated amplitude block", offset)
        ampl = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
        offset += ampl_nbytes
        shape = g.chunk_grid + (k,)
        entries.append(
            CompressedComponents(
                tensor_id=tensor_id,
                geometry=g,
                k=k,
                freq=freq.astype(np.int32).reshape(shape),
                ampl=ampl.astype(np.float32).reshape(shape),
            )
        )
    if offset != len(data):
        raise MalformedPayloadError("trailing bytes after last tensor", offset)
    return SyncPayload(step=step, rank=rank, entries=tuple(entries))

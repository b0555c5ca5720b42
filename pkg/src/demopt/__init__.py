"""Decoupled-momentum data-parallel optimization at desk scale.

Workers keep their own momentum, share only the highest-energy DCT
components of it each step, and apply the merged result; the library provides
the transform and compaction kernels, the optimizer, wire format and
transports, plus a training harness and CLI for experiments.
"""

from demopt._kernels import BACKEND as KERNEL_BACKEND
from demopt.chunking import (
    ChunkGeometry,
    chunk,
    clamp_chunk_shape,
    unchunk,
)
from demopt.compaction import (
    MERGE_RULES,
    CompressedComponents,
    MergedComponents,
    extract_fast_components,
    merge_and_reconstruct,
    merge_components,
    reconstruct_merged,
)
from demopt.config import RunConfig, load_config, parse_config, validate_config
from demopt.dct import (
    BasisCache,
    DctBasis,
    build_basis,
    dct_forward_blocks,
    dct_forward_chunk,
    dct_inverse_blocks,
    dct_inverse_chunk,
)
from demopt.errors import (
    ConfigError,
    DemoError,
    GeometryMismatchError,
    InvalidKError,
    KMismatchError,
    MalformedPayloadError,
    NonDivisibleError,
    PeerDisconnectedError,
    ShapeMismatchError,
    StepMismatchError,
    TransportError,
    TransportTimeoutError,
)
from demopt.harness import (
    RunMetrics,
    StepRow,
    run_experiment,
    sweep,
    write_metrics_csv,
)
from demopt.models import finite_difference_check
from demopt.optim import (
    AdamW,
    DemoConfig,
    DemoOptimizer,
    DemoStepStats,
    SgdMomentum,
    Signum,
)
from demopt.transport import (
    CommLedger,
    InMemoryHub,
    TcpCollective,
    bind_listeners,
)
from demopt.wire import SyncPayload, bytes_per_step, deserialize, serialize

__version__ = "0.1.0"

__all__ = [
    "AdamW",
    "BasisCache",
    "ChunkGeometry",
    "CommLedger",
    "CompressedComponents",
    "ConfigError",
    "DctBasis",
    "DemoConfig",
    "DemoError",
    "DemoOptimizer",
    "DemoStepStats",
    "GeometryMismatchError",
    "InMemoryHub",
    "InvalidKError",
    "KERNEL_BACKEND",
    "KMismatchError",
    "MERGE_RULES",
    "MalformedPayloadError",
    "MergedComponents",
    "NonDivisibleError",
    "PeerDisconnectedError",
    "RunConfig",
    "RunMetrics",
    "SgdMomentum",
    "ShapeMismatchError",
    "Signum",
    "StepMismatchError",
    "StepRow",
    "SyncPayload",
    "TcpCollective",
    "TransportError",
    "TransportTimeoutError",
    "bind_listeners",
    "build_basis",
    "bytes_per_step",
    "chunk",
    "clamp_chunk_shape",
    "deserialize",
    "dct_forward_blocks",
    "dct_forward_chunk",
    "dct_inverse_blocks",
    "dct_inverse_chunk",
    "extract_fast_components",
    "finite_difference_check",
    "load_config",
    "merge_and_reconstruct",
    "merge_components",
    "parse_config",
    "reconstruct_merged",
    "run_experiment",
    "serialize",
    "sweep",
    "unchunk",
    "validate_config",
    "write_metrics_csv",
]

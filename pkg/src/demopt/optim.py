"""Decoupled-momentum optimizer and fully-synchronized baselines.

The decoupled optimizer never all-reduces gradients.  Each worker folds its
local gradient into a private momentum, extracts the top-k DCT components
per chunk, keeps the residual, and all-gathers only the compressed
components.  Every worker then applies the identical duplicate-averaged
reconstruction, so parameters stay bit-identical across workers while
momenta are free to diverge.

Per step, for each tensor:

    m <- beta * m + g          (no gradient synchronization)
    q, c <- extract top-k components of m
    m <- m - q                 (slow residual stays local)
    Q <- merge(all_gather(c))
    x <- x - lr * Q            (or lr * sign(Q) in signum mode)

The baselines (SGD with momentum, Signum, AdamW) operate on the all-reduced
mean gradient and exist for convergence-parity comparisons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from demopt.chunking import ChunkGeometry, clamp_chunk_shape
from demopt.compaction import (
    MERGE_RULES,
    extract_fast_components,
    merge_and_reconstruct,
)
from demopt.dct import BasisCache
from demopt.errors import ShapeMismatchError
from demopt.transport import Collective
from demopt.wire import SyncPayload, component_bytes


def sign(t: np.ndarray) -> np.ndarray:
    """Elementwise sign with sign(0) = 0, so zero updates are absorbing."""
    return np.sign(t)


@dataclass
class DemoConfig:
    lr: float
    momentum_decay: float = 0.999
    chunk_request: int = 64
    topk: int = 8
    signum: bool = True
    merge_rule: str = "contributor_average"
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if not 0.0 < self.momentum_decay < 1.0:
            raise ValueError(f"momentum_decay must be in (0, 1), got {self.momentum_decay}")
        if self.chunk_request < 1:
            raise ValueError(f"chunk_request must be >= 1, got {self.chunk_request}")
        if self.topk < 1:
            raise ValueError(f"topk must be >= 1, got {self.topk}")
        if self.merge_rule not in MERGE_RULES:
            raise ValueError(f"merge_rule must be one of {MERGE_RULES}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")


@dataclass
class DemoStepStats:
    step: int
    update_norm: float  # L2 norm of the merged fast components across tensors
    payload_bytes: int


class DemoOptimizer:
    """Per-worker optimizer state machine over a fixed list of parameter tensors.

    Parameters are updated in place.  Chunk geometry is fixed per tensor at
    construction via the largest-divisor rule; ``topk`` must fit the smallest
    chunk volume.
    """

    def __init__(self, params: Sequence[np.ndarray], cfg: DemoConfig,
                 collective: Collective, cache: BasisCache | None = None):
        self.cfg = cfg
        self.collective = collective
        self.cache = cache if cache is not None else BasisCache()
        self.params = list(params)
        self.geometries: list[ChunkGeometry] = []
        self.momenta: list[np.ndarray] = []
        for p in self.params:
            g = clamp_chunk_shape(p.shape, cfg.chunk_request)
            if cfg.topk > g.chunk_volume:
                raise ValueError(
                    f"topk={cfg.topk} exceeds chunk volume {g.chunk_volume} "
                    f"for tensor shape {tuple(p.shape)} (chunk {g.chunk_shape})"
                )
            self.geometries.append(g)
            self.momenta.append(np.zeros_like(p))
        self.step_count = 0

    def payload_bytes_per_step(self) -> int:
        return sum(component_bytes(g, self.cfg.topk) for g in self.geometries)

    def aux_state_floats(self) -> int:
        """Persistent optimizer-state scalars (one momentum tensor per parameter)."""
        return sum(m.size for m in self.momenta)

    def step(self, grads: Sequence[np.ndarray]) -> DemoStepStats:
        cfg = self.cfg
        if len(grads) != len(self.params):
            raise ShapeMismatchError(
                f"expected {len(self.params)} gradients, got {len(grads)}"
            )
        entries = []
        for tid, (p, g_t, m, geom) in enumerate(
            zip(self.params, grads, self.momenta, self.geometries)
        ):
            if g_t.shape != p.shape:
                raise ShapeMismatchError(
                    f"gradient shape {tuple(g_t.shape)} does not match parameter "
                    f"shape {tuple(p.shape)} for tensor {tid}"
                )
            m *= cfg.momentum_decay
            m += g_t
            q, c = extract_fast_components(m, geom, cfg.topk, self.cache, tensor_id=tid)
            m -= q
            entries.append(c)

        payload = SyncPayload(step=self.step_count, rank=self.collective.rank,
                              entries=tuple(entries))
        gathered = self.collective.all_gather(payload)

        sq_norm = 0.0
        for tid, (p, geom) in enumerate(zip(self.params, self.geometries)):
            parts = [pl.entries[tid] for pl in gathered]
            merged = merge_and_reconstruct(
                parts, geom, self.cache, dtype=p.dtype, merge_rule=cfg.merge_rule
            )
            sq_norm += float(np.dot(merged.ravel(), merged.ravel()))
            if cfg.weight_decay > 0:
                p *= 1.0 - cfg.lr * cfg.weight_decay
            if cfg.signum:
                p -= (cfg.lr * sign(merged)).astype(p.dtype, copy=False)
            else:
                p -= (cfg.lr * merged).astype(p.dtype, copy=False)

        self.step_count += 1
        record = self.collective.ledger.records[-1]
        return DemoStepStats(
            step=self.step_count,
            update_norm=math.sqrt(sq_norm),
            payload_bytes=record.payload_bytes,
        )


class SgdMomentum:
    """Plain momentum SGD on the synchronized mean gradient."""

    def __init__(self, params: Sequence[np.ndarray], lr: float,
                 momentum: float = 0.9, weight_decay: float = 0.0):
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = [np.zeros_like(p) for p in self.params]
        self.step_count = 0

    def aux_state_floats(self) -> int:
        return sum(v.size for v in self.velocity)

    def step(self, mean_grads: Sequence[np.ndarray]) -> None:
        for p, g, v in zip(self.params, mean_grads, self.velocity):
            if g.shape != p.shape:
                raise ShapeMismatchError("gradient/parameter shape mismatch")
            v *= self.momentum
            v += g
            if self.weight_decay > 0:
                p *= 1.0 - self.lr * self.weight_decay
            p -= (self.lr * v).astype(p.dtype, copy=False)
        self.step_count += 1


class Signum:
    """Sign of the momentum of the synchronized mean gradient."""

    def __init__(self, params: Sequence[np.ndarray], lr: float,
                 momentum: float = 0.9, weight_decay: float = 0.0):
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = [np.zeros_like(p) for p in self.params]
        self.step_count = 0

    def aux_state_floats(self) -> int:
        return sum(v.size for v in self.velocity)

    def step(self, mean_grads: Sequence[np.ndarray]) -> None:
        for p, g, v in zip(self.params, mean_grads, self.velocity):
            if g.shape != p.shape:
                raise ShapeMismatchError("gradient/parameter shape mismatch")
            v *= self.momentum
            v += g
            if self.weight_decay > 0:
                p *= 1.0 - self.lr * self.weight_decay
            p -= (self.lr * sign(v)).astype(p.dtype, copy=False)
        self.step_count += 1


class AdamW:
    """AdamW with bias correction and decoupled weight decay."""

    def __init__(self, params: Sequence[np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.95, eps: float = 1e-8,
                 weight_decay: float = 0.1):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.exp_avg = [np.zeros_like(p) for p in self.params]
        self.exp_avg_sq = [np.zeros_like(p) for p in self.params]
        self.step_count = 0

    def aux_state_floats(self) -> int:
        return sum(m.size for m in self.exp_avg) + sum(v.size for v in self.exp_avg_sq)

    def step(self, mean_grads: Sequence[np.ndarray]) -> None:
        self.step_count += 1
        t = self.step_count
        bias1 = 1.0 - self.beta1 ** t
        bias2 = 1.0 - self.beta2 ** t
        for p, g, m, v in zip(self.params, mean_grads, self.exp_avg, self.exp_avg_sq):
            if g.shape != p.shape:
                raise ShapeMismatchError("gradient/parameter shape mismatch")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            if self.weight_decay > 0:
                p *= 1.0 - self.lr * self.weight_decay
            update = (m / bias1) / (np.sqrt(v / bias2) + self.eps)
            p -= (self.lr * update).astype(p.dtype, copy=False)

"""Synthetic datasets and deterministic per-worker shards."""

from __future__ import annotations

import numpy as np


def make_blobs(num_samples: int, input_dim: int, num_classes: int,
               spread: float = 3.0, noise: float = 1.0,
               seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian class clusters: centers ~ N(0, spread^2), points ~ N(center, noise^2)."""
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, spread, size=(num_classes, input_dim))
    labels = rng.integers(0, num_classes, size=num_samples)
    points = centers[labels] + rng.normal(0.0, noise, size=(num_samples, input_dim))
    return points, labels


def make_linear_teacher(num_samples: int, input_dim: int, output_dim: int,
                        noise: float = 0.1,
                        seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Targets from a hidden linear map plus Gaussian observation noise."""
    rng = np.random.default_rng(seed)
    teacher = rng.normal(size=(output_dim, input_dim)) / np.sqrt(input_dim)
    x = rng.normal(size=(num_samples, input_dim))
    y = x @ teacher.T + noise * rng.normal(size=(num_samples, output_dim))
    return x, y


def train_holdout_split(x: np.ndarray, y: np.ndarray, holdout_fraction: float):
    """Leading rows train, trailing rows holdout (generators already shuffle)."""
    if not 0.0 <= holdout_fraction < 1.0:
        raise ValueError(f"holdout_fraction must be in [0, 1), got {holdout_fraction}")
    n_hold = int(round(len(x) * holdout_fraction))
    cut = len(x) - n_hold
    return (x[:cut], y[:cut]), (x[cut:], y[cut:])


def split_shards(x: np.ndarray, y: np.ndarray,
                 workers: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Contiguous, disjoint shards covering the dataset; first ranks absorb
    the remainder so sizes differ by at most one."""
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    if len(x) < workers:
        raise ValueError(f"{len(x)} samples cannot cover {workers} shards")
    base, extra = divmod(len(x), workers)
    shards = []
    start = 0
    for rank in range(workers):
        size = base + (1 if rank < extra else 0)
        shards.append((x[start:start + size], y[start:start + size]))
        start += size
    return shards


class DataShard:
    """Deterministic cycling minibatches over one worker's slice.

    Batches advance a cursor with wraparound, so the sequence of batches is a
    pure function of (shard contents, batch size) -- no RNG involved.
    """

    def __init__(self, x: np.ndarray, y: np.ndarray, batch_size: int):
        if batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {batch_size}")
        if len(x) == 0:
            raise ValueError("shard is empty")
        self.x = x
        self.y = y
        self.batch_size = batch_size
        self._pos = 0

    def __len__(self):
        return len(self.x)

    def next_batch(self) -> tuple[np.ndarray, np.ndarray]:
        n = len(self.x)
        idx = (self._pos + np.arange(self.batch_size)) % n
        self._pos = (self._pos + self.batch_size) % n
        return self.x[idx], self.y[idx]


class NullShard:
    """Placeholder for models that ignore data (the quadratic bowl)."""

    def __len__(self):
        return 0

    def next_batch(self):
        return None

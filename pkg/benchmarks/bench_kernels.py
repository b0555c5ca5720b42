"""Timing comparison of the compiled kernels against the numpy fallback.

Runs the three hot kernels (per-axis transform, top-k selection, scatter
merge) on training-shaped workloads and reports per-call time for each
backend.  Both backends are imported directly, so no environment variable
is needed.

Usage: python benchmarks/bench_kernels.py [--repeats N] [--chunks C] [--edge S]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from demopt._kernels import pyref
from demopt.dct import build_basis

try:
    from demopt._kernels import _fast
except ImportError:
    _fast = None


def _time(fn, repeats: int) -> float:
    fn()  # warm up
    start = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - start) / repeats


def _fmt(seconds: float) -> str:
    if seconds < 1e-3:
        return f"{seconds * 1e6:8.1f} us"
    return f"{seconds * 1e3:8.2f} ms"


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=20)
    parser.add_argument("--chunks", type=int, default=1024,
                        help="number of chunks per call")
    parser.add_argument("--edge", type=int, default=64,
                        help="chunk edge length")
    parser.add_argument("--k", type=int, default=8)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    c, s, k = args.chunks, args.edge, args.k
    basis = build_basis(s).forward

    x_last = rng.normal(size=(c, s, 1)).astype(np.float32)
    x_first = rng.normal(size=(c // s if c >= s else 1, s, s)).astype(np.float32)
    rows = rng.normal(size=(c, s * s)).astype(np.float32)
    idx = rng.integers(0, s * s, size=(c, 4 * k)).astype(np.int32)
    val = rng.normal(size=(c, 4 * k)).astype(np.float64)

    cases = [
        (f"dct_axis  ({c} x {s} x 1, f32)",
         lambda mod: mod.dct_axis(x_last, basis)),
        (f"dct_axis  ({x_first.shape[0]} x {s} x {s}, f32)",
         lambda mod: mod.dct_axis(x_first, basis)),
        (f"topk_abs  ({c} x {s * s}, k={k})",
         lambda mod: mod.topk_abs(rows, k)),
        (f"scatter   ({c} x {4 * k} -> {s * s})",
         lambda mod: mod.scatter_merge(idx, val, s * s)),
    ]

    backends = [("python", pyref)]
    if _fast is not None:
        backends.append(("cython", _fast))
    else:
        print("compiled backend unavailable; timing the fallback only")

    header = f"{'kernel':36s}" + "".join(f"{name:>14s}" for name, _ in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10s}"
    print(header)
    for label, call in cases:
        times = [_time(lambda m=mod: call(m), args.repeats)
                 for _, mod in backends]
        line = f"{label:36s}" + "".join(_fmt(t).rjust(14) for t in times)
        if len(times) == 2 and times[1] > 0:
            line += f"{times[0] / times[1]:9.2f}x"
        print(line)


if __name__ == "__main__":
    main()

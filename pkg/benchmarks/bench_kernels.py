"""Benchmark the compiled covering kernels against the NumPy fallback.

Times each kernel on a synthetic instance shaped like the full-scale city
problem (tall, ~0.5% dense) and prints per-backend timings plus speedups.

    python benchmarks/bench_kernels.py [--rows 20000] [--cols 4000] \
        [--row-nnz 25] [--repeats 5] [--seed 0]
"""
from __future__ import annotations

import argparse
import random
import time

import numpy as np

from buscover import kernels
from buscover.scp import ScpInstance


def synth_instance(rows: int, cols: int, row_nnz: int, seed: int) -> ScpInstance:
    rng = random.Random(seed)
    supports = tuple(
        tuple(sorted(rng.sample(range(cols), min(cols, max(1, int(rng.gauss(row_nnz, 3)))))))
        for _ in range(rows))
    return ScpInstance(supports, cols, tuple((i, 0) for i in range(rows)),
                       tuple(range(cols)))


def time_call(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rows", type=int, default=20000)
    parser.add_argument("--cols", type=int, default=4000)
    parser.add_argument("--row-nnz", type=int, default=25)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    inst = synth_instance(args.rows, args.cols, args.row_nnz, args.seed)
    arrays = inst.arrays
    rng = np.random.default_rng(args.seed)
    chosen = np.sort(rng.choice(args.cols, size=args.cols // 8, replace=False)).astype(np.int32)
    uncovered = (rng.random(args.rows) < 0.5).astype(np.uint8)
    avail = np.ones(args.cols, dtype=np.uint8)
    skip = (~uncovered.astype(bool)).astype(np.uint8)
    unavail = np.zeros(args.cols, dtype=np.uint8)

    cases = {
        "greedy_cover": lambda: kernels.greedy_cover(arrays),
        "cover_counts": lambda: kernels.cover_counts(arrays, chosen),
        "column_gains": lambda: kernels.column_gains(arrays, uncovered, avail),
        "dual_ascent": lambda: kernels.dual_ascent(arrays, skip, unavail),
    }

    print(f"instance: {args.rows} x {args.cols}, nnz={inst.nnz}")
    print(f"backends available: {kernels.available_backends()}")
    timings: dict[str, dict[str, float]] = {}
    for backend in kernels.available_backends():
        kernels.set_backend(backend)
        for name, fn in cases.items():
            timings.setdefault(name, {})[backend] = time_call(fn, args.repeats)

    width = max(len(name) for name in cases)
    header = f"{'kernel':<{width}}  " + "".join(f"{b:>12}" for b in sorted(timings["greedy_cover"]))
    if len(timings["greedy_cover"]) > 1:
        header += f"{'speedup':>10}"
    print(header)
    for name, per_backend in timings.items():
        line = f"{name:<{width}}  " + "".join(f"{per_backend[b] * 1e3:>10.2f}ms"
                                              for b in sorted(per_backend))
        if "cython" in per_backend and "python" in per_backend:
            line += f"{per_backend['python'] / per_backend['cython']:>9.1f}x"
        print(line)


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-numpy fallback.

Run: python benchmarks/bench_kernels.py
"""

import time

import numpy as np
from scipy.spatial.distance import cdist

from sketchtraj import kernels


def timeit(fn, *args, repeats=3):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_pairs():
    print(f"{'pairs_within':<34} {'compiled':>10} {'fallback':>10} {'speedup':>9}")
    rng = np.random.default_rng(0)
    for n, radius in ((1000, 0.05), (5000, 0.03), (20000, 0.02), (50000, 0.01)):
        a = rng.uniform(0, 1, (n, 3))
        b = rng.uniform(0, 1, (n, 3))
        tc, (ia, ib) = timeit(kernels._impl.pairs_within, a, b, radius)
        tr, (ra, rb) = timeit(kernels._reference.pairs_within, a, b, radius)
        assert np.array_equal(ia, ra) and np.array_equal(ib, rb)
        label = f"n={n}, r={radius} ({len(ia)} pairs)"
        print(f"{label:<34} {tc * 1e3:>8.1f}ms {tr * 1e3:>8.1f}ms {tr / tc:>8.1f}x")


def bench_frechet():
    print(f"\n{'frechet_dp':<34} {'compiled':>10} {'fallback':>10} {'speedup':>9}")
    rng = np.random.default_rng(1)
    for n in (100, 300, 1000):
        a = rng.normal(0, 1, (n, 2))
        b = rng.normal(0, 1, (n, 2))
        costs = cdist(a, b)
        tc, vc = timeit(kernels._impl.frechet_dp, costs)
        tr, vr = timeit(kernels._reference.frechet_dp, costs)
        assert vc == vr
        label = f"{n} x {n} points"
        print(f"{label:<34} {tc * 1e3:>8.1f}ms {tr * 1e3:>8.1f}ms {tr / tc:>8.1f}x")


if __name__ == "__main__":
    if kernels.COMPILED:
        print("compiled extension: available\n")
        bench_pairs()
        bench_frechet()
    else:
        print("compiled extension: NOT built; only the numpy fallback is "
              "available, nothing to compare")

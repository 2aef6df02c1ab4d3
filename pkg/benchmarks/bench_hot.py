"""Compiled versus numpy timings of the two hot kernels.

Usage: ``python benchmarks/bench_hot.py [--points N] [--repeat R]``.  Both
backends are imported side by side, so the environment flag is not needed
here; the first numba call (compilation) is excluded from the timings.
"""
import argparse
import time

import numpy as np

from lwvlasov._hot import characteristics, retarded
from lwvlasov.quadrature import SphereRule


def best_of(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        tic = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - tic)
    return best


def trace_case(n_points, rng):
    n = 16
    F = np.ascontiguousarray(rng.normal(size=(21, n, n, n, 6)) * 0.05)
    origin = np.full(3, -1.5)
    x = rng.uniform(-0.8, 0.8, size=(n_points, 3))
    xi = rng.uniform(-0.6, 0.6, size=(n_points, 3))
    args = (x, xi, 0.5, 0.0, 20, F, origin, 0.2, 0.025)
    return (lambda: characteristics.trace_numba(*args)), (lambda: characteristics.trace_numpy(*args))


def retarded_case(n_points, rng):
    n = 16
    coeffs = np.ascontiguousarray(rng.normal(size=(21, n, n, n, 4)))
    origin = np.full(3, -1.5)
    pts = rng.uniform(-1.0, 1.0, size=(n_points, 3))
    rule = SphereRule(12, 24)
    slice_idx = np.arange(19, -1, -1)
    lags = 0.025 * np.arange(1, 21)
    lag_w = lags * 0.025 / (4 * np.pi)
    args = (pts, coeffs, origin, 0.2, slice_idx, lags, lag_w, rule.points, rule.weights)
    return (lambda: retarded.retarded_sum_numba(*args)), (lambda: retarded.retarded_sum_numpy(*args))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'kernel':<14}{'points':>8}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}")
    for name, case, pts in (("trace", trace_case, args.points), ("retarded_sum", retarded_case, args.points // 10)):
        fast, slow = case(pts, rng)
        fast()  # compile
        a, b = fast(), slow()
        for u, v in zip(a if isinstance(a, tuple) else (a,), b if isinstance(b, tuple) else (b,)):
            assert np.allclose(u, v, rtol=1e-10, atol=1e-12), "backends disagree"
        t_fast, t_slow = best_of(fast, args.repeat), best_of(slow, args.repeat)
        print(f"{name:<14}{pts:>8}{t_fast:>12.4f}{t_slow:>12.4f}{t_slow / t_fast:>10.1f}")


if __name__ == "__main__":
    main()

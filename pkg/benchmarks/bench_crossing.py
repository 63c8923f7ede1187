"""Benchmark the compiled crossing-scan kernel against the pure-Python twin.

Run:  python benchmarks/bench_crossing.py [--samples 80] [--pairs 20000]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from braidkit._kernel import scan_py

try:
    from braidkit._kernel import _scan_c
except ImportError:
    _scan_c = None


def make_cases(rng: np.random.Generator, n_pairs: int, n_samples: int):
    cases = []
    for _ in range(n_pairs):
        ts = np.arange(1.0, n_samples + 1.0)
        dx = rng.normal(0.0, 3.0, size=n_samples).cumsum() - rng.uniform(-4, 4)
        dy = rng.normal(0.0, 1.0, size=n_samples).cumsum() + rng.uniform(-3, 3)
        cases.append((ts, np.ascontiguousarray(dx), np.ascontiguousarray(dy)))
    return cases


def bench(fn, cases, eps=1e-9):
    start = time.perf_counter()
    crossings = 0
    for ts, dx, dy in cases:
        t_stars, _ = fn(ts, dx, dy, eps)
        crossings += len(t_stars)
    return time.perf_counter() - start, crossings


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--samples", type=int, default=80, help="samples per trajectory pair")
    parser.add_argument("--pairs", type=int, default=20000, help="trajectory pairs to scan")
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    cases = make_cases(rng, args.pairs, args.samples)

    backends = [("python", scan_py.scan_crossings)]
    if _scan_c is not None:
        backends.append(("cython", _scan_c.scan_crossings))
    else:
        print("compiled kernel not built; benchmarking the fallback only")

    results = {}
    for name, fn in backends:
        best = float("inf")
        crossings = 0
        for _ in range(args.repeat):
            elapsed, crossings = bench(fn, cases)
            best = min(best, elapsed)
        results[name] = best
        rate = args.pairs / best
        print(f"{name:8s} {best * 1e3:9.1f} ms   {rate:12,.0f} pairs/s   ({crossings} crossings)")

    if len(results) == 2:
        print(f"speedup: {results['python'] / results['cython']:.1f}x")
        t_c, y_c = _scan_c.scan_crossings(*cases[0], 1e-9)
        t_p, y_p = scan_py.scan_crossings(*cases[0], 1e-9)
        assert t_c == t_p and y_c == y_p, "backends disagree"


if __name__ == "__main__":
    main()

"""Benchmark the numba kernels against the pure-numpy fallback.

Run as ``python -m wepadim.benchmark [--locations P] [--dim D] [--repeat R]``.
Loads both backend modules directly, so the WEPADIM_NO_NUMBA flag is not
needed here.
"""

from __future__ import annotations

import argparse
import time

import numpy as np


def _time(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run_benchmark(locations: int, dim: int, rows: int, width: int,
                  repeat: int) -> list[tuple[str, float, float]]:
    from .kernels import _numpy

    backends = [("numpy", _numpy)]
    try:
        from .kernels import _numba

        backends.append(("numba", _numba))
    except ImportError:
        pass

    rng = np.random.default_rng(0)
    x = rng.standard_normal((rows, width))
    lo = rng.standard_normal(8)
    hi = rng.standard_normal(8)
    emb = rng.standard_normal((locations, dim))
    chol = np.tril(rng.standard_normal((locations, dim, dim))) + 4.0 * np.eye(dim)
    delta = rng.standard_normal((locations, dim))
    packed = dim * (dim + 1) // 2

    cases = []
    for name, mod in backends:
        mod.analysis_lastaxis(x[:2], lo, hi)  # warm up / compile
        mod.accumulate_moments(np.zeros((2, dim)), np.zeros((2, packed)), emb[:2])
        mod.mahalanobis_sq(chol[:2], delta[:2])

        t_dwt = _time(lambda m=mod: m.analysis_lastaxis(x, lo, hi), repeat)
        sums = np.zeros((locations, dim))
        outer = np.zeros((locations, packed))
        t_acc = _time(lambda m=mod: m.accumulate_moments(sums, outer, emb), repeat)
        t_mah = _time(lambda m=mod: m.mahalanobis_sq(chol, delta), repeat)
        cases.append((name, t_dwt, t_acc, t_mah))
    return cases


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--locations", type=int, default=784)
    parser.add_argument("--dim", type=int, default=448)
    parser.add_argument("--rows", type=int, default=4096)
    parser.add_argument("--width", type=int, default=56)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)

    cases = run_benchmark(args.locations, args.dim, args.rows, args.width,
                          args.repeat)
    print(f"kernel benchmark: locations={args.locations} dim={args.dim} "
          f"conv rows={args.rows}x{args.width} (best of {args.repeat})")
    print(f"{'backend':8s} {'dwt_analysis':>14s} {'accumulate':>12s} {'mahalanobis':>12s}")
    for name, t_dwt, t_acc, t_mah in cases:
        print(f"{name:8s} {t_dwt * 1e3:12.2f}ms {t_acc * 1e3:10.2f}ms {t_mah * 1e3:10.2f}ms")
    if len(cases) == 2:
        base = cases[0]
        fast = cases[1]
        print(f"speedup (numba vs numpy): dwt x{base[1] / fast[1]:.1f}, "
              f"accumulate x{base[2] / fast[2]:.1f}, mahalanobis x{base[3] / fast[3]:.1f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

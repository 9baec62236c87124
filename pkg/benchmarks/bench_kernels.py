"""Benchmark the compiled kernel extension against the numpy fallback.

Times the three hot loops on representative workloads: Heisenberg geodesic
norms (the Monte-Carlo volume calibration shape), pairwise distance
matrices (net construction and non-local kernels on H1), and the non-local
pair-energy sum (the O(N^2) double integral).

Usage: python benchmarks/bench_kernels.py [--quick]
"""

import argparse
import time

import numpy as np

from sublaplab import _kernels_fallback as fallback

try:
    from sublaplab import _kernels as compiled
except ImportError:
    compiled = None


def timeit(fn, repeats=3):
    best = float("inf")
    value = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        value = fn()
        best = min(best, time.perf_counter() - t0)
    return best, value


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--quick", action="store_true",
                        help="smaller workloads (CI smoke)")
    args = parser.parse_args()

    n_norm = 200_000 if args.quick else 2_000_000
    n_pair = 400 if args.quick else 1200
    n_energy = 800 if args.quick else 2000

    rng = np.random.default_rng(0)
    pts = np.ascontiguousarray(rng.normal(size=(n_norm, 3)) * 2.0)
    cols = [np.ascontiguousarray(pts[:, a]) for a in range(3)]
    cloud = np.ascontiguousarray(rng.normal(size=(n_pair, 3)))
    coords = np.ascontiguousarray(rng.normal(size=(n_energy, 2)))
    f = np.ascontiguousarray(rng.normal(size=n_energy))
    haar = np.full(n_energy, 1e-2)
    muw = np.ascontiguousarray(np.abs(rng.normal(size=n_energy)) * 1e-2)

    cases = [
        (f"h1_cc_norm ({n_norm:,} points)",
         lambda impl: impl.h1_cc_norm(*cols)),
        (f"pairwise_h1_dist ({n_pair} x {n_pair})",
         lambda impl: impl.pairwise_h1_dist(cloud, cloud)),
        (f"pair_energy_coords (N={n_energy:,})",
         lambda impl: impl.pair_energy_coords(f, coords, haar, muw,
                                              1.0, 1.0, 2.0)),
    ]

    print(f"{'kernel':<36} {'python':>10} {'compiled':>10} {'speedup':>9}")
    for label, call in cases:
        t_py, v_py = timeit(lambda: call(fallback))
        if compiled is None:
            print(f"{label:<36} {t_py:>9.3f}s {'n/a':>10} {'n/a':>9}")
            continue
        t_c, v_c = timeit(lambda: call(compiled))
        if np.isscalar(v_py):
            agree = abs(v_py - v_c) <= 1e-10 * max(abs(v_py), 1.0)
        else:
            agree = np.max(np.abs(np.asarray(v_py) - np.asarray(v_c))) < 1e-8
        flag = "" if agree else "  !! MISMATCH"
        print(f"{label:<36} {t_py:>9.3f}s {t_c:>9.3f}s {t_py / t_c:>8.1f}x{flag}")
    if compiled is None:
        print("\ncompiled extension not available; build with "
              "`pip install -e . --no-build-isolation`")


if __name__ == "__main__":
    main()

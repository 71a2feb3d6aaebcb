"""Time grid vs linear window queries on random clouds.

    python3 scripts/bench_spatial.py [--windows 200] [--sizes 1000 10000 100000]
"""

import argparse
import time

import numpy as np

from uconv.spatial import WindowQuery, build_grid, linear_query


def bench(n, n_windows, rng):
    pts = rng.uniform(0, 10, (n, 2))
    qs = [WindowQuery(o, [0.4, 0.2]) for o in rng.uniform(0, 9.5, (n_windows, 2))]
    t0 = time.perf_counter()
    index = build_grid(pts)
    t_build = time.perf_counter() - t0
    t0 = time.perf_counter()
    hits_grid = [index.query(q) for q in qs]
    t_grid = time.perf_counter() - t0
    t0 = time.perf_counter()
    hits_lin = [linear_query(pts, q) for q in qs]
    t_lin = time.perf_counter() - t0
    assert all(np.array_equal(a, b) for a, b in zip(hits_grid, hits_lin))
    return t_build, t_grid, t_lin


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--windows", type=int, default=200)
    ap.add_argument("--sizes", type=int, nargs="+", default=[1_000, 10_000, 100_000])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    print(f"{'N':>8} {'build ms':>9} {'grid ms':>9} {'linear ms':>10} {'speedup':>8}")
    for n in args.sizes:
        b, g, lin = bench(n, args.windows, rng)
        print(f"{n:>8} {1e3 * b:>9.1f} {1e3 * g:>9.1f} {1e3 * lin:>10.1f} {lin / g:>8.1f}")


if __name__ == "__main__":
    main()

"""Timing of the boundary kernel sums: numba loops against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--resolution N] [--targets M] [--rows R]

With CR_HENKIN_DISABLE_NUMBA=1 the loops are not compiled and the
numba column then repeats the numpy path.
"""
import argparse
import time

import numpy as np

from cr_henkin import _accel, _hot
from cr_henkin.geometry import unit_ball
from cr_henkin.grids import build_boundary_grid, build_volume_grid


def best_of(fn, repeat):
    fn()                                   # compile / warm caches
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--resolution", type=int, default=12, help="boundary grid resolution")
    ap.add_argument("--targets", type=int, default=256)
    ap.add_argument("--rows", type=int, default=30, help="charge rows for the multi-form sum")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    dom = unit_ball()
    G = build_boundary_grid(dom, resolution=args.resolution)
    V = build_volume_grid(dom, resolution=8)
    rng = np.random.default_rng(0)
    tgt = V.nodes[rng.choice(V.size, args.targets, replace=False)]
    src, g = G.nodes, np.conj(G.nodes)
    q = rng.normal(size=G.size) + 1j * rng.normal(size=G.size)
    Q = rng.normal(size=(args.rows, G.size)) + 0j
    gt = np.conj(tgt)

    print(f"numba default: {_accel.USE_NUMBA}; {G.size} sources x {len(tgt)} targets")
    cases = {
        "source_first": lambda u: _hot.source_first(src, g, q, tgt, use_numba=u),
        "target_first": lambda u: _hot.target_first(src, q, tgt, gt, use_numba=u),
        f"source_first x{args.rows}": lambda u: _hot.source_first(src, g, Q, tgt, use_numba=u),
    }
    print(f"{'kernel':22s} {'numpy [s]':>10s} {'numba [s]':>10s} {'speedup':>8s} {'max diff':>9s}")
    for name, fn in cases.items():
        t_np = best_of(lambda: fn(False), args.repeat)
        t_nb = best_of(lambda: fn(True), args.repeat)
        diff = np.max(np.abs(fn(True) - fn(False)))
        print(f"{name:22s} {t_np:10.4f} {t_nb:10.4f} {t_np / t_nb:8.2f} {diff:9.1e}")


if __name__ == "__main__":
    main()

"""Compiled versus pure-Python geometry kernels.

Run ``python3 benchmarks/bench_kernels.py``; each kernel is timed on the
same inputs with both backends and the speed-up is printed.
"""
import argparse
import timeit

import numpy as np

from thzsense import _kernels_py

try:
    from thzsense import _kernels
except ImportError:
    _kernels = None


def cases(rng, n_seg=2000, n_disc=40, n_rays=500):
    L = 24.0
    segs = rng.uniform(0, L, (n_seg, 4))
    discs = np.column_stack([rng.uniform(0, L, (n_disc, 2)), np.full(n_disc, 0.25)])
    rays = rng.uniform(0, L, (n_rays, 4))
    grid = rng.random((96, 96))
    mirror_cases = [(float(x), float(y), 0.25, 0.0, float(v), float(px), float(py))
            for x, y, v, px, py in rng.uniform(1, L - 1, (200, 5))]
    return {
        "segments_hit_discs": lambda k: k.segments_hit_discs(segs, discs),
        "traverse_cells": lambda k: [k.traverse_cells(*r, 0.25, 96, 96) for r in rays],
        "rays_max": lambda k: k.rays_max(grid, rays, 0.25),
        "specular_point": lambda k: [k.specular_point(*s) for s in mirror_cases],
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled kernels not built; only the pure-Python backend is available")
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<20} {'python ms':>10} {'compiled ms':>12} {'speed-up':>9}")
    for name, fn in cases(rng).items():
        t_py = min(timeit.repeat(lambda: fn(_kernels_py), number=1, repeat=args.repeat)) * 1e3
        if _kernels is None:
            print(f"{name:<20} {t_py:10.2f} {'-':>12} {'-':>9}")
            continue
        t_c = min(timeit.repeat(lambda: fn(_kernels), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<20} {t_py:10.2f} {t_c:12.3f} {t_py / t_c:8.1f}x")


if __name__ == "__main__":
    main()

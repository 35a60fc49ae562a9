"""Time the compiled kernels against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from gcalc import _kernels_py

try:
    from gcalc import _kernels
except ImportError:
    _kernels = None


def gheat_case(rows, n, steps):
    x = np.linspace(-7.0, 7.0, n)
    u0 = np.tile(np.maximum(x, 0.0), (rows, 1))

    def run(mod):
        u = u0.copy()
        mod.gheat_steps(u, 0.5, 0.25, steps)
        return u

    return run


def lattice_case(n, steps):
    v0 = np.abs(np.linspace(-7.0, 7.0, n))

    def run(mod):
        v = v0.copy()
        mod.lattice_steps(v, 8.0, 4.0, steps)
        return v

    return run


CASES = {
    "gheat 1x1793, 2000 steps": gheat_case(1, 1793, 2000),
    "gheat 256x449, 200 steps": gheat_case(256, 449, 200),
    "lattice 4097 nodes, 500 steps": lattice_case(4097, 500),
}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if _kernels is None:
        print("compiled extension not built; only the numpy backend is available")
    print(f"{'case':32s} {'numpy [s]':>10s} {'cython [s]':>10s} {'speedup':>8s} {'max diff':>10s}")
    for name, run in CASES.items():
        t_py = min(timeit.repeat(lambda: run(_kernels_py), number=1, repeat=args.repeat))
        if _kernels is None:
            print(f"{name:32s} {t_py:10.4f}")
            continue
        t_cy = min(timeit.repeat(lambda: run(_kernels), number=1, repeat=args.repeat))
        diff = float(np.abs(run(_kernels_py) - run(_kernels)).max())
        print(f"{name:32s} {t_py:10.4f} {t_cy:10.4f} {t_py / t_cy:8.1f} {diff:10.2e}")


if __name__ == "__main__":
    main()

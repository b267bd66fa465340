"""Timing comparison between the compiled kernels and the NumPy fallback.

Usage: python benchmarks/bench_kernels.py [--rows Q] [--cols N] [--repeat R]
"""

import argparse
import time

import numpy as np

from gmbua.backend import get_kernels
from gmbua.penalties import GroupStructure


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rows", type=int, default=60)
    parser.add_argument("--cols", type=int, default=20000)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    v = np.ascontiguousarray(rng.normal(size=(args.rows, args.cols)))
    groups = GroupStructure.from_sizes([args.rows // 6] * 5
                                       + [args.rows - 5 * (args.rows // 6)])
    starts, stops = groups.starts, groups.stops
    t = 0.05

    backends = {}
    for name in ("cython", "numpy"):
        try:
            backends[name] = get_kernels(name)
        except ImportError:
            print(f"{name}: unavailable, skipping")
    if not backends:
        raise SystemExit("no backend available")

    cases = {
        "project_simplex_cols": lambda k: k.project_simplex_cols(v),
        "prox_l1": lambda k: k.prox_l1(v, t),
        "prox_group": lambda k: k.prox_group(v, starts, stops, t),
        "prox_elitist": lambda k: k.prox_elitist(v, starts, stops, t),
        "prox_frac": lambda k: k.prox_frac(v, starts, stops, t, 0.5),
    }

    print(f"matrix {args.rows} x {args.cols}, {len(groups)} groups, "
          f"best of {args.repeat}")
    header = f"{'kernel':<22}" + "".join(f"{n:>12}" for n in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for case, runner in cases.items():
        times = [_time(lambda k=k: runner(k), args.repeat)
                 for k in backends.values()]
        row = f"{case:<22}" + "".join(f"{t_:>10.4f}s" for t_ in times)
        if len(times) == 2:
            row += f"{times[1] / times[0]:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()

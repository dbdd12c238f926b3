"""Compare the compiled kernels with the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from causaldiet import _pykernels

try:
    from causaldiet import _ckernels
except ImportError:  # pragma: no cover
    _ckernels = None


def _cases(rng):
    trace = 100 + 30 * rng.standard_normal(20_000)
    t = np.arange(121, dtype=np.float64)
    v = 100 + 40 * np.sin(t / 40.0)
    adj = np.triu((rng.random((10, 10)) < 0.5).astype(np.int64), 1)
    return {
        "rolling_mean (n=20000)": lambda m: m.rolling_mean(trace, 5),
        "rolling_std (n=20000)": lambda m: m.rolling_std(trace, 5),
        "smoothed_positive_area (121 pts)": lambda m: m.smoothed_positive_area(t, v, 100.0, 5),
        "simple_paths_to (10 nodes, L=3)": lambda m: m.simple_paths_to(adj, 9, 3),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=200)
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled kernels are not built; only the Python timings are shown")
    rng = np.random.default_rng(0)
    print(f"{'kernel':36s} {'python us':>11s} {'cython us':>11s} {'speedup':>8s}")
    for name, fn in _cases(rng).items():
        py = min(timeit.repeat(lambda: fn(_pykernels), number=args.number,
                               repeat=args.repeat)) / args.number * 1e6
        if _ckernels is None:
            print(f"{name:36s} {py:11.1f}")
            continue
        cy = min(timeit.repeat(lambda: fn(_ckernels), number=args.number,
                               repeat=args.repeat)) / args.number * 1e6
        print(f"{name:36s} {py:11.1f} {cy:11.1f} {py / cy:7.1f}x")


if __name__ == "__main__":
    main()

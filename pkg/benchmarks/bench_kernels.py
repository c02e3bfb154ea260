"""Benchmark the hot kernels on both backends (numba vs pure numpy).

Usage: python benchmarks/bench_kernels.py [--rows 200000] [--dim 64] [--repeat 5]

Prints one row per (kernel, backend) with the best wall time over repeats.
The numba timings exclude the first (compilation) call.
"""

import argparse
import time

import numpy as np

from kgalign import kernels


def best_time(fn, repeat):
    fn()  # warmup / jit compile
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rows", type=int, default=200_000)
    parser.add_argument("--dim", type=int, default=64)
    parser.add_argument("--segments", type=int, default=2_000)
    parser.add_argument("--dist-n", type=int, default=1_500)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    values = rng.normal(size=(args.rows, args.dim))
    scores = rng.normal(size=args.rows)
    ids = rng.integers(0, args.segments, size=args.rows)
    grad = rng.normal(size=(args.rows, args.dim))
    target_proto = np.zeros((args.segments, args.dim))
    a = rng.normal(size=(args.dist_n, args.dim))
    b = rng.normal(size=(args.dist_n, args.dim))

    cases = {
        "segment_sum": lambda: kernels.segment_sum(values, ids, args.segments),
        "segment_max": lambda: kernels.segment_max(scores, ids, args.segments),
        "scatter_add_rows": lambda: kernels.scatter_add_rows(target_proto.copy(), ids, grad),
        "pairwise_manhattan": lambda: kernels.pairwise_manhattan(a, b),
    }

    backends = ["numpy"] + (["numba"] if kernels.HAVE_NUMBA else [])
    print(f"rows={args.rows} dim={args.dim} segments={args.segments} "
          f"dist={args.dist_n}x{args.dist_n}")
    print("kernel\tbackend\tseconds")
    baseline = {}
    for backend in backends:
        kernels.set_backend(backend)
        for name, fn in cases.items():
            elapsed = best_time(fn, args.repeat)
            suffix = ""
            if backend == "numpy":
                baseline[name] = elapsed
            elif name in baseline:
                suffix = f"\t({baseline[name] / elapsed:.1f}x vs numpy)"
            print(f"{name}\t{backend}\t{elapsed:.4f}{suffix}")


if __name__ == "__main__":
    main()

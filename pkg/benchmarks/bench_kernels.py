#!/usr/bin/env python3
"""Time the numba kernels against their numpy fallbacks.

Usage: python3 benchmarks/bench_kernels.py [--repeats N] [--seed S]
"""

import argparse
import time

import numpy as np

from unkdet import kernels


def random_boxes(rng, n):
    wh = rng.uniform(0.02, 0.3, size=(n, 2))
    c = rng.uniform(0.15, 0.85, size=(n, 2))
    return np.hstack([c, wh])


def timeit(fn, repeats):
    fn()  # warm-up, triggers compilation
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(args.seed)

    a, b = random_boxes(rng, 300), random_boxes(rng, 900)
    boxes, scores = random_boxes(rng, 2000), rng.random(2000)
    cost = rng.random((60, 300))

    cases = [
        ("pairwise DIoU 300x900",
         lambda: kernels.pairwise_overlap_nb(a, b, kernels.DIOU),
         lambda: kernels.pairwise_overlap_np(a, b, kernels.DIOU)),
        ("greedy DIoU NMS n=2000",
         lambda: kernels.greedy_nms_nb(boxes, scores, 0.5),
         lambda: kernels.greedy_nms_np(boxes, scores, 0.5)),
        ("assignment 60x300",
         lambda: kernels.linear_assignment_nb(cost),
         lambda: kernels.linear_assignment_np(cost)),
    ]
    print(f"{'kernel':28s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s}  same")
    for name, fast, slow in cases:
        same = np.array_equal(fast(), slow())
        t_nb, t_np = timeit(fast, args.repeats), timeit(slow, args.repeats)
        print(f"{name:28s} {t_nb * 1e3:10.3f} {t_np * 1e3:10.3f} {t_np / t_nb:8.1f}x  {same}")


if __name__ == "__main__":
    main()

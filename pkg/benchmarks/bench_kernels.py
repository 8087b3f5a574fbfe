#!/usr/bin/env python3
"""Benchmark the hot kernels: numba-compiled vs pure-python fallback.

Runs each kernel on a representative workload (CART growth on a bootstrap
of binary features, batch prediction, rank AUC) and prints per-call times
plus the speedup.  The fallback path is the same source without @njit, so
this also doubles as a backend equivalence check.

Usage: python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from walkforest import _kernels
from walkforest._backend import USE_NUMBA


def make_workload(n=800, p=8, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 2, size=(n, p)).astype(np.float64)
    y = (
        (X[:, 0] != 0) & (X[:, 1] != 0) ^ ((X[:, 2] != 0) & (X[:, 3] != 0))
    ).astype(np.int8)
    draws = rng.integers(0, n, size=n)
    counts = np.bincount(draws, minlength=n)
    return X, y, counts


def timeit(fn, repeats, *args):
    fn(*args)  # warm-up / compile
    t0 = time.perf_counter()
    for _ in range(repeats):
        out = fn(*args)
    return (time.perf_counter() - t0) / repeats, out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=50)
    args = parser.parse_args()

    if not USE_NUMBA:
        print("numba disabled (WALKFOREST_NO_NUMBA set or numba missing);")
        print("both columns below run the pure-python path.\n")

    X, y, counts = make_workload()
    order = _kernels.presort(X)

    cases = [
        ("presort", _kernels.presort, _kernels._presort_py, (X,)),
        ("bootstrap_order", _kernels.bootstrap_order, _kernels._bootstrap_order_py,
         (order, counts, int(counts.sum()))),
        ("grow_tree", None, None, None),  # composed below
        ("rank_auc", _kernels.rank_auc, _kernels._rank_auc_py,
         (np.random.default_rng(1).random(300),
          np.random.default_rng(2).integers(0, 2, 300).astype(np.int8))),
    ]

    print(f"{'kernel':<18}{'numba':>12}{'python':>12}{'speedup':>9}")
    boot = _kernels.bootstrap_order(order, counts, int(counts.sum()))
    grow_args = (X, y, boot, 1, -1, 1e-12)
    for name, fast, slow, call_args in cases:
        if name == "grow_tree":
            fast_t, fast_out = timeit(_kernels.grow_tree_ordered, args.repeats, *grow_args)
            slow_t, slow_out = timeit(_kernels._grow_tree_ordered_py, max(3, args.repeats // 20), *grow_args)
            for a, b in zip(fast_out, slow_out):
                np.testing.assert_array_equal(a, b)
        else:
            fast_t, fast_out = timeit(fast, args.repeats, *call_args)
            slow_t, slow_out = timeit(slow, max(3, args.repeats // 20), *call_args)
            np.testing.assert_array_equal(np.asarray(fast_out), np.asarray(slow_out))
        print(f"{name:<18}{fast_t * 1e6:>10.1f}us{slow_t * 1e6:>10.1f}us{slow_t / fast_t:>8.1f}x")

    # end-to-end: one full tree fit + out-of-bag AUC
    feats, thr, left, right, c0, c1, gain = _kernels.grow_tree_ordered(*grow_args)
    oob = np.flatnonzero(counts == 0)
    t, _ = timeit(_kernels.predict_rows, args.repeats, feats, thr, left, right, c0, c1,
                  np.ascontiguousarray(X[oob]))
    print(f"{'predict_rows':<18}{t * 1e6:>10.1f}us{'':>12}{'':>9}")


if __name__ == "__main__":
    main()

"""Timing comparison of the accelerated kernels against the plain-numpy path.

Run:  python3 benchmarks/bench_kernels.py
The accelerated path is the default; TREESCREEN_NO_NUMBA=1 selects the
fallback at import time, so this script times the internal functions of both
paths directly from one process.
"""

import time

import numpy as np

from treescreen import kernels


def timeit(fn, *args, repeat=5):
    fn(*args)  # warmup / JIT
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    rng = np.random.default_rng(0)
    rows = []

    # truncated-normal sampling (copula + risk latent refreshes)
    mean = rng.normal(size=(20_000, 30))
    lo = mean - rng.random(mean.shape)
    hi = mean + rng.random(mean.shape)
    u = rng.random(mean.shape)
    rows.append(("truncnorm_fill", mean.size,
                 timeit(kernels._truncnorm_fill_numpy, mean, lo, hi, u),
                 timeit(kernels.truncnorm_fill, mean, lo, hi, u)))

    # forest evaluation (posterior probability matrices)
    n_draws, tpd, nodes_per_tree = 200, 50, 5
    total_trees = n_draws * tpd
    feat = np.full(total_trees * nodes_per_tree, -1, dtype=np.int64)
    thresh = np.zeros(total_trees * nodes_per_tree)
    left = np.full_like(feat, -1)
    right = np.full_like(feat, -1)
    value = rng.normal(size=total_trees * nodes_per_tree) * 0.1
    roots = np.arange(total_trees, dtype=np.int64) * nodes_per_tree
    for t in range(total_trees):
        b = t * nodes_per_tree
        feat[b] = rng.integers(0, 30)
        thresh[b] = rng.integers(0, 3)
        left[b], right[b] = b + 1, b + 2
    X = rng.integers(0, 4, size=(5000, 30)).astype(np.int8)
    args = (feat, thresh, left, right, value, roots, tpd, X)
    rows.append(("forest_eval", n_draws * len(X),
                 timeit(kernels._forest_eval_numpy, *args),
                 timeit(kernels.forest_eval, *args)))

    # split scan (tree growth)
    Xs = rng.integers(0, 4, size=(200_000, 30)).astype(np.int8)
    ys = rng.random(200_000)
    rows_idx = np.arange(200_000, dtype=np.int64)
    allowed = np.ones(30, dtype=np.bool_)
    args = (Xs, ys, rows_idx, allowed, 4, 25)
    rows.append(("split_scan", Xs.size,
                 timeit(kernels._split_scan_numpy, *args),
                 timeit(kernels.split_scan, *args)))

    # single-tree prediction (test scoring)
    feat1 = np.array([0, 1, -1, -1, -1], dtype=np.int64)
    thresh1 = np.array([1.0, 2.0, 0.0, 0.0, 0.0])
    left1 = np.array([1, 3, -1, -1, -1], dtype=np.int64)
    right1 = np.array([2, 4, -1, -1, -1], dtype=np.int64)
    value1 = np.array([0.0, 0.0, 0.3, 0.5, 0.8])
    args = (feat1, thresh1, left1, right1, value1, Xs)
    rows.append(("tree_predict", len(Xs),
                 timeit(kernels._tree_predict_numpy, *args),
                 timeit(kernels.tree_predict, *args)))

    mode = "numba" if kernels.USE_NUMBA else "numpy fallback (TREESCREEN_NO_NUMBA set)"
    print(f"active path: {mode}\n")
    print(f"{'kernel':<16}{'work items':>12}{'numpy (s)':>12}{'active (s)':>12}{'speedup':>9}")
    for name, work, t_np, t_active in rows:
        print(f"{name:<16}{work:>12}{t_np:>12.4f}{t_active:>12.4f}{t_np / t_active:>9.1f}x")


if __name__ == "__main__":
    main()

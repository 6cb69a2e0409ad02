"""Time the numba and numpy paths of the hot kernels and the fits built on
them, and check that both paths return the same numbers.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--n 300] [--p 60]
"""
import argparse
import time

import numpy as np

from dualroute import _accel, _kernels
from dualroute.trees import gbt_axil_weights, gbt_fit, rf_fit


def _best(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b))


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--n", type=int, default=300)
    ap.add_argument("--p", type=int, default=60)
    args = ap.parse_args(argv)
    if not _accel.NUMBA_AVAILABLE:
        raise SystemExit("numba is not installed; nothing to compare")

    rng = np.random.default_rng(0)
    n, p = args.n, args.p
    X = rng.normal(size=(n, p))
    y = np.sin(X[:, 0]) + X[:, 1] * X[:, 2] + 0.3 * rng.normal(size=n)
    rows = np.arange(n, dtype=np.int64)
    feats = np.arange(p, dtype=np.int64)
    Xt = rng.normal(size=(200, p))
    forest = rf_fit(X, y, B=20, seed=0)
    tree = forest.trees[0]
    H = rng.random((n, n)) / n
    leaf = rng.integers(0, 8, size=n).astype(np.int64)

    cases = {
        "sq_dists": lambda: _kernels.sq_dists(X, X),
        "best_split": lambda: _kernels.best_split(X, y, rows, feats, 1),
        "route": lambda: _kernels.route(Xt, tree.feature, tree.threshold, tree.left,
                                        tree.right, tree.leaf_index),
        "leaf_residual_loadings": lambda: _kernels.leaf_residual_loadings(H, leaf, rows, 8),
        "rf_fit(B=50)": lambda: rf_fit(X, y, B=50, seed=1).predict(Xt),
        "gbt_fit(S=50)+axil": lambda: gbt_axil_weights(gbt_fit(X, y, S=50, seed=1), Xt),
    }
    print(f"N={n} P={p} repeat={args.repeat} (best time)")
    print(f"{'kernel':<26}{'numba s':>12}{'numpy s':>12}{'speedup':>10}  equal")
    saved = _accel.USE_NUMBA
    try:
        for name, fn in cases.items():
            _accel.USE_NUMBA = True
            fn()  # compile
            t_nb, out_nb = _best(fn, args.repeat)
            _accel.USE_NUMBA = False
            t_np, out_np = _best(fn, args.repeat)
            eq = _same(out_nb, out_np)
            close = eq or np.allclose(np.asarray(out_nb, dtype=float),
                                      np.asarray(out_np, dtype=float), rtol=0, atol=1e-12)
            flag = "exact" if eq else ("1e-12" if close else "DIFFER")
            print(f"{name:<26}{t_nb:>12.5f}{t_np:>12.5f}{t_np / t_nb:>10.1f}  {flag}")
    finally:
        _accel.USE_NUMBA = saved


if __name__ == "__main__":
    main()

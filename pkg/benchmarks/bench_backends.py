"""Time the compiled kernels against the numpy fallback.

Usage::

    python benchmarks/bench_backends.py [--repeat 3] [--quick]

Both backends produce identical outputs; the script checks that too.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from oceanchl import _backend, rng
from oceanchl.estimators.svr import rbf_kernel


def _best_time(fn, repeat: int) -> tuple[float, object]:
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def _cases(quick: bool):
    gen = np.random.default_rng(0)
    n_tree = 800 if quick else 3000
    X = gen.random((n_tree, 6))
    y = np.sin(6 * X[:, 0]) + X[:, 1] ** 2 + 0.1 * gen.standard_normal(n_tree)
    samples = np.arange(n_tree, dtype=np.int64)
    key = rng.stream_key(1, rng.TREE_STREAM, 0)

    n_svr = 200 if quick else 600
    Z = gen.standard_normal((n_svr, 6))
    K = rbf_kernel(Z, Z, 1.0 / 6)
    ys = Z[:, 0] - 0.5 * Z[:, 1] ** 2

    n_ref = 5000 if quick else 20000
    R = gen.random((n_ref, 6))
    Q = gen.random((500 if quick else 2000, 6))

    def tree():
        return _backend.kernels().build_tree(X, y, samples, -1, 2, 2, False, key)

    def extra():
        return _backend.kernels().build_tree(X, y, samples, -1, 2, 6, True, key)

    def smo():
        return _backend.kernels().smo(K, ys, 1.0, 0.1, 1e-3, 1_000_000)

    def knn():
        index = _backend.kernels().make_knn_index(R)
        return index.query(Q, 5)

    return [(f"cart fit n={n_tree}", tree), (f"extra-tree fit n={n_tree}", extra),
            (f"smo n={n_svr}", smo), (f"knn n={n_ref} q={len(Q)}", knn)]


def _same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    if isinstance(a, np.ndarray):
        return np.array_equal(a, b)
    return a == b


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--quick", action="store_true", help="smaller problem sizes")
    args = parser.parse_args()
    if "compiled" not in _backend.available():
        raise SystemExit("compiled kernels are not built; run `pip install -e .` first")
    print(f"{'kernel':<28}{'python (s)':>12}{'compiled (s)':>14}{'speedup':>10}  identical")
    for label, fn in _cases(args.quick):
        with _backend.use("python"):
            t_py, out_py = _best_time(fn, args.repeat)
        with _backend.use("compiled"):
            t_c, out_c = _best_time(fn, args.repeat)
        print(f"{label:<28}{t_py:>12.4f}{t_c:>14.4f}{t_py / t_c:>9.1f}x  {_same(out_py, out_c)}")


if __name__ == "__main__":
    main()

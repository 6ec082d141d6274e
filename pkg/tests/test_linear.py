import numpy as np
import pytest

from oceanchl.core import SampleTable
from oceanchl.errors import ArgumentError, RankError
from oceanchl.estimators import EstimatorSpec, fit, fit_ols, fit_ridge, predict_one

from conftest import random_table


def lstsq_oracle(X, y):
    """Intercept + weights from numpy's SVD least squares on the augmented matrix."""
    A = np.column_stack([np.ones(len(y)), X])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return coef[0], coef[1:]


def cost(X, y, w0, w):
    r = y - X @ w - w0
    return float(r @ r)


class TestOLS:
    def test_planted_recovery(self):
        gen = np.random.default_rng(0)
        X = gen.uniform(0.001, 0.02, size=(100, 6))
        y = 3.0 + 2.0 * X[:, 1]
        m = fit_ols(SampleTable.from_arrays(X, y))
        assert abs(m.payload.intercept - 3.0) < 1e-8
        assert np.max(np.abs(m.payload.weights - [0, 2, 0, 0, 0, 0])) < 1e-8

    def test_gradient_vanishes(self):
        t = random_table(200, seed=5)
        m = fit_ols(t)
        A = np.column_stack([np.ones(len(t)), t.rrs])
        w = np.concatenate([[m.payload.intercept], m.payload.weights])
        grad = A.T @ (A @ w - t.chl)
        scale = np.abs(A).max() * np.abs(t.chl).max() * len(t)
        assert np.max(np.abs(grad)) <= 1e-8 * scale

    def test_matches_lstsq(self):
        t = random_table(150, seed=6)
        m = fit_ols(t)
        w0, w = lstsq_oracle(t.rrs, t.chl)
        assert m.payload.intercept == pytest.approx(w0, rel=1e-9)
        assert np.allclose(m.payload.weights, w, rtol=1e-8, atol=1e-8)

    def test_local_minimum_probe(self):
        t = random_table(80, seed=7)
        m = fit_ols(t)
        base = cost(t.rrs, t.chl, m.payload.intercept, m.payload.weights)
        for j in range(7):
            for d in (-1e-3, 1e-3):
                w0 = m.payload.intercept + (d if j == 0 else 0.0)
                w = m.payload.weights.copy()
                if j:
                    w[j - 1] += d
                assert cost(t.rrs, t.chl, w0, w) >= base

    def test_constant_target(self):
        t = random_table(50, seed=2)
        m = fit_ols(SampleTable.from_arrays(t.rrs, np.full(50, 4.25)))
        assert abs(m.payload.intercept - 4.25) < 1e-10
        assert np.max(np.abs(m.payload.weights)) < 1e-10

    def test_duplicate_columns(self):
        t = random_table(50, seed=2)
        X = t.rrs.copy()
        X[:, 3] = X[:, 2]
        with pytest.raises(RankError, match="rrs_490, rrs_510"):
            fit_ols(SampleTable.from_arrays(X, t.chl))

    def test_proportional_columns(self):
        t = random_table(50, seed=2)
        X = t.rrs.copy()
        X[:, 5] = 0.08 * X[:, 4]
        with pytest.raises(RankError, match="rrs_555, rrs_670"):
            fit_ols(SampleTable.from_arrays(X, t.chl))

    def test_constant_column_gets_zero_weight(self):
        t = random_table(60, seed=3)
        X = t.rrs.copy()
        X[:, 0] = 0.003
        m = fit_ols(SampleTable.from_arrays(X, t.chl))
        assert m.payload.weights[0] == 0.0
        w0, w = lstsq_oracle(X[:, 1:], t.chl)
        assert np.allclose(m.payload.weights[1:], w, rtol=1e-8)

    def test_too_few_rows(self):
        with pytest.raises(RankError):
            fit_ols(random_table(6))

    def test_predict_one_constant_model(self):
        m = fit_ols(SampleTable.from_arrays(random_table(20).rrs, np.full(20, 3.0)))
        assert predict_one(m, (0.5,) * 6) == pytest.approx(3.0, abs=1e-9)


class TestRidge:
    def test_lambda_zero_is_ols(self):
        t = random_table(100, seed=9)
        a = fit_ols(t).payload
        b = fit_ridge(t, 0.0).payload
        assert abs(a.intercept - b.intercept) <= 1e-9 * max(1, abs(a.intercept))
        assert np.max(np.abs(a.weights - b.weights)) <= 1e-9 * max(1, np.abs(a.weights).max())

    def test_huge_lambda(self):
        t = random_table(100, seed=9)
        m = fit_ridge(t, 1e9)
        assert np.max(np.abs(m.payload.weights)) < 1e-6
        assert np.allclose(m.predict(t.rrs), t.chl.mean(), atol=1e-6)

    def test_shrinkage_monotone(self):
        gen = np.random.default_rng(1)
        X = gen.standard_normal((60, 6))
        y = X @ gen.standard_normal(6) + 0.3 * gen.standard_normal(60)
        t = SampleTable.from_arrays(X, y)
        norms = [np.linalg.norm(fit_ridge(t, lam).payload.weights)
                 for lam in np.logspace(-3, 4, 10)]
        assert all(a >= b for a, b in zip(norms, norms[1:]))

    def test_matches_direct_oracle(self):
        t = random_table(70, seed=4)
        lam = 0.37
        Xc = t.rrs - t.rrs.mean(axis=0)
        w = np.linalg.solve(Xc.T @ Xc + lam * np.eye(6), Xc.T @ (t.chl - t.chl.mean()))
        assert np.allclose(fit_ridge(t, lam).payload.weights, w, rtol=1e-10)

    def test_negative_lambda(self):
        with pytest.raises(ArgumentError):
            fit_ridge(random_table(10), -1.0)
        with pytest.raises(ArgumentError):
            EstimatorSpec("ridge", {"lambda": -0.5})

    def test_default_spec_via_fit(self):
        t = random_table(40, seed=1)
        m = fit(EstimatorSpec("ridge"), t)
        assert m.spec.hp("lambda") == 1.0

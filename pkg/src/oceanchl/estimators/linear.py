"""Ordinary least squares and ridge regression via the normal equations.

Features and target are centred first, so the intercept never enters the
penalty: ``w = (Xc'Xc + lam*I)^-1 Xc'yc`` and ``w0 = mean(y) - mean(X) @ w``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import BAND_NAMES, SampleTable
from ..errors import ArgumentError, RankError
from ._model import EstimatorSpec, FittedModel, training_arrays

RANK_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class LinearPayload:
    intercept: float
    weights: np.ndarray

    def predict(self, Z: np.ndarray) -> np.ndarray:
        # row-wise reduction keeps each prediction independent of batch size
        return (Z * self.weights).sum(axis=1) + self.intercept

    def to_json(self) -> dict:
        return {"intercept": float(self.intercept), "weights": self.weights.tolist()}

    @classmethod
    def from_json(cls, d: dict) -> "LinearPayload":
        w = np.asarray(d["weights"], dtype=np.float64)
        if w.shape != (len(BAND_NAMES),):
            raise ValueError("weights must have one entry per band")
        return cls(float(d["intercept"]), w)


def _describe_null_space(gram: np.ndarray, names: list[str]) -> str:
    # scale to a correlation matrix so band magnitudes do not skew the pick
    d = np.sqrt(np.diag(gram))
    vals, vecs = np.linalg.eigh(gram / np.outer(d, d))
    v = vecs[:, 0]
    involved = [names[i] for i in np.flatnonzero(np.abs(v) > 0.1 * np.abs(v).max())]
    return "collinear features: " + ", ".join(involved)


def solve_normal_equations(X: np.ndarray, y: np.ndarray, lam: float) -> tuple[float, np.ndarray]:
    """Centred normal-equation solve.

    Columns with zero spread carry no information beyond the intercept and
    get weight 0; with ``lam == 0`` any remaining collinearity is an error.
    """
    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    active = np.flatnonzero(X.max(axis=0) > X.min(axis=0))
    w = np.zeros(X.shape[1])
    if active.size:
        Xc = X[:, active] - x_mean[active]
        gram = Xc.T @ Xc
        if lam == 0.0:
            eig = np.linalg.eigvalsh(gram)
            if eig[0] <= RANK_RTOL * max(eig[-1], np.finfo(float).tiny):
                names = [BAND_NAMES[i] if X.shape[1] == len(BAND_NAMES) else f"x{i}" for i in active]
                raise RankError("singular normal matrix: " + _describe_null_space(gram, names))
        A = gram + lam * np.eye(active.size)
        w[active] = np.linalg.solve(A, Xc.T @ (y - y_mean))
    return float(y_mean - x_mean @ w), w


def fit_ols(train: SampleTable, spec: EstimatorSpec | None = None) -> FittedModel:
    """Least-squares fit with intercept; raises RankError on collinear features."""
    spec = spec or EstimatorSpec("linear")
    X, y = training_arrays(train, spec)
    if X.shape[0] < X.shape[1] + 1:
        raise RankError(f"need at least {X.shape[1] + 1} rows, got {X.shape[0]}")
    w0, w = solve_normal_equations(X, y, 0.0)
    return FittedModel(spec, LinearPayload(w0, w))


def fit_ridge(train: SampleTable, lam: float | None = None,
              spec: EstimatorSpec | None = None) -> FittedModel:
    """Ridge regression with an unpenalized intercept."""
    if spec is None:
        if lam is not None and not lam >= 0:
            raise ArgumentError(f"lambda must be >= 0, got {lam}")
        spec = EstimatorSpec("ridge", {} if lam is None else {"lambda": float(lam)})
    X, y = training_arrays(train, spec)
    w0, w = solve_normal_equations(X, y, float(spec.hp("lambda")))
    return FittedModel(spec, LinearPayload(w0, w))

"""Epsilon-insensitive support vector regression with an RBF kernel.

The dual is solved with SMO over the 2N variables (alpha, alpha*), choosing
working pairs by the second-order rule; the model keeps
``beta = alpha - alpha*`` and predicts ``f(x) = sum_i beta_i k(x_i, x) + b``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .. import _backend
from .._kernels_py import sq_distances
from ..core import SampleTable, table_stats
from ..errors import ArgumentError
from ._model import EstimatorSpec, FittedModel, training_arrays

MAX_KERNEL_ROWS = 12_000


class ConvergenceWarning(UserWarning):
    pass


def rbf_kernel(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    return np.exp(-gamma * sq_distances(B, A))


def scale_gamma(Z: np.ndarray) -> float:
    """``1 / (n_features * mean feature variance)``, 1.0 for constant features."""
    v = Z.var(axis=0).mean()
    return 1.0 / (Z.shape[1] * v) if v > 0 else 1.0


def dual_objective(K: np.ndarray, y: np.ndarray, beta: np.ndarray, epsilon: float) -> float:
    """``0.5 b'Kb - y'b + eps*|b|_1``, the minimised form of the dual."""
    return float(0.5 * beta @ K @ beta - y @ beta + epsilon * np.abs(beta).sum())


def _bias(alpha: np.ndarray, G: np.ndarray, C: float) -> float:
    n = alpha.size // 2
    s = np.concatenate([np.ones(n), -np.ones(n)])
    yG = s * G
    at_upper = alpha >= C
    at_lower = alpha <= 0
    free = ~(at_upper | at_lower)
    if free.any():
        rho = math.fsum(yG[free]) / int(free.sum())
    else:
        ub_mask = (at_upper & (s < 0)) | (at_lower & (s > 0))
        lb_mask = (at_upper & (s > 0)) | (at_lower & (s < 0))
        ub = yG[ub_mask].min() if ub_mask.any() else np.inf
        lb = yG[lb_mask].max() if lb_mask.any() else -np.inf
        rho = (ub + lb) / 2
    return -float(rho)


@dataclass(frozen=True, eq=False)
class SVRPayload:
    support_vectors: np.ndarray
    dual_coef: np.ndarray
    bias: float
    gamma: float
    converged: bool = True
    n_iter: int = 0

    def predict(self, Z: np.ndarray) -> np.ndarray:
        Z = np.asarray(Z, dtype=np.float64)
        if self.dual_coef.size == 0:
            return np.full(Z.shape[0], self.bias)
        Kq = rbf_kernel(Z, self.support_vectors, self.gamma)
        return (Kq * self.dual_coef).sum(axis=1) + self.bias

    def to_json(self) -> dict:
        return {"support_vectors": self.support_vectors.tolist(),
                "dual_coef": self.dual_coef.tolist(), "bias": self.bias, "gamma": self.gamma,
                "converged": self.converged, "n_iter": self.n_iter}

    @classmethod
    def from_json(cls, d: dict) -> "SVRPayload":
        coef = np.asarray(d["dual_coef"], dtype=np.float64).reshape(-1)
        sv = np.asarray(d["support_vectors"], dtype=np.float64).reshape(coef.size, -1)
        gamma = float(d["gamma"])
        if not gamma > 0:
            raise ValueError("gamma must be positive")
        return cls(sv, coef, float(d["bias"]), gamma, bool(d["converged"]), int(d["n_iter"]))


@dataclass(frozen=True)
class SVRSolution:
    """Full dual solution over all training rows (kept for diagnostics)."""

    beta: np.ndarray
    bias: float
    K: np.ndarray
    y: np.ndarray
    n_iter: int
    converged: bool


def solve_dual(Z: np.ndarray, y: np.ndarray, C: float, epsilon: float, gamma: float,
               tol: float, max_iter: int) -> SVRSolution:
    n = Z.shape[0]
    if n > MAX_KERNEL_ROWS:
        raise ArgumentError(f"SVR keeps the full kernel matrix; at most {MAX_KERNEL_ROWS} "
                            f"training rows are supported, got {n}")
    K = np.ascontiguousarray(rbf_kernel(Z, Z, gamma))
    y = np.ascontiguousarray(y, dtype=np.float64)
    alpha, G, n_iter, converged = _backend.kernels().smo(K, y, float(C), float(epsilon),
                                                          float(tol), int(max_iter))
    beta = alpha[:n] - alpha[n:]
    return SVRSolution(beta, _bias(alpha, G, C), K, y, int(n_iter), bool(converged))


def fit_svr(train: SampleTable, spec: EstimatorSpec | None = None, **hyperparams) -> FittedModel:
    """Fit on features standardised with the training statistics."""
    spec = spec or EstimatorSpec("svr", hyperparams)
    X, y = training_arrays(train, spec)
    stats = table_stats(X)
    Z = stats.apply(X)
    hp = spec.hyperparams
    gamma = scale_gamma(Z) if hp["gamma"] == "scale" else float(hp["gamma"])
    sol = solve_dual(Z, y, hp["C"], hp["epsilon"], gamma, hp["tol"], hp["max_iter"])
    if not sol.converged:
        warnings.warn(f"SMO stopped at max_iter={hp['max_iter']} before reaching tol={hp['tol']}",
                      ConvergenceWarning, stacklevel=2)
    sv = sol.beta != 0
    payload = SVRPayload(Z[sv].copy(), sol.beta[sv].copy(), sol.bias, gamma, sol.converged,
                         sol.n_iter)
    return FittedModel(spec, payload, stats)

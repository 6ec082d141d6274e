"""The eight regression estimators behind one fit/predict contract."""
from __future__ import annotations

import numpy as np

from ..core import GeoGrid, GridStack, SampleTable
from ._model import (DEFAULT_HYPERPARAMS, DEFAULT_SEED, ENSEMBLE_KINDS, KINDS, EstimatorSpec,
                     FittedModel, as_feature_row, default_specs)
from .ensemble import (EnsemblePayload, OOBResult, bootstrap_indices, compute_oob_mae,
                       fit_bagging, fit_extra_trees, fit_random_forest)
from .knn import KNNPayload, fit_knn
from .linear import LinearPayload, fit_ols, fit_ridge
from .svr import ConvergenceWarning, SVRPayload, dual_objective, fit_svr, rbf_kernel
from .tree import Tree, TreePayload, find_best_split, fit_cart

__all__ = [
    "DEFAULT_HYPERPARAMS", "DEFAULT_SEED", "ENSEMBLE_KINDS", "KINDS", "ConvergenceWarning",
    "EnsemblePayload", "EstimatorSpec", "FittedModel", "KNNPayload", "LinearPayload",
    "OOBResult", "SVRPayload", "Tree", "TreePayload", "bootstrap_indices", "compute_oob_mae",
    "default_specs", "dual_objective", "find_best_split", "fit", "fit_bagging", "fit_cart",
    "fit_extra_trees", "fit_knn", "fit_ols", "fit_random_forest", "fit_ridge", "fit_svr",
    "predict_grid", "predict_one", "rbf_kernel",
]


def fit(spec: EstimatorSpec, train: SampleTable, n_jobs: int = 1) -> FittedModel:
    """Fit any estimator kind from its spec."""
    kind = spec.kind
    if kind == "linear":
        return fit_ols(train, spec)
    if kind == "ridge":
        return fit_ridge(train, spec=spec)
    if kind == "tree":
        return fit_cart(train, spec=spec)
    if kind == "bagging":
        return fit_bagging(train, spec, n_jobs=n_jobs)
    if kind == "forest":
        return fit_random_forest(train, spec, n_jobs=n_jobs)
    if kind == "extra_trees":
        return fit_extra_trees(train, spec, n_jobs=n_jobs)
    if kind == "svr":
        return fit_svr(train, spec)
    return fit_knn(train, spec)


def predict_one(model: FittedModel, sample) -> float:
    """Prediction (mg/m^3) for a Sample, a band mapping or a 6-vector."""
    return float(model.predict(as_feature_row(sample))[0])


def predict_grid(model: FittedModel, stack: GridStack) -> GeoGrid:
    """Per-pixel predictions; pixels failing the validity rule become fill."""
    mask = stack.valid_feature_mask()
    ref = stack.reference
    out = np.full(stack.shape, ref.fill_value, dtype=np.float64)
    if mask.any():
        out[mask] = model.predict(stack.feature_planes()[mask])
    return ref.with_values(out)

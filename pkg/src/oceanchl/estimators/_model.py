"""Estimator specifications and fitted-model containers."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional

import numpy as np

from ..core import BAND_NAMES, N_BANDS, FeatureStats, Sample, SampleTable
from ..errors import ArgumentError, SchemaError

KINDS = ("linear", "ridge", "tree", "bagging", "forest", "extra_trees", "svr", "knn")
ENSEMBLE_KINDS = ("bagging", "forest", "extra_trees")

DEFAULT_HYPERPARAMS: dict[str, dict[str, Any]] = {
    "linear": {},
    "ridge": {"lambda": 1.0},
    "tree": {"max_depth": None, "min_samples_split": 2},
    "bagging": {"n_estimators": 100, "max_features": 6, "bootstrap": True,
                "max_depth": None, "min_samples_split": 2},
    "forest": {"n_estimators": 100, "max_features": 2, "bootstrap": True,
               "max_depth": None, "min_samples_split": 2},
    "extra_trees": {"n_estimators": 100, "max_features": 2, "bootstrap": False,
                    "max_depth": None, "min_samples_split": 2},
    "svr": {"C": 1.0, "epsilon": 0.1, "gamma": "scale", "tol": 1e-3, "max_iter": 1_000_000},
    "knn": {"k": 5, "aggregation": "mean"},
}

DEFAULT_SEED = 42


def _check_int(hp, key, lo, allow_none=False):
    v = hp[key]
    if v is None and allow_none:
        return
    if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < lo:
        raise ArgumentError(f"{key} must be an integer >= {lo}" + (" or null" if allow_none else "")
                            + f", got {v!r}")


def _check_pos(hp, key, strict=True):
    v = hp[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v) \
            or (v <= 0 if strict else v < 0):
        raise ArgumentError(f"{key} must be {'>' if strict else '>='} 0, got {v!r}")


def validate_hyperparams(kind: str, hp: Mapping[str, Any]) -> None:
    unknown = set(hp) - set(DEFAULT_HYPERPARAMS[kind])
    if unknown:
        raise ArgumentError(f"unknown hyperparameter(s) for {kind}: {', '.join(sorted(unknown))}")
    if kind == "ridge":
        _check_pos(hp, "lambda", strict=False)
    if kind in ("tree",) + ENSEMBLE_KINDS:
        _check_int(hp, "max_depth", 0, allow_none=True)
        _check_int(hp, "min_samples_split", 2)
    if kind in ENSEMBLE_KINDS:
        _check_int(hp, "n_estimators", 1)
        _check_int(hp, "max_features", 1)
        if hp["max_features"] > N_BANDS:
            raise ArgumentError(f"max_features must lie in 1..{N_BANDS}, got {hp['max_features']}")
        if not isinstance(hp["bootstrap"], bool):
            raise ArgumentError("bootstrap must be a boolean")
    if kind == "svr":
        _check_pos(hp, "C")
        _check_pos(hp, "epsilon", strict=False)
        _check_pos(hp, "tol")
        _check_int(hp, "max_iter", 1)
        if hp["gamma"] != "scale":
            _check_pos(hp, "gamma")
    if kind == "knn":
        _check_int(hp, "k", 1)
        if hp["aggregation"] not in ("mean", "median"):
            raise ArgumentError("aggregation must be 'mean' or 'median'")


@dataclass(frozen=True)
class EstimatorSpec:
    """Which estimator to fit, with its hyperparameters and seed.

    Missing hyperparameters take the documented defaults.  ``log_target``
    fits on log10(chl) and back-transforms predictions.
    """

    kind: str
    hyperparams: Mapping[str, Any] = field(default_factory=dict)
    seed: int = DEFAULT_SEED
    log_target: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"unknown estimator kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        hp = dict(DEFAULT_HYPERPARAMS[self.kind])
        hp.update(self.hyperparams)
        if self.kind == "svr" and isinstance(hp.get("C"), int):
            hp["C"] = float(hp["C"])
        validate_hyperparams(self.kind, hp)
        object.__setattr__(self, "hyperparams", hp)
        object.__setattr__(self, "seed", int(self.seed))

    def hp(self, key: str) -> Any:
        return self.hyperparams[key]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "hyperparams": dict(self.hyperparams), "seed": self.seed,
                "log_target": self.log_target}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "EstimatorSpec":
        return cls(d["kind"], dict(d.get("hyperparams", {})), d.get("seed", DEFAULT_SEED),
                   bool(d.get("log_target", False)))


def default_specs(seed: int = DEFAULT_SEED) -> list[EstimatorSpec]:
    """The eight estimators with default hyperparameters, in report order."""
    return [EstimatorSpec(k, seed=seed) for k in KINDS]


@dataclass(eq=False)
class FittedModel:
    """A trained estimator.

    ``payload`` is kind-specific (see the ``payload`` classes of each
    estimator module) and exposes ``predict(Z)`` on preprocessed features.
    """

    spec: EstimatorSpec
    payload: Any
    preprocessing: Optional[FeatureStats] = None

    @property
    def kind(self) -> str:
        return self.spec.kind

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != N_BANDS:
            raise SchemaError(f"expected an (n, {N_BANDS}) feature array, got shape {X.shape}")
        Z = self.preprocessing.apply(X) if self.preprocessing is not None else X
        out = self.payload.predict(Z)
        if self.spec.log_target:
            out = 10.0 ** out
        return out

    def predict_table(self, table: SampleTable) -> np.ndarray:
        return self.predict(table.rrs)


def as_feature_row(sample) -> np.ndarray:
    """A Sample or a band-name mapping -> ``(1, 6)`` array in canonical order."""
    if isinstance(sample, Sample):
        return np.asarray([sample.rrs], dtype=np.float64)
    if isinstance(sample, Mapping):
        missing = [b for b in BAND_NAMES if b not in sample]
        if missing:
            raise SchemaError(f"sample lacks band(s): {', '.join(missing)}")
        return np.asarray([[float(sample[b]) for b in BAND_NAMES]], dtype=np.float64)
    row = np.asarray(sample, dtype=np.float64).reshape(1, -1)
    if row.shape[1] != N_BANDS:
        raise SchemaError(f"sample has {row.shape[1]} bands, expected {N_BANDS}")
    return row


def training_arrays(train: SampleTable, spec: EstimatorSpec) -> tuple[np.ndarray, np.ndarray]:
    if len(train) == 0:
        raise ArgumentError("training table is empty")
    train.require_target()
    y = train.chl
    if spec.log_target:
        if not (y > 0).all():
            raise ArgumentError("log_target requires chl > 0 on every row")
        y = np.log10(y)
    return np.ascontiguousarray(train.rrs), np.ascontiguousarray(y)

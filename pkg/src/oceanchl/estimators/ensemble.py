"""Bagging, random forest and extra-trees ensembles of regression trees.

Tree ``i`` of a model with seed ``s`` draws its bootstrap sample from stream
``(s, BOOTSTRAP, i)`` and its per-node randomness from ``(s, TREE, i)``, so
results do not depend on how many threads build the trees.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .. import rng
from ..core import SampleTable
from ..errors import ArgumentError, StateError
from ._model import ENSEMBLE_KINDS, EstimatorSpec, FittedModel, training_arrays
from .tree import Tree, grow_tree


def bootstrap_indices(seed: int, tree_index: int, n: int) -> np.ndarray:
    """Size-n resample with replacement for one tree, in draw order."""
    return rng.bounded(rng.stream_key(seed, rng.BOOTSTRAP_STREAM, tree_index), 0, n, n)


@dataclass(frozen=True, eq=False)
class EnsemblePayload:
    trees: list[Tree]
    bootstrap: bool
    n_train: int
    seed: int

    def member_predictions(self, Z: np.ndarray) -> np.ndarray:
        return np.stack([t.predict(Z) for t in self.trees])

    def predict(self, Z: np.ndarray) -> np.ndarray:
        # mean as offsets from the first member, so identical members average exactly
        first = self.trees[0].predict(Z)
        total = np.zeros(Z.shape[0])
        for t in self.trees[1:]:
            total += t.predict(Z) - first
        return first + total / len(self.trees)

    def in_bag(self, tree_index: int) -> np.ndarray:
        """Bootstrap counts of each training row for one tree."""
        if not self.bootstrap:
            return np.ones(self.n_train, dtype=np.int64)
        return np.bincount(bootstrap_indices(self.seed, tree_index, self.n_train),
                           minlength=self.n_train)

    def to_json(self) -> dict:
        return {"trees": [t.to_nested() for t in self.trees], "bootstrap": self.bootstrap,
                "n_train": self.n_train, "seed": self.seed}

    @classmethod
    def from_json(cls, d: dict) -> "EnsemblePayload":
        trees = [Tree.from_nested(t) for t in d["trees"]]
        if not trees:
            raise ValueError("an ensemble needs at least one tree")
        n_train = d["n_train"]
        if not isinstance(n_train, int) or n_train < 1:
            raise ValueError("n_train must be a positive integer")
        if not isinstance(d["bootstrap"], bool):
            raise ValueError("bootstrap must be a boolean")
        return cls(trees, d["bootstrap"], n_train, int(d["seed"]))


def _fit_ensemble(train: SampleTable, spec: EstimatorSpec, n_jobs: int) -> FittedModel:
    if spec.kind not in ENSEMBLE_KINDS:
        raise ArgumentError(f"{spec.kind} is not an ensemble kind")
    X, y = training_arrays(train, spec)
    n = X.shape[0]
    hp = spec.hyperparams
    extra = spec.kind == "extra_trees"
    max_features = hp["max_features"]

    def build(i: int) -> Tree:
        samples = bootstrap_indices(spec.seed, i, n) if hp["bootstrap"] else np.arange(n)
        return grow_tree(X, y, samples, max_depth=hp["max_depth"],
                         min_samples_split=hp["min_samples_split"], max_features=max_features,
                         extra=extra, key=rng.stream_key(spec.seed, rng.TREE_STREAM, i))

    indices = range(hp["n_estimators"])
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            trees = list(pool.map(build, indices))
    else:
        trees = [build(i) for i in indices]
    return FittedModel(spec, EnsemblePayload(trees, hp["bootstrap"], n, spec.seed))


def _ensemble_spec(kind: str, spec, overrides) -> EstimatorSpec:
    if spec is not None:
        if spec.kind != kind:
            raise ArgumentError(f"expected a {kind} spec, got {spec.kind}")
        return spec
    return EstimatorSpec(kind, overrides)


def fit_bagging(train: SampleTable, spec: EstimatorSpec | None = None, n_jobs: int = 1,
                **hyperparams) -> FittedModel:
    """Trees on bootstrap resamples using all features; predictions averaged."""
    return _fit_ensemble(train, _ensemble_spec("bagging", spec, hyperparams), n_jobs)


def fit_random_forest(train: SampleTable, spec: EstimatorSpec | None = None, n_jobs: int = 1,
                      **hyperparams) -> FittedModel:
    """Bagging plus a random subset of ``max_features`` candidate features per node."""
    return _fit_ensemble(train, _ensemble_spec("forest", spec, hyperparams), n_jobs)


def fit_extra_trees(train: SampleTable, spec: EstimatorSpec | None = None, n_jobs: int = 1,
                    **hyperparams) -> FittedModel:
    """Random feature subsets with one uniform threshold draw per candidate feature."""
    return _fit_ensemble(train, _ensemble_spec("extra_trees", spec, hyperparams), n_jobs)


@dataclass(frozen=True)
class OOBResult:
    mae: float | None
    n_covered: int
    predictions: np.ndarray

    @property
    def empty(self) -> bool:
        return self.n_covered == 0


def compute_oob_mae(model: FittedModel, train: SampleTable) -> OOBResult:
    """Out-of-bag MAE: each row is predicted only by trees whose resample missed it.

    ``predictions`` is NaN for rows that every tree saw.
    """
    payload = model.payload
    if not isinstance(payload, EnsemblePayload):
        raise StateError("out-of-bag error needs a bagging or forest model")
    if not payload.bootstrap:
        raise StateError("out-of-bag error needs bootstrap resampling")
    if len(train) != payload.n_train:
        raise StateError(f"model was fitted on {payload.n_train} rows, got {len(train)}")
    train.require_target()
    Z = model.preprocessing.apply(train.rrs) if model.preprocessing is not None else train.rrs
    total = np.zeros(payload.n_train)
    count = np.zeros(payload.n_train, dtype=np.int64)
    for i, tree in enumerate(payload.trees):
        oob = payload.in_bag(i) == 0
        if oob.any():
            total[oob] += tree.predict(Z[oob])
            count[oob] += 1
    covered = count > 0
    pred = np.full(payload.n_train, np.nan)
    pred[covered] = total[covered] / count[covered]
    if model.spec.log_target:
        pred = 10.0 ** pred
    n_cov = int(covered.sum())
    mae = float(np.abs(pred[covered] - train.chl[covered]).mean()) if n_cov else None
    return OOBResult(mae, n_cov, pred)

"""k-nearest-neighbour regression on standardised features."""
from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from .. import _backend
from ..core import N_BANDS, SampleTable, table_stats
from ..errors import ArgumentError
from ._model import EstimatorSpec, FittedModel, training_arrays


@dataclass(eq=False)
class KNNPayload:
    """Retained (standardised) training rows.

    The search index is built lazily per kernel backend and cached; ties at
    equal distance go to the lower training-row index.
    """

    Z: np.ndarray
    y: np.ndarray
    k: int
    aggregation: str = "mean"
    _index: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def index(self):
        backend = _backend.name()
        with self._lock:
            if backend not in self._index:
                self._index[backend] = _backend.kernels().make_knn_index(self.Z)
            return self._index[backend]

    def neighbors(self, Zq: np.ndarray, k: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        k = self.k if k is None else k
        if k > self.Z.shape[0]:
            raise ArgumentError(f"k={k} exceeds the {self.Z.shape[0]} stored training rows")
        return self.index().query(np.ascontiguousarray(Zq, dtype=np.float64), k)

    def predict(self, Zq: np.ndarray) -> np.ndarray:
        idx, _ = self.neighbors(Zq)
        vals = self.y[idx]
        if self.aggregation == "median":
            return np.median(vals, axis=1)
        return vals.mean(axis=1)

    def to_json(self) -> dict:
        return {"rrs": self.Z.tolist(), "chl": self.y.tolist()}

    @classmethod
    def from_json(cls, d: dict, k: int, aggregation: str) -> "KNNPayload":
        y = np.asarray(d["chl"], dtype=np.float64).reshape(-1)
        Z = np.asarray(d["rrs"], dtype=np.float64).reshape(y.size, N_BANDS)
        return cls(Z, y, k, aggregation)


def fit_knn(train: SampleTable, spec: EstimatorSpec | None = None, **hyperparams) -> FittedModel:
    spec = spec or EstimatorSpec("knn", hyperparams)
    X, y = training_arrays(train, spec)
    stats = table_stats(X)
    payload = KNNPayload(stats.apply(X), y.copy(), spec.hp("k"), spec.hp("aggregation"))
    return FittedModel(spec, payload, stats)

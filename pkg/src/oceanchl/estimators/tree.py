"""CART regression trees grown by exhaustive variance-reduction search."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .. import _backend, rng
from .._kernels_py import _best_split
from ..core import N_BANDS, SampleTable
from ..errors import ArgumentError
from ._model import EstimatorSpec, FittedModel, training_arrays


@dataclass(frozen=True, eq=False)
class Tree:
    """Flat preorder node arrays; a leaf has ``feature == -1``.

    Rows with ``x[feature] <= threshold`` go to ``left``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @classmethod
    def from_kernel(cls, arrays) -> "Tree":
        return cls(*arrays[:5])

    @property
    def node_count(self) -> int:
        return int(self.feature.size)

    @property
    def leaf_count(self) -> int:
        return int(np.count_nonzero(self.feature < 0))

    def depth(self) -> int:
        depth = np.zeros(self.node_count, dtype=np.int64)
        for n in range(self.node_count):
            if self.feature[n] >= 0:
                depth[self.left[n]] = depth[self.right[n]] = depth[n] + 1
        return int(depth.max())

    def predict(self, Z: np.ndarray) -> np.ndarray:
        Z = np.ascontiguousarray(Z, dtype=np.float64)
        return _backend.kernels().predict_tree(
            self.feature, self.threshold, self.left, self.right, self.value, Z)

    def apply(self, Z: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row."""
        node = np.zeros(Z.shape[0], dtype=np.int64)
        for r in range(Z.shape[0]):
            n = 0
            while self.feature[n] >= 0:
                n = self.left[n] if Z[r, self.feature[n]] <= self.threshold[n] else self.right[n]
            node[r] = n
        return node

    def to_nested(self, node: int = 0) -> dict:
        stack_out: dict = {}
        # iterative to stay clear of the recursion limit on deep trees
        todo = [(node, stack_out)]
        while todo:
            n, out = todo.pop()
            if self.feature[n] < 0:
                out["leaf_value"] = float(self.value[n])
                continue
            out["feature"] = int(self.feature[n])
            out["threshold"] = float(self.threshold[n])
            out["left"] = {}
            out["right"] = {}
            todo.append((int(self.right[n]), out["right"]))
            todo.append((int(self.left[n]), out["left"]))
        return stack_out

    @classmethod
    def from_nested(cls, root: dict) -> "Tree":
        feature, threshold, left, right, value = [], [], [], [], []
        todo = [(root, -1, False)]
        while todo:
            d, parent, is_left = todo.pop()
            n = len(feature)
            if parent >= 0:
                (left if is_left else right)[parent] = n
            if "leaf_value" in d:
                feature.append(-1)
                threshold.append(0.0)
                value.append(float(d["leaf_value"]))
                left.append(-1)
                right.append(-1)
                continue
            f = d["feature"]
            if isinstance(f, bool) or not isinstance(f, int) or not 0 <= f < N_BANDS:
                raise ValueError(f"bad split feature {f!r}")
            feature.append(f)
            threshold.append(float(d["threshold"]))
            value.append(0.0)
            left.append(-1)
            right.append(-1)
            if not isinstance(d["left"], dict) or not isinstance(d["right"], dict):
                raise ValueError("tree children must be objects")
            todo.append((d["right"], n, False))
            todo.append((d["left"], n, True))
        return cls(np.asarray(feature, dtype=np.int64), np.asarray(threshold, dtype=np.float64),
                   np.asarray(left, dtype=np.int64), np.asarray(right, dtype=np.int64),
                   np.asarray(value, dtype=np.float64))


@dataclass(frozen=True, eq=False)
class TreePayload:
    tree: Tree

    def predict(self, Z):
        return self.tree.predict(Z)

    def to_json(self) -> dict:
        return {"tree": self.tree.to_nested()}

    @classmethod
    def from_json(cls, d: dict) -> "TreePayload":
        return cls(Tree.from_nested(d["tree"]))


def grow_tree(X: np.ndarray, y: np.ndarray, samples: np.ndarray, *, max_depth: Optional[int],
              min_samples_split: int, max_features: int, extra: bool, key: int) -> Tree:
    arrays = _backend.kernels().build_tree(
        np.ascontiguousarray(X, dtype=np.float64), np.ascontiguousarray(y, dtype=np.float64),
        np.ascontiguousarray(samples, dtype=np.int64),
        -1 if max_depth is None else int(max_depth), int(min_samples_split),
        int(max_features), bool(extra), key)
    return Tree.from_kernel(arrays)


def find_best_split(rows: SampleTable | tuple[np.ndarray, np.ndarray],
                    feature_subset: Sequence[int], min_samples_split: int = 2):
    """Best (feature, threshold, impurity_decrease) over midpoint candidates.

    The decrease is ``N*Var(parent) - N_L*Var(left) - N_R*Var(right)``.
    Returns None when no candidate reduces impurity or the node is too small.
    """
    feats = sorted(set(int(f) for f in feature_subset))
    if not feats:
        raise ArgumentError("feature subset is empty")
    if isinstance(rows, SampleTable):
        rows.require_target()
        X, y = rows.rrs, rows.chl
    else:
        X, y = (np.asarray(a, dtype=np.float64) for a in rows)
    if any(not 0 <= f < X.shape[1] for f in feats):
        raise ArgumentError(f"feature indices must lie in 0..{X.shape[1] - 1}")
    n = X.shape[0]
    if n < max(min_samples_split, 2) or y.max() == y.min():
        return None
    idx = np.arange(n, dtype=np.int64)
    found = _best_split(X, idx, y, lambda: feats, False, None)
    if found is None:
        return None
    f, t = found
    left = X[:, f] <= t
    dec = _sse(y) - _sse(y[left]) - _sse(y[~left])
    return f, t, float(dec)


def _sse(v: np.ndarray) -> float:
    return float(((v - v.mean()) ** 2).sum()) if v.size else 0.0


def fit_cart(train: SampleTable, max_depth: Optional[int] = None, min_samples_split: int = 2,
             spec: EstimatorSpec | None = None) -> FittedModel:
    """Single regression tree; leaves predict the mean target of their rows."""
    if spec is None:
        spec = EstimatorSpec("tree", {"max_depth": max_depth, "min_samples_split": min_samples_split})
    X, y = training_arrays(train, spec)
    tree = grow_tree(X, y, np.arange(X.shape[0]), max_depth=spec.hp("max_depth"),
                     min_samples_split=spec.hp("min_samples_split"), max_features=X.shape[1],
                     extra=False, key=rng.stream_key(spec.seed, rng.TREE_STREAM, 0))
    return FittedModel(spec, TreePayload(tree))

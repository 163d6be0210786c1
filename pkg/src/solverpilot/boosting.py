"""Least-squares gradient boosting over depth-limited regression trees.

Trees are grown greedily by variance reduction with exact split enumeration:
candidate thresholds are midpoints between adjacent distinct sorted feature
values, ties are broken toward the lowest feature index and then the lowest
threshold, and there is no row or feature subsampling. The whole fit is a
deterministic function of its inputs, and a model is refitted from scratch
every time new data arrives.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ShapeError


@dataclass(frozen=True)
class BoostingParams:
    n_rounds: int = 100
    learning_rate: float = 0.1
    max_depth: int = 3
    min_samples_leaf: int = 1

    def __post_init__(self):
        if self.n_rounds < 0:
            raise DataError("n_rounds must be >= 0")
        if not 0.0 < self.learning_rate <= 1.0:
            raise DataError("learning_rate must be in (0, 1]")
        if self.max_depth < 1:
            raise DataError("max_depth must be >= 1")
        if self.min_samples_leaf < 1:
            raise DataError("min_samples_leaf must be >= 1")


class RegressionTree:
    """A binary regression tree stored as flat arrays; piecewise constant."""

    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []

    def _add_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    @property
    def n_leaves(self) -> int:
        return sum(1 for f in self.feature if f < 0)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        feature = np.asarray(self.feature)
        threshold = np.asarray(self.threshold)
        left = np.asarray(self.left)
        right = np.asarray(self.right)
        value = np.asarray(self.value)
        idx = np.zeros(X.shape[0], dtype=np.intp)
        while True:
            feat = feature[idx]
            active = feat >= 0
            if not active.any():
                return value[idx]
            rows = np.nonzero(active)[0]
            node = idx[rows]
            goes_left = X[rows, feat[rows]] <= threshold[node]
            idx[rows] = np.where(goes_left, left[node], right[node])


def _best_split(
    X: np.ndarray, y: np.ndarray, min_leaf: int
) -> tuple[int, float, np.ndarray] | None:
    """Best (feature, threshold) by sum-of-squares reduction, or None.

    Returns the left-membership mask along with the split. Requires a
    strictly positive improvement so constant targets stay unsplit.
    """
    n, d = X.shape
    if n < 2 * min_leaf or d == 0:
        return None
    order = np.argsort(X, axis=0, kind="stable")
    X_sorted = np.take_along_axis(X, order, axis=0)
    y_sorted = y[order]
    csum = np.cumsum(y_sorted, axis=0)
    total = csum[-1, :]

    n_left = np.arange(1, n, dtype=float)[:, None]
    n_right = n - n_left
    sum_left = csum[:-1, :]
    sum_right = total[None, :] - sum_left
    # SSE reduction = sum_L^2/n_L + sum_R^2/n_R - total^2/n, up to the
    # constant last term which is identical for every candidate.
    score = sum_left**2 / n_left + sum_right**2 / n_right

    valid = X_sorted[1:, :] > X_sorted[:-1, :]
    if min_leaf > 1:
        counts_ok = (n_left >= min_leaf) & (n_right >= min_leaf)
        valid = valid & counts_ok
    score = np.where(valid, score, -np.inf)

    # Feature-major flattening makes argmax tie-break by lowest feature
    # index first, then lowest threshold.
    flat = score.T.ravel()
    best = int(np.argmax(flat))
    best_score = flat[best]
    if not np.isfinite(best_score):
        return None
    improvement = best_score - float(y.sum()) ** 2 / n
    if not improvement > 0.0:
        return None
    feature = best // (n - 1)
    pos = best % (n - 1)
    threshold = 0.5 * (X_sorted[pos, feature] + X_sorted[pos + 1, feature])
    mask = X[:, feature] <= threshold
    if mask.all() or not mask.any():  # midpoint collapsed onto a data value
        return None
    return feature, float(threshold), mask


def _grow(tree: RegressionTree, X, y, depth: int, max_depth: int, min_leaf: int) -> int:
    node = tree._add_node()
    if depth < max_depth:
        split = _best_split(X, y, min_leaf)
        if split is not None:
            feature, threshold, mask = split
            tree.feature[node] = feature
            tree.threshold[node] = threshold
            tree.left[node] = _grow(tree, X[mask], y[mask], depth + 1, max_depth, min_leaf)
            tree.right[node] = _grow(tree, X[~mask], y[~mask], depth + 1, max_depth, min_leaf)
            return node
    tree.value[node] = float(y.mean())
    return node


def fit_tree(X: np.ndarray, y: np.ndarray, max_depth: int, min_samples_leaf: int = 1) -> RegressionTree:
    tree = RegressionTree()
    _grow(tree, X, y, 0, max_depth, min_samples_leaf)
    return tree


@dataclass
class BoostingModel:
    """init value plus a shrunk sum of residual trees."""

    init_value: float
    trees: list[RegressionTree]
    params: BoostingParams
    n_features: int
    train_mse_path: list[float] = field(default_factory=list)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise ShapeError(f"expected {self.n_features} features, got {X.shape[1]}")
        out = np.full(X.shape[0], self.init_value, dtype=float)
        for tree in self.trees:
            out += self.params.learning_rate * tree.predict(X)
        return out

    def predict_one(self, x: np.ndarray) -> float:
        return float(self.predict(np.atleast_2d(np.asarray(x, dtype=float)))[0])


def fit(X: np.ndarray, y: np.ndarray, params: BoostingParams = BoostingParams()) -> BoostingModel:
    """Fit by residual boosting: each round grows one tree on the current
    residuals and shrinks it by the learning rate.

    ``train_mse_path[k]`` is the training MSE after k rounds (index 0 is the
    constant initial model), nonincreasing by construction.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] == 0 or y.shape[0] == 0:
        raise DataError("cannot fit boosting model on empty data")
    if X.shape[0] != y.shape[0]:
        raise ShapeError(f"{X.shape[0]} points but {y.shape[0]} targets")

    init = float(y.mean())
    current = np.full(y.shape[0], init, dtype=float)
    model = BoostingModel(init_value=init, trees=[], params=params, n_features=X.shape[1])
    model.train_mse_path.append(float(np.mean((y - current) ** 2)))
    for _ in range(params.n_rounds):
        residual = y - current
        tree = fit_tree(X, residual, params.max_depth, params.min_samples_leaf)
        current = current + params.learning_rate * tree.predict(X)
        model.trees.append(tree)
        model.train_mse_path.append(float(np.mean((y - current) ** 2)))
    return model

"""Least-squares gradient boosting with binary-split regression trees.

Every feature is a bit, so a split is fully described by its feature index:
rows with the bit clear go left, rows with it set go right.  Split search
scores all features at once.  Training matrices in this project are nearly
constant column-wise (most payload bits never change), so X is held as
its column mode plus a sparse matrix of deviations and the per-feature
sums become one sparse product per tree level.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .linear import DegenerateData, _check_width

# relative slack when comparing split gains; equal gains go to the lower index
GAIN_RTOL = 1e-9


@dataclass
class Tree:
    """Flat binary tree. ``feature[i] < 0`` marks a leaf holding ``value[i]``."""

    feature: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    importance: dict[int, float] = field(default_factory=dict)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        while True:
            feat = self.feature[node]
            inner = feat >= 0
            if not inner.any():
                return self.value[node]
            bit = X[rows[inner], feat[inner]].astype(bool)
            node[inner] = np.where(bit, self.right[node[inner]], self.left[node[inner]])

    @property
    def depth(self) -> int:
        def walk(i):
            if self.feature[i] < 0:
                return 0
            return 1 + max(walk(self.left[i]), walk(self.right[i]))
        return walk(0)

    def splits(self) -> list[int]:
        return [int(f) for f in self.feature if f >= 0]


@dataclass
class GbdtModel:
    trees: list[Tree]
    learning_rate: float
    base_value: float
    n_features: int
    max_depth: int = 3
    min_leaf: float = 5.0
    n_train: int = 0
    kind = "gbdt"

    def tree_outputs(self, X) -> np.ndarray:
        """Shrunk output of every tree, shape (n_rows, n_trees)."""
        X = np.atleast_2d(np.asarray(X))
        _check_width(X, self.n_features)
        if not self.trees:
            return np.zeros((len(X), 0))
        return self.learning_rate * np.column_stack([t.predict(X) for t in self.trees])

    def predict(self, X) -> np.ndarray | float:
        X = np.asarray(X)
        _check_width(X, self.n_features)
        out = self.base_value + self.tree_outputs(X).sum(axis=1)
        return float(out[0]) if X.ndim == 1 else out

    def super_features(self, x) -> np.ndarray:
        """Per-tree contributions; ``base_value + sum`` equals the prediction."""
        x = np.asarray(x)
        out = self.tree_outputs(x)
        return out[0] if x.ndim == 1 else out

    def tree_importances(self) -> np.ndarray:
        imp = np.zeros((len(self.trees), self.n_features))
        for i, tree in enumerate(self.trees):
            for f, gain in tree.importance.items():
                imp[i, f] = gain
        return imp

    def feature_importance(self) -> np.ndarray:
        if not self.trees:
            return np.zeros(self.n_features)
        return self.tree_importances().mean(axis=0)

    def hyperparameters(self) -> dict:
        return {"n_trees": len(self.trees), "max_depth": self.max_depth,
                "learning_rate": self.learning_rate, "min_leaf": self.min_leaf}


class _BitMatrix:
    """X == mode (broadcast per column) + D, with D sparse in {-1, 0, 1}."""

    def __init__(self, X: np.ndarray):
        self.X = np.asarray(X, dtype=np.uint8)
        X = self.X.view(np.int8)
        self.n_rows, self.n_features = X.shape
        self.mode = (2 * X.sum(axis=0) >= self.n_rows).astype(float)
        self.D_T = sparse.csr_matrix((X - self.mode.astype(np.int8)).T.astype(float))

    def column_sums(self, V: np.ndarray) -> np.ndarray:
        """X.T @ V for a dense (n_rows, m) matrix V."""
        return np.outer(self.mode, V.sum(axis=0)) + self.D_T @ V


def split_gains(sum1: np.ndarray, w1: np.ndarray, total: float, total_w: float,
                min_leaf: float) -> np.ndarray:
    """Weighted variance reduction of splitting on each feature; -inf if invalid."""
    sum0 = total - sum1
    w0 = total_w - w1
    ok = (w1 >= min_leaf) & (w0 >= min_leaf) & (w1 > 0) & (w0 > 0)
    gains = np.full(sum1.shape, -np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = sum1 ** 2 / w1 + sum0 ** 2 / w0 - total ** 2 / total_w
    gains[ok] = g[ok]
    return gains


def pick_split(gains: np.ndarray) -> int:
    """Index of the best gain, lowest index among near-ties; -1 if none positive."""
    best = gains.max() if gains.size else -np.inf
    if not np.isfinite(best) or best <= 0:
        return -1
    return int(np.flatnonzero(gains >= best - GAIN_RTOL * abs(best))[0])


def best_split(X, residual, w, min_leaf: float) -> tuple[int, float]:
    """Best single split over all rows of X (used by tests and by fit_tree)."""
    X = np.asarray(X)
    wr = np.asarray(w) * np.asarray(residual)
    gains = split_gains(X.T @ wr, X.T @ np.asarray(w, dtype=float), wr.sum(), float(np.sum(w)),
                        min_leaf)
    j = pick_split(gains)
    return j, (float(gains[j]) if j >= 0 else 0.0)


def _fit_tree(bits: _BitMatrix, residual: np.ndarray, w: np.ndarray, max_depth: int,
              min_leaf: float, min_gain: float) -> tuple[Tree, np.ndarray]:
    """One regression tree grown level by level; also returns each row's leaf."""
    n = bits.n_rows
    feature, left, right, value = [-1], [-1], [-1], [0.0]
    importance: dict[int, float] = {}
    node_of = np.zeros(n, dtype=np.int64)
    frontier = [0]
    wr = w * residual
    for _depth in range(max_depth + 1):
        if not frontier:
            break
        masks = np.stack([node_of == nid for nid in frontier], axis=1).astype(float)
        S = (wr[:, None] * masks).sum(axis=0)
        Wt = (w[:, None] * masks).sum(axis=0)
        for k, nid in enumerate(frontier):
            value[nid] = S[k] / Wt[k]
        if _depth == max_depth:
            break
        S1 = bits.column_sums(wr[:, None] * masks)
        W1 = bits.column_sums(w[:, None] * masks)
        next_frontier = []
        for k, nid in enumerate(frontier):
            gains = split_gains(S1[:, k], W1[:, k], S[k], Wt[k], min_leaf)
            j = pick_split(gains)
            if j < 0 or gains[j] <= min_gain:
                continue
            feature[nid] = j
            importance[j] = importance.get(j, 0.0) + float(gains[j])
            for side in (0, 1):
                feature.append(-1)
                left.append(-1)
                right.append(-1)
                value.append(0.0)
                child = len(feature) - 1
                if side == 0:
                    left[nid] = child
                else:
                    right[nid] = child
                next_frontier.append(child)
            rows = node_of == nid
            col = _column(bits, j, rows)
            node_of[rows] = np.where(col, right[nid], left[nid])
        frontier = next_frontier
    tree = Tree(np.array(feature), np.array(left), np.array(right), np.array(value), importance)
    return tree, node_of


def _column(bits: _BitMatrix, j: int, rows: np.ndarray) -> np.ndarray:
    """Bit j of the selected rows."""
    return bits.X[rows, j] > 0


def fit_gbdt(X, y, w=None, n_trees: int = 100, max_depth: int = 3,
             learning_rate: float = 0.1, min_leaf: float = 5.0) -> GbdtModel:
    """Boosted trees on squared error; tree t fits the weighted residuals.

    ``min_leaf`` is a minimum total weight per leaf, so integer weights
    behave exactly like duplicated rows.
    """
    X = np.asarray(X, dtype=np.uint8)
    y = np.asarray(y, dtype=float)
    w = np.ones(len(y)) if w is None else np.asarray(w, dtype=float)
    if X.ndim != 2 or len(X) != len(y) or len(w) != len(y):
        raise ValueError("X must be 2-D with one row per target and weight")
    if min_leaf <= 0 or n_trees < 0 or max_depth < 0:
        raise ValueError("need min_leaf > 0, n_trees >= 0, max_depth >= 0")
    if w.sum() < 2 * min_leaf:
        raise ValueError(f"need total weight >= 2*min_leaf = {2 * min_leaf}")
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    base = float(w @ y / w.sum())
    model = GbdtModel([], learning_rate, base, X.shape[1], max_depth, min_leaf, len(y))
    if n_trees == 0:
        return model
    bits = _BitMatrix(X)
    pred = np.full(len(y), base)
    scale = float(w @ (y - base) ** 2) or 1.0
    min_gain = 1e-12 * scale
    for _ in range(n_trees):
        tree, leaf_of = _fit_tree(bits, y - pred, w, max_depth, min_leaf, min_gain)
        model.trees.append(tree)
        pred += learning_rate * tree.value[leaf_of]
    return model


__all__ = ["DegenerateData", "GbdtModel", "Tree", "best_split", "fit_gbdt", "pick_split",
           "split_gains"]

"""Weighted ridge regression on 0/1 features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg


class DegenerateData(ValueError):
    """Targets carry no information and the fit is unregularised."""


@dataclass
class LinearModel:
    weights: np.ndarray
    bias: float
    ridge: float
    n_train: int = 0
    kind = "linear"

    @property
    def n_features(self) -> int:
        return self.weights.size

    def predict(self, X) -> np.ndarray | float:
        X = np.asarray(X)
        _check_width(X, self.n_features)
        out = X @ self.weights + self.bias
        return float(out) if X.ndim == 1 else out

    def feature_importance(self) -> np.ndarray:
        return np.abs(self.weights)

    def hyperparameters(self) -> dict:
        return {"ridge": self.ridge}


def _check_width(X: np.ndarray, width: int) -> None:
    if X.shape[-1] != width:
        raise ValueError(f"expected {width} features, got {X.shape[-1]}")


def fit_linear(X, y, w=None, ridge: float = 1e-3) -> LinearModel:
    """Minimise sum_i w_i (y_i - x_i.b - c)^2 + ridge * |b|^2.

    The intercept is not penalised.  Columns constant over the training
    rows get weight 0.  With ``ridge == 0`` the minimum-norm solution is
    returned.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.ones(len(y)) if w is None else np.asarray(w, dtype=float)
    if X.ndim != 2 or len(X) != len(y) or len(w) != len(y):
        raise ValueError("X must be 2-D with one row per target and weight")
    if len(y) < 2:
        raise ValueError("need at least two examples")
    if ridge < 0 or np.any(w <= 0):
        raise ValueError("ridge must be >= 0 and weights > 0")
    n, d = X.shape
    W = w.sum()
    y_mean = float(w @ y / W)
    weights = np.zeros(d)
    if np.ptp(y) == 0:
        if ridge == 0:
            raise DegenerateData("all targets identical")
        return LinearModel(weights, y_mean, ridge, n)

    x_mean = w @ X / W
    varying = np.flatnonzero(np.ptp(X, axis=0) > 0)
    if varying.size:
        sw = np.sqrt(w)[:, None]
        A = (X[:, varying] - x_mean[varying]) * sw
        b = (y - y_mean) * sw[:, 0]
        if ridge == 0:
            coef = linalg.lstsq(A, b, lapack_driver="gelsd")[0]
        elif A.shape[1] <= A.shape[0]:
            coef = linalg.solve(A.T @ A + ridge * np.eye(A.shape[1]), A.T @ b, assume_a="pos")
        else:
            alpha = linalg.solve(A @ A.T + ridge * np.eye(A.shape[0]), b, assume_a="pos")
            coef = A.T @ alpha
        weights[varying] = coef
    bias = y_mean - float(x_mean @ weights)
    return LinearModel(weights, bias, ridge, n)

"""Regression models over bit vectors: ridge and gradient-boosted trees."""

from .data import TrainingSet
from .gbdt import GbdtModel, Tree, best_split, fit_gbdt
from .io import ModelVersionError, load_model, save_model
from .linear import DegenerateData, LinearModel, fit_linear
from .metrics import UndefinedVariance, r2_score


def predict(model, x):
    return model.predict(x)


def feature_importance(model):
    return model.feature_importance()


def super_features(model: GbdtModel, x):
    return model.super_features(x)


def fit(kind: str, data: TrainingSet, **hp):
    """Fit a model of ``kind`` ("linear" or "gbdt") on a TrainingSet."""
    if kind == "linear":
        return fit_linear(data.X, data.y, data.w, **hp)
    if kind == "gbdt":
        return fit_gbdt(data.X, data.y, data.w, **hp)
    raise ValueError(f"unknown model kind {kind!r}")


__all__ = [
    "DegenerateData", "GbdtModel", "LinearModel", "ModelVersionError", "TrainingSet", "Tree",
    "UndefinedVariance", "best_split", "feature_importance", "fit", "fit_gbdt", "fit_linear",
    "load_model", "predict", "r2_score", "save_model", "super_features",
]

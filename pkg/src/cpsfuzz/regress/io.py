"""Self-describing model files (JSON)."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .gbdt import GbdtModel, Tree
from .linear import LinearModel

FORMAT = "cpsfuzz-model"
VERSION = 1


class ModelVersionError(ValueError):
    pass


def model_to_dict(model) -> dict:
    out = {"format": FORMAT, "version": VERSION, "kind": model.kind,
           "hyperparameters": model.hyperparameters(), "n_train": model.n_train,
           "n_features": model.n_features}
    if model.kind == "linear":
        out["bias"] = model.bias
        out["weights"] = model.weights.tolist()
    else:
        out["base_value"] = model.base_value
        out["trees"] = [{
            "feature": t.feature.tolist(), "left": t.left.tolist(), "right": t.right.tolist(),
            "value": t.value.tolist(),
            "importance": [[int(f), g] for f, g in sorted(t.importance.items())],
        } for t in model.trees]
    return out


def model_from_dict(data: dict):
    if data.get("format") != FORMAT:
        raise ValueError("not a model file")
    if data.get("version") != VERSION:
        raise ModelVersionError(f"model file version {data.get('version')}, expected {VERSION}")
    hp = data["hyperparameters"]
    if data["kind"] == "linear":
        return LinearModel(np.array(data["weights"], dtype=float), float(data["bias"]),
                           float(hp["ridge"]), int(data["n_train"]))
    if data["kind"] == "gbdt":
        trees = [Tree(np.array(t["feature"], dtype=np.int64), np.array(t["left"], dtype=np.int64),
                      np.array(t["right"], dtype=np.int64), np.array(t["value"], dtype=float),
                      {int(f): float(g) for f, g in t["importance"]})
                 for t in data["trees"]]
        return GbdtModel(trees, float(hp["learning_rate"]), float(data["base_value"]),
                         int(data["n_features"]), int(hp["max_depth"]), float(hp["min_leaf"]),
                         int(data["n_train"]))
    raise ValueError(f"unknown model kind {data['kind']!r}")


def save_model(model, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model)) + "\n")


def load_model(path: str | Path):
    return model_from_dict(json.loads(Path(path).read_text()))

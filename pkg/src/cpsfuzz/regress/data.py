"""Training sets of bit vectors with real targets and positive weights."""

from __future__ import annotations

from pathlib import Path

import numpy as np


class TrainingSet:
    """Growable (X, y, w) with X a 0/1 matrix.

    Rows are kept in a list so that the active-learning loop can append
    cheaply; ``X``, ``y`` and ``w`` materialise arrays on demand.
    """

    def __init__(self, X=None, y=None, w=None):
        self._rows: list[np.ndarray] = []
        self._y: list[float] = []
        self._w: list[float] = []
        self._cache = None
        if X is not None:
            X = np.asarray(X, dtype=np.uint8)
            y = np.asarray(y, dtype=float)
            w = np.ones(len(y)) if w is None else np.asarray(w, dtype=float)
            if not (len(X) == len(y) == len(w)):
                raise ValueError("X, y and w must have the same length")
            for row, target, weight in zip(X, y, w):
                self.append(row, target, weight)

    def __len__(self) -> int:
        return len(self._y)

    def append(self, x, target: float, weight: float = 1.0) -> None:
        if weight <= 0:
            raise ValueError("weights must be positive")
        x = np.asarray(x, dtype=np.uint8)
        if self._rows and x.shape != self._rows[0].shape:
            raise ValueError("feature length mismatch")
        self._rows.append(x.copy())
        self._y.append(float(target))
        self._w.append(float(weight))
        self._cache = None

    def _arrays(self):
        if self._cache is None:
            X = np.stack(self._rows) if self._rows else np.zeros((0, 0), dtype=np.uint8)
            self._cache = (X, np.array(self._y), np.array(self._w))
        return self._cache

    @property
    def X(self) -> np.ndarray:
        return self._arrays()[0]

    @property
    def y(self) -> np.ndarray:
        return self._arrays()[1]

    @property
    def w(self) -> np.ndarray:
        return self._arrays()[2]

    @property
    def total_weight(self) -> float:
        return float(sum(self._w))

    def copy(self) -> "TrainingSet":
        out = TrainingSet()
        out._rows = list(self._rows)
        out._y = list(self._y)
        out._w = list(self._w)
        return out

    def save(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            n_features = self._rows[0].size if self._rows else 0
            fh.write(f"#cpsfuzz-trainingset v1 features={n_features}\n")
            for row, target, weight in zip(self._rows, self._y, self._w):
                hexbits = np.packbits(row, bitorder="little").tobytes().hex()
                fh.write(f"{hexbits},{target!r},{weight!r}\n")

    @classmethod
    def load(cls, path: str | Path) -> "TrainingSet":
        out = cls()
        with open(path) as fh:
            header = fh.readline().split()
            if len(header) != 3 or header[0] != "#cpsfuzz-trainingset" or header[1] != "v1":
                raise ValueError(f"{path}:1: not a v1 training set")
            n_features = int(header[2].split("=")[1])
            for lineno, line in enumerate(fh, start=2):
                try:
                    hexbits, target, weight = line.strip().split(",")
                    bits = np.unpackbits(np.frombuffer(bytes.fromhex(hexbits), dtype=np.uint8),
                                         bitorder="little")[:n_features]
                    out.append(bits, float(target), float(weight))
                except ValueError as exc:
                    raise ValueError(f"{path}:{lineno}: {exc}") from None
        return out

"""Model quality metrics."""

from __future__ import annotations

import numpy as np


class UndefinedVariance(ValueError):
    """r2 is undefined when the actual values are all equal."""


def r2_score(predicted, actual) -> float:
    """1 - SS_res / SS_tot."""
    p = np.asarray(predicted, dtype=float)
    a = np.asarray(actual, dtype=float)
    if p.shape != a.shape or a.size == 0:
        raise ValueError("need equal, non-zero lengths")
    ss_tot = float(((a - a.mean()) ** 2).sum())
    if ss_tot == 0:
        raise UndefinedVariance("actual values are constant")
    return 1.0 - float(((a - p) ** 2).sum()) / ss_tot

from __future__ import annotations

from typing import Literal

import numpy as np

ScalingMode = Literal["sum_squares", "norm", "none"]
SCALING_MODES = ("sum_squares", "norm", "none")


def scale_features(x: np.ndarray, mode: ScalingMode = "sum_squares") -> np.ndarray:
    """Row-wise feature scaling.

    ``sum_squares`` divides each row by Σ_μ X_iμ², ``norm`` by its Euclidean
    norm. All-zero rows are left unchanged.
    """
    x = np.asarray(x, dtype=np.float64)
    if mode == "none":
        return x.copy()
    ss = np.sum(x * x, axis=1, keepdims=True)
    if mode == "sum_squares":
        denom = ss
    elif mode == "norm":
        denom = np.sqrt(ss)
    else:
        raise ValueError(f"unknown feature scaling: {mode!r}")
    denom = np.where(denom > 0.0, denom, 1.0)
    return x / denom

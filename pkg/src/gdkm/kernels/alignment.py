from __future__ import annotations

import numpy as np

from gdkm.autodiff.tape import value_of
from gdkm.errors import NumericError


class DegenerateKernel(NumericError):
    pass


def _center(k: np.ndarray) -> np.ndarray:
    n = k.shape[0]
    h = np.eye(n) - np.ones((n, n)) / n
    return h @ k @ h


def cka(k1, k2) -> float:
    """Centered kernel alignment ⟨K₁', K₂'⟩_F / (‖K₁'‖_F ‖K₂'‖_F), K' = HKH."""
    k1 = value_of(k1)
    k2 = value_of(k2)
    if k1.shape != k2.shape or k1.shape[0] != k1.shape[1]:
        raise ValueError(f"cka needs square matrices of equal size, got {k1.shape} and {k2.shape}")
    c1, c2 = _center(k1), _center(k2)
    n1 = np.linalg.norm(c1)
    n2 = np.linalg.norm(c2)
    for name, norm, raw in (("first", n1, k1), ("second", n2, k2)):
        if norm <= 1e-12 * max(1.0, float(np.max(np.abs(raw)))):
            raise DegenerateKernel(f"{name} kernel vanishes after centering")
    value = float(np.sum(c1 * c2) / (n1 * n2))
    return float(np.clip(value, 0.0, 1.0))


def normalize_kernel(k) -> np.ndarray:
    """K_ij / √(K_ii K_jj), the correlation form used for plots."""
    k = value_of(k)
    d = np.sqrt(np.clip(np.diag(k), 1e-300, None))
    return k / np.outer(d, d)


def label_kernel(labels: np.ndarray, num_classes: int | None = None) -> np.ndarray:
    """YYᵀ for one-hot labels (or ±1 columns when given a float matrix)."""
    labels = np.asarray(labels)
    if labels.ndim == 2:
        y = labels.astype(np.float64)
    else:
        c = int(num_classes if num_classes is not None else labels.max() + 1)
        y = np.eye(c)[labels.astype(np.int64)]
    return y @ y.T

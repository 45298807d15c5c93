from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence, Tuple

import numpy as np
import scipy.linalg

from gdkm.errors import NumericError
from gdkm.runtime.logging import LogLevel, log_message

# Dense matrices are plain float64 ndarrays. These aliases document intent.
SpdMatrix = np.ndarray
LowerTriangular = np.ndarray

SYMMETRY_RTOL = 1e-10
CLIP_THRESHOLD = -1e-8


class FactorizationFailed(NumericError):
    pass


class ConvergenceFailed(NumericError):
    pass


class NegativeEigenvalue(NumericError):
    pass


class SingularTriangular(NumericError):
    pass


class NonPositiveDiagonal(NumericError):
    pass


@dataclass(frozen=True)
class JitterPolicy:
    """Relative jitter ladder; each level is scaled by mean(diag(m))."""

    levels: Tuple[float, ...] = (0.0, 1e-10, 1e-8, 1e-6, 1e-4)

    def absolute(self, m: np.ndarray) -> Sequence[float]:
        scale = float(np.mean(np.diag(m))) if m.size else 1.0
        if not np.isfinite(scale) or scale <= 0.0:
            scale = 1.0
        return [level * scale for level in self.levels]


DEFAULT_JITTER = JitterPolicy()


@dataclass(frozen=True)
class Cholesky:
    factor: LowerTriangular
    jitter: float

    @property
    def dim(self) -> int:
        return int(self.factor.shape[0])


def as_matrix(m) -> np.ndarray:
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {arr.shape}")
    return arr


def is_symmetric(m: np.ndarray, rtol: float = SYMMETRY_RTOL) -> bool:
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        return False
    scale = max(float(np.max(np.abs(m))) if m.size else 0.0, 1.0)
    return bool(np.max(np.abs(m - m.T), initial=0.0) <= rtol * scale)


def symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def cholesky(m: SpdMatrix, jitter_policy: JitterPolicy = DEFAULT_JITTER) -> Cholesky:
    """Lower Cholesky factor of ``m + δI`` for the smallest ladder δ that succeeds."""
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"cholesky needs a square matrix, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise FactorizationFailed("matrix has non-finite entries")
    eye = np.eye(m.shape[0])
    for delta in jitter_policy.absolute(m):
        try:
            factor = scipy.linalg.cholesky(m + delta * eye, lower=True, check_finite=False)
        except scipy.linalg.LinAlgError:
            continue
        if not np.all(np.diag(factor) > 0.0):
            continue
        if delta > 0.0:
            log_message("cholesky needed jitter", LogLevel.WARN, dim=m.shape[0], jitter=f"{delta:.3g}")
        return Cholesky(factor=factor, jitter=float(delta))
    raise FactorizationFailed(
        f"cholesky failed for a {m.shape[0]}x{m.shape[0]} matrix at every jitter level"
    )


def sym_eig(m: SpdMatrix) -> Tuple[np.ndarray, np.ndarray]:
    """Eigenvalues in descending order and orthonormal eigenvectors.

    Each eigenvector's first nonzero component is made positive.
    """
    m = as_matrix(m)
    try:
        w, v = scipy.linalg.eigh(symmetrize(m), check_finite=True)
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise ConvergenceFailed(f"symmetric eigendecomposition failed: {exc}") from exc
    w = w[::-1].copy()
    v = v[:, ::-1].copy()
    for j in range(v.shape[1]):
        nz = np.flatnonzero(np.abs(v[:, j]) > 1e-14)
        if nz.size and v[nz[0], j] < 0.0:
            v[:, j] = -v[:, j]
    return w, v


def _clip_eigenvalues(w: np.ndarray) -> np.ndarray:
    if w.size and float(np.min(w)) < CLIP_THRESHOLD:
        raise NegativeEigenvalue(f"eigenvalue {float(np.min(w)):.3e} is below {CLIP_THRESHOLD}")
    return np.clip(w, 0.0, None)


def frac_power(m: np.ndarray, p: float) -> np.ndarray:
    """V D^p V^{-1} for a diagonalizable matrix with non-negative real spectrum."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"power must lie in [0, 1], got {p}")
    m = as_matrix(m)
    if is_symmetric(m):
        w, v = sym_eig(m)
        w = _clip_eigenvalues(w)
        return symmetrize((v * w**p) @ v.T)

    w, v = np.linalg.eig(m)
    scale = max(float(np.max(np.abs(w))), 1.0)
    if np.max(np.abs(w.imag), initial=0.0) > 1e-8 * scale:
        raise NegativeEigenvalue("matrix has complex eigenvalues")
    w = _clip_eigenvalues(w.real)
    v = v.real
    return (v * w**p) @ np.linalg.inv(v)


def tri_solve(
    h: LowerTriangular,
    b: np.ndarray,
    side: Literal["left", "right"] = "left",
    transpose: bool = False,
) -> np.ndarray:
    """Solve with a lower-triangular ``h``.

    left:  op(h) X = b   (X = h^{-1} b, or h^{-T} b when transpose)
    right: X op(h) = b   (X = b h^{-1}, or b h^{-T} when transpose)
    """
    h = as_matrix(h)
    b = np.asarray(b, dtype=np.float64)
    diag = np.diag(h)
    if diag.size and np.min(np.abs(diag)) == 0.0:
        raise SingularTriangular("triangular factor has a zero on its diagonal")
    if side == "left":
        return scipy.linalg.solve_triangular(h, b, lower=True, trans="T" if transpose else "N", check_finite=False)
    if side == "right":
        # X h^{-1} = (h^{-T} X^T)^T, X h^{-T} = (h^{-1} X^T)^T
        bt = np.swapaxes(b, -1, -2) if b.ndim == 2 else b
        solved = scipy.linalg.solve_triangular(h, bt, lower=True, trans="N" if transpose else "T", check_finite=False)
        return solved.T if solved.ndim == 2 else solved
    raise ValueError(f"side must be 'left' or 'right', got {side!r}")


def logdet_from_chol(h: LowerTriangular) -> float:
    diag = np.diag(as_matrix(h))
    if np.any(diag <= 0.0):
        raise NonPositiveDiagonal("log-determinant needs a positive diagonal")
    return float(2.0 * np.sum(np.log(diag)))


def sym_power(m: SpdMatrix, p: float) -> np.ndarray:
    """Symmetric power for any real p (negative powers need a positive spectrum)."""
    w, v = sym_eig(m)
    if p < 0 and np.min(w) <= 0.0:
        raise NegativeEigenvalue("negative power of a singular matrix")
    w = np.clip(w, 0.0, None)
    return symmetrize((v * w**p) @ v.T)

"""Full-rank graph DKM objective and its Gaussian KL building block."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from gdkm.autodiff import ops
from gdkm.autodiff.tape import Var
from gdkm.errors import NumericError
from gdkm.graphs.adjacency import NormalizedAdjacency
from gdkm.kernels.convolution import graph_conv
from gdkm.kernels.nonlinearity import apply_kernel_dense
from gdkm.numerics import linalg
from gdkm.numerics.linalg import FactorizationFailed, JitterPolicy

# KL terms are evaluated without jitter so that a singular K is reported
# instead of silently regularized.
STRICT = JitterPolicy(levels=(0.0,))

DEFAULT_NOISE = 1e-3


class SingularK(NumericError):
    pass


class SingularPrior(NumericError):
    pass


class DegenerateSigma(NumericError):
    pass


def kl_gaussian(g, k) -> Var:
    """KL(N(0, G) || N(0, K)) = ½(Tr(K⁻¹G) − log det(K⁻¹G) − P).

    Raises SingularK when K has no Cholesky factor and FactorizationFailed
    when G has none.
    """
    if np.shape(g) != np.shape(k):
        raise ValueError(f"kl_gaussian needs equal shapes, got {np.shape(g)} and {np.shape(k)}")
    try:
        h_k = ops.cholesky(k, STRICT)
    except FactorizationFailed as exc:
        raise SingularK(f"prior covariance is not positive definite: {exc}") from exc
    h_g = ops.cholesky(g, STRICT)
    p = np.shape(g)[0]
    m = ops.tri_solve(h_k, h_g, side="left")
    trace_term = ops.sum_squares(m)
    log_ratio = ops.sub(ops.sum_log_abs_diag(h_g), ops.sum_log_abs_diag(h_k))
    return ops.mul(ops.sub(ops.sub(trace_term, ops.mul(log_ratio, 2.0)), float(p)), 0.5)


def kl_from_factor(l_param) -> Var:
    """KL(G_ii || K_ii) under G_ii = H L Lᵀ Hᵀ: ½(‖L‖² − 2Σlog|L_jj| − P)."""
    l = ops.tril(l_param)
    p = np.shape(l)[0]
    value = ops.sub(ops.sum_squares(l), ops.mul(ops.sum_log_abs_diag(l), 2.0))
    return ops.mul(ops.sub(value, float(p)), 0.5)


def gram_from_params(l_param, k_ii) -> Var:
    """G_ii = H L Lᵀ Hᵀ with H = chol(K_ii)."""
    h = ops.cholesky(k_ii)
    f = ops.matmul(h, ops.tril(l_param))
    return ops.matmul(f, ops.transpose(f))


def factor_from_gram(g_ii: np.ndarray, k_ii: np.ndarray) -> np.ndarray:
    """Inverse of :func:`gram_from_params`: L = chol(H⁻¹ G_ii H⁻ᵀ)."""
    h = linalg.cholesky(k_ii).factor
    inner = linalg.tri_solve(h, linalg.tri_solve(h, g_ii, side="left"), side="right", transpose=True)
    return linalg.cholesky(linalg.symmetrize(inner)).factor


@dataclass(frozen=True)
class GaussianLikelihood:
    """Σ_c log N(y_c; 0, Â K(G^L) Âᵀ + σ² I) over the columns of ``y``."""

    y: np.ndarray
    noise: float = DEFAULT_NOISE

    def log_prob(self, k_out) -> Var:
        y = np.asarray(self.y, dtype=np.float64)
        if y.ndim == 1:
            y = y[:, None]
        p, c = y.shape
        cov = ops.add(k_out, self.noise * np.eye(p))
        h = ops.cholesky(cov)
        m = ops.tri_solve(h, y, side="left")
        quad = ops.mul(ops.sum_squares(m), -0.5)
        logdet = ops.mul(ops.sum_log_abs_diag(h), -float(c))
        return ops.add(ops.add(quad, logdet), -0.5 * p * c * math.log(2.0 * math.pi))


@dataclass(frozen=True)
class TargetKernelLikelihood:
    """−ν_out · KL(G^{L+1} || Â K(G^L) Âᵀ) for a fixed output Gram G^{L+1}."""

    target: np.ndarray
    nu_out: float = 1.0

    def log_prob(self, k_out) -> Var:
        try:
            kl = kl_gaussian(self.target, k_out)
        except SingularK as exc:
            raise SingularPrior(f"output prior is singular: {exc}") from exc
        return ops.mul(kl, -float(self.nu_out))


def full_rank_objective(
    grams: Sequence,
    g0,
    a: NormalizedAdjacency,
    nu: Sequence[float],
    likelihood,
    base_kernel: str = "linear",
) -> Var:
    """log P(Y | G^L) − Σ_ℓ ν_ℓ KL(G^ℓ || Â K(G^{ℓ−1}) Âᵀ).

    Layers with ν_ℓ = ∞ ignore the supplied gram and take the prior itself.
    """
    if len(grams) != len(nu):
        raise ValueError(f"got {len(grams)} Gram matrices but {len(nu)} nu values")
    penalty = None
    prev = g0
    for ell, (g, weight) in enumerate(zip(grams, nu), start=1):
        if weight < 0:
            raise ValueError(f"nu must be >= 0, got {weight} at layer {ell}")
        prior = graph_conv(apply_kernel_dense(prev, base_kernel), a)
        if math.isinf(weight):
            prev = prior
            continue
        if weight > 0:
            try:
                kl = kl_gaussian(g, prior)
            except SingularK as exc:
                raise SingularPrior(f"prior at layer {ell} is singular: {exc}") from exc
            term = ops.mul(kl, float(weight))
            penalty = term if penalty is None else ops.add(penalty, term)
        prev = g
    k_out = graph_conv(apply_kernel_dense(prev, base_kernel), a)
    value = likelihood.log_prob(k_out)
    return value if penalty is None else ops.sub(value, penalty)

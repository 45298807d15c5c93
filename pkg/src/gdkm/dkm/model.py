from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Literal, Optional, Sequence

import numpy as np

from gdkm.dkm.inducing import InducingScheme, inter_domain, intra_domain, sample_inducing_nodes
from gdkm.graphs.adjacency import NormalizedAdjacency
from gdkm.kernels.centering import CenteringParams

GttMode = Literal["nystrom", "exact"]
GTT_MODES = ("nystrom", "exact")


@dataclass(frozen=True)
class VariationalHead:
    """Gaussian posterior over output weights: columns W_λ ~ N(μ_λ, Σ), Σ = S Sᵀ shared."""

    mu: np.ndarray
    sigma_chol: np.ndarray
    mc_samples: int = 1

    def __post_init__(self) -> None:
        if self.mc_samples < 1:
            raise ValueError("mc_samples must be >= 1")

    @property
    def sigma(self) -> np.ndarray:
        s = np.tril(self.sigma_chol)
        return s @ s.T

    @property
    def num_classes(self) -> int:
        return int(self.mu.shape[1])


@dataclass(frozen=True)
class DkmModel:
    """Sparse graph DKM: per-layer factors L^ℓ, inducing inputs and a variational head.

    Parameters are exposed as a flat name → array mapping (see
    :meth:`parameters`) so the optimizer and checkpoint code can treat them
    uniformly.
    """

    depth: int
    nu: List[float]
    base_kernel: str
    scheme: InducingScheme
    inducing_inputs: np.ndarray
    layer_params: List[np.ndarray]
    head: VariationalHead
    centering: List[CenteringParams] = field(default_factory=list)
    gtt_mode: GttMode = "nystrom"
    residual: bool = False

    def __post_init__(self) -> None:
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if len(self.nu) != self.depth or len(self.layer_params) != self.depth:
            raise ValueError("nu and layer_params need one entry per layer")
        if any(v < 0 or math.isnan(v) for v in self.nu):
            raise ValueError("nu values must be >= 0")
        if self.centering and len(self.centering) != self.depth:
            raise ValueError("centering needs one entry per layer")
        if self.gtt_mode not in GTT_MODES:
            raise ValueError(f"unknown gtt_mode: {self.gtt_mode!r}")
        for ell, l in enumerate(self.layer_params, start=1):
            if np.any(np.diag(l) <= 0.0):
                raise ValueError(f"layer {ell} factor must have a positive diagonal")

    @property
    def num_inducing(self) -> int:
        return int(self.inducing_inputs.shape[0])

    @property
    def num_classes(self) -> int:
        return self.head.num_classes

    def layer_centering(self, ell: int) -> CenteringParams:
        return self.centering[ell - 1] if self.centering else CenteringParams()

    def is_frozen(self, ell: int) -> bool:
        return math.isinf(self.nu[ell - 1])

    def parameters(self) -> Dict[str, np.ndarray]:
        params: Dict[str, np.ndarray] = {}
        for ell, l in enumerate(self.layer_params, start=1):
            params[f"layer_{ell}"] = np.asarray(l, dtype=np.float64)
        params["head_mu"] = np.asarray(self.head.mu, dtype=np.float64)
        params["head_sigma_chol"] = np.asarray(self.head.sigma_chol, dtype=np.float64)
        for ell in range(1, self.depth + 1):
            c = self.layer_centering(ell)
            if c.enabled:
                params[f"gamma_{ell}"] = np.asarray(c.gamma, dtype=np.float64)
                params[f"beta_{ell}"] = np.asarray(c.beta, dtype=np.float64)
        return params

    def trainable(self) -> List[str]:
        names = [f"layer_{ell}" for ell in range(1, self.depth + 1) if not self.is_frozen(ell)]
        names += ["head_mu", "head_sigma_chol"]
        for ell in range(1, self.depth + 1):
            c = self.layer_centering(ell)
            if c.enabled and c.learn_affine:
                names += [f"gamma_{ell}", f"beta_{ell}"]
        return names

    def with_parameters(self, params: Dict[str, np.ndarray]) -> "DkmModel":
        layers = [_positive_diagonal(params.get(f"layer_{ell}", l)) for ell, l in enumerate(self.layer_params, start=1)]
        head = replace(
            self.head,
            mu=np.asarray(params.get("head_mu", self.head.mu), dtype=np.float64),
            sigma_chol=_positive_diagonal(params.get("head_sigma_chol", self.head.sigma_chol)),
        )
        centering = []
        for ell in range(1, self.depth + 1):
            c = self.layer_centering(ell)
            if c.enabled and f"gamma_{ell}" in params:
                c = replace(c, gamma=float(params[f"gamma_{ell}"]), beta=float(params[f"beta_{ell}"]))
            centering.append(c)
        return replace(
            self,
            layer_params=layers,
            head=head,
            centering=centering if self.centering else [],
        )


def _positive_diagonal(l: np.ndarray) -> np.ndarray:
    """Lower triangle with column signs flipped so the diagonal is positive (L Lᵀ is unchanged)."""
    l = np.tril(np.asarray(l, dtype=np.float64))
    signs = np.where(np.diag(l) < 0.0, -1.0, 1.0)
    return l * signs[None, :]


def broadcast_nu(nu: float | Sequence[float], depth: int) -> List[float]:
    if isinstance(nu, (int, float)):
        return [float(nu)] * depth
    values = [float(v) for v in nu]
    if len(values) == 1:
        return values * depth
    if len(values) != depth:
        raise ValueError(f"nu has {len(values)} entries for depth {depth}")
    return values


def init_model(
    features: np.ndarray,
    adjacency: NormalizedAdjacency,
    num_classes: int,
    *,
    depth: int = 2,
    nu: float | Sequence[float] = 1.0,
    base_kernel: str = "arccos",
    scheme: str = "inter",
    num_inducing: int = 100,
    candidates: Optional[np.ndarray] = None,
    seed: int = 0,
    centering: bool = False,
    learn_affine: bool = False,
    gtt_mode: GttMode = "nystrom",
    residual: bool = False,
    mc_samples: int = 1,
) -> DkmModel:
    """Model at the NNGP point: L^ℓ = I, μ = 0, Σ = I.

    Inducing inputs are the features of nodes sampled from ``candidates``
    (all nodes by default); the intra-domain scheme also takes its block
    adjacency from those nodes.
    """
    features = np.asarray(features, dtype=np.float64)
    if candidates is None:
        candidates = np.arange(features.shape[0])
    idx = sample_inducing_nodes(candidates, num_inducing, seed)
    if scheme == "inter":
        block = inter_domain(adjacency, int(idx.size))
    elif scheme == "intra":
        block = intra_domain(adjacency, idx)
    else:
        raise ValueError(f"unknown inducing scheme: {scheme!r}")
    p_i = int(idx.size)
    return DkmModel(
        depth=depth,
        nu=broadcast_nu(nu, depth),
        base_kernel=base_kernel,
        scheme=block,
        inducing_inputs=features[idx].copy(),
        layer_params=[np.eye(p_i) for _ in range(depth)],
        head=VariationalHead(mu=np.zeros((p_i, num_classes)), sigma_chol=np.eye(p_i), mc_samples=mc_samples),
        # β = 1 keeps the centered block full rank (CKC annihilates the ones vector)
        centering=[CenteringParams(enabled=True, learn_affine=learn_affine, beta=1.0) for _ in range(depth)] if centering else [],
        gtt_mode=gtt_mode,
        residual=residual,
    )

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import List, Literal, Optional

import numpy as np

from gdkm.autodiff.tape import value_of
from gdkm.dkm.inducing import InducingScheme
from gdkm.errors import DimensionMismatch
from gdkm.graphs.adjacency import NormalizedAdjacency
from gdkm.kernels.blocks import BlockGram, add_blocks, input_blocks
from gdkm.kernels.convolution import graph_conv, graph_conv_block
from gdkm.kernels.nonlinearity import apply_kernel, apply_kernel_dense


@dataclass(frozen=True)
class NngpConfig:
    depth: int
    base_kernel: Literal["arccos", "linear"]
    adjacency: NormalizedAdjacency
    input_scale: Optional[float] = None
    residual: bool = False

    def __post_init__(self) -> None:
        if self.depth < 1:
            raise ValueError("depth must be >= 1")


def input_gram(x: np.ndarray, scale: Optional[float] = None) -> np.ndarray:
    """scale·X Xᵀ, with scale = 1/ν₀ by default."""
    x = np.asarray(x, dtype=np.float64)
    scale = 1.0 / x.shape[1] if scale is None else scale
    return scale * (x @ x.T)


def nngp_forward(x_gram: np.ndarray, cfg: NngpConfig) -> List[np.ndarray]:
    """G^ℓ = Â K(G^{ℓ−1}) Âᵀ for ℓ = 1..L; returns every layer."""
    g = np.asarray(x_gram, dtype=np.float64)
    if g.shape[0] != cfg.adjacency.num_nodes:
        raise DimensionMismatch(f"input Gram has {g.shape[0]} rows but the graph has {cfg.adjacency.num_nodes} nodes")
    grams: List[np.ndarray] = []
    for _ in range(cfg.depth):
        k = graph_conv(apply_kernel_dense(g, cfg.base_kernel), cfg.adjacency)
        nxt = value_of(k)
        if cfg.residual:
            nxt = 0.5 * (nxt + g)
        g = 0.5 * (nxt + nxt.T)
        grams.append(g)
    return grams


def nngp_forward_sparse(
    x_inducing: np.ndarray,
    x_test: np.ndarray,
    cfg: NngpConfig,
    scheme: InducingScheme,
) -> List[BlockGram]:
    """Blockwise graph NNGP over inducing + test inputs (full tt blocks)."""
    if x_test.shape[0] != scheme.num_test or x_inducing.shape[0] != scheme.num_inducing:
        raise DimensionMismatch("inputs do not match the inducing scheme")
    g = input_blocks(x_inducing, x_test, full_tt=True, scale=cfg.input_scale)
    out: List[BlockGram] = []
    for _ in range(cfg.depth):
        k = graph_conv_block(apply_kernel(g, cfg.base_kernel), scheme.a_ii, scheme.a_ti, scheme.a_tt)
        if cfg.residual:
            k = add_blocks(k, g)
        g = k.values()
        out.append(g)
    return out


def khop_closure(adjacency: NormalizedAdjacency, nodes: np.ndarray, hops: int) -> np.ndarray:
    """Sorted ids of every node within ``hops`` steps of ``nodes``."""
    pattern = (adjacency.matrix != 0).astype(np.float64).tocsr()
    mask = np.zeros(adjacency.num_nodes, dtype=bool)
    mask[np.asarray(nodes, dtype=np.int64)] = True
    for _ in range(hops):
        mask |= (pattern @ mask.astype(np.float64)) > 0.0
    return np.flatnonzero(mask)


def nngp_on_nodes(x: np.ndarray, cfg: NngpConfig, nodes: np.ndarray) -> List[np.ndarray]:
    """Dense NNGP layers restricted to ``nodes``, exact without the full P × P recursion.

    Layer ℓ only reads neighbours, so running the recursion on the
    depth-hop closure of ``nodes`` is exact on ``nodes`` themselves.
    """
    nodes = np.asarray(nodes, dtype=np.int64)
    closure = khop_closure(cfg.adjacency, nodes, cfg.depth)
    sub = NormalizedAdjacency(
        matrix=cfg.adjacency.submatrix(closure, closure),
        lam=cfg.adjacency.lam,
        scheme=cfg.adjacency.scheme,
    )
    x = np.asarray(x, dtype=np.float64)
    grams = nngp_forward(input_gram(x[closure], cfg.input_scale), replace(cfg, adjacency=sub))
    pos = np.searchsorted(closure, nodes)
    return [g[np.ix_(pos, pos)] for g in grams]

"""Closed-form optimum of the linear graph DKM and the data for its demo."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np

from gdkm.graphs.adjacency import EdgeList, NormalizedAdjacency, SingularAdjacency
from gdkm.graphs.generators import erdos_renyi
from gdkm.numerics import linalg
from gdkm.numerics.linalg import ConvergenceFailed
from gdkm.numerics.random import stream

SINGULAR_TOL = 1e-12
SYMMETRY_TOL = 1e-8


class _AdjacencyPowers:
    """Integer powers (negative allowed) of a symmetric invertible Â from one eigendecomposition."""

    def __init__(self, a: NormalizedAdjacency) -> None:
        w, v = linalg.sym_eig(a.to_dense())
        if np.min(np.abs(w)) <= SINGULAR_TOL:
            raise SingularAdjacency(
                f"adjacency is singular (min |eigenvalue| = {float(np.min(np.abs(w))):.3e}); use lambda > 0"
            )
        self._w = w
        self._v = v

    def __call__(self, k: int) -> np.ndarray:
        return (self._v * self._w ** float(k)) @ self._v.T


def linear_closed_form(
    g0: np.ndarray,
    g_out: np.ndarray,
    a_lambda: NormalizedAdjacency,
    depth: int,
    ell: int,
) -> np.ndarray:
    """Optimal G^ℓ of the linear graph DKM with all KL weights equal.

    With B = Â G⁰ Â and M = Â⁻ᴸ G^{L+1} Â⁻ᴸ the optimum is
    G^ℓ = Â^{ℓ−1} B^{1/2} (B^{−1/2} M B^{−1/2})^{ℓ/(L+1)} B^{1/2} Â^{ℓ−1},
    the symmetric form of Â^{ℓ−1} (M B⁻¹)^{ℓ/(L+1)} B Â^{ℓ−1}. ``ell`` may
    be 0 or L+1, which return G⁰ and G^{L+1}.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if not 0 <= ell <= depth + 1:
        raise ValueError(f"layer {ell} is outside 0..{depth + 1}")
    g0 = linalg.as_matrix(g0)
    g_out = linalg.as_matrix(g_out)
    powers = _AdjacencyPowers(a_lambda)
    return _closed_form_layer(g0, g_out, powers, depth, ell)


def _closed_form_layer(g0, g_out, powers: _AdjacencyPowers, depth: int, ell: int) -> np.ndarray:
    a1 = powers(1)
    b = a1 @ g0 @ a1
    a_neg = powers(-depth)
    m = a_neg @ g_out @ a_neg
    b_half = linalg.frac_power(linalg.symmetrize(b), 0.5)
    b_neg_half = linalg.sym_power(b, -0.5)
    s = linalg.symmetrize(b_neg_half @ m @ b_neg_half)
    middle = linalg.frac_power(s, ell / (depth + 1))
    outer = powers(ell - 1)
    g = outer @ b_half @ middle @ b_half @ outer
    scale = max(1.0, float(np.max(np.abs(g))))
    if np.max(np.abs(g - g.T)) > SYMMETRY_TOL * scale:
        raise ConvergenceFailed("closed-form Gram matrix lost symmetry")
    return linalg.symmetrize(g)


def closed_form_stack(g0: np.ndarray, g_out: np.ndarray, a_lambda: NormalizedAdjacency, depth: int) -> List[np.ndarray]:
    """G¹..G^L of the closed-form optimum."""
    g0 = linalg.as_matrix(g0)
    g_out = linalg.as_matrix(g_out)
    powers = _AdjacencyPowers(a_lambda)
    return [_closed_form_layer(g0, g_out, powers, depth, ell) for ell in range(1, depth + 1)]


def wishart_gram(g: np.ndarray, dof: int, seed: int, key: int = 0) -> np.ndarray:
    """Sample W = C E Eᵀ Cᵀ / dof with C C^T = g and E standard normal (P × dof)."""
    if dof < 1:
        raise ValueError("dof must be >= 1")
    g = linalg.as_matrix(g)
    c = linalg.cholesky(g).factor
    e = stream(seed, "init", key).standard_normal((g.shape[0], dof))
    z = c @ e
    return linalg.symmetrize(z @ z.T / dof)


@dataclass(frozen=True)
class LinearDemoData:
    edges: EdgeList
    labels: np.ndarray
    y: np.ndarray
    g0: np.ndarray
    target: np.ndarray


def linear_demo_data(
    num_nodes: int = 50,
    edge_prob: float = 0.1,
    seed: int = 0,
    input_dof: int = 200,
    target_noise: float = 0.1,
) -> LinearDemoData:
    """Seeded ER graph with two balanced classes.

    G⁰ is a Wishart draw around I (random inputs of width ``input_dof``) and
    the output Gram is y yᵀ + noise·I with y = ±1 by class.
    """
    edges = erdos_renyi(num_nodes, edge_prob, seed)
    rng = stream(seed, "features")
    labels = np.arange(num_nodes) % 2
    rng.shuffle(labels)
    y = np.where(labels == 1, 1.0, -1.0)[:, None]
    x = rng.standard_normal((num_nodes, input_dof))
    g0 = linalg.symmetrize(x @ x.T / input_dof)
    target = y @ y.T + target_noise * np.eye(num_nodes)
    return LinearDemoData(edges=edges, labels=labels, y=y, g0=g0, target=target)


def linear_demo_subset(
    features: np.ndarray,
    labels: np.ndarray,
    edges: EdgeList,
    num_nodes: int = 100,
    seed: int = 0,
    target_noise: float = 0.1,
) -> LinearDemoData:
    """Induced subgraph on a seeded node sample of a real dataset.

    G⁰ = X Xᵀ / ν₀ over the sample and the output Gram is Y Yᵀ + noise·I
    with one-hot Y; G⁰ must be full rank for the closed form to exist.
    """
    labels = np.asarray(labels, dtype=np.int64)
    total = labels.shape[0]
    if not 2 <= num_nodes <= total:
        raise ValueError(f"subset size must lie in 2..{total}")
    nodes = np.sort(stream(seed, "graph", 1).choice(total, size=num_nodes, replace=False))
    position = np.full(total, -1, dtype=np.int64)
    position[nodes] = np.arange(num_nodes)
    kept = edges.edges[(position[edges.edges[:, 0]] >= 0) & (position[edges.edges[:, 1]] >= 0)] if edges.num_edges else edges.edges
    sub_edges = EdgeList.from_pairs(position[kept], num_nodes)
    x = np.asarray(features, dtype=np.float64)[nodes]
    sub_labels = labels[nodes]
    classes, sub_labels = np.unique(sub_labels, return_inverse=True)
    y = np.eye(classes.size)[sub_labels]
    g0 = linalg.symmetrize(x @ x.T / x.shape[1])
    target = y @ y.T + target_noise * np.eye(num_nodes)
    return LinearDemoData(edges=sub_edges, labels=sub_labels, y=y, g0=g0, target=target)

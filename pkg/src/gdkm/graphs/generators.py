from __future__ import annotations

from typing import Tuple

import numpy as np

from gdkm.graphs.adjacency import EdgeList, GraphError
from gdkm.numerics.random import stream


def erdos_renyi(n: int, p: float, seed: int) -> EdgeList:
    """G(n, p): every unordered pair is kept independently with probability p."""
    if n < 1:
        raise GraphError("n must be >= 1")
    if not 0.0 <= p <= 1.0:
        raise GraphError(f"p must lie in [0, 1], got {p}")
    rng = stream(seed, "graph")
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.shape[0]) < p
    return EdgeList.from_pairs(np.stack([iu[keep], ju[keep]], axis=1), n)


def planted_partition(n: int, k: int, p_in: float, p_out: float, seed: int) -> Tuple[EdgeList, np.ndarray]:
    """Stochastic block model with k equal-sized communities.

    Returns the edges and the community of each node (balanced, shuffled).
    """
    if k < 1 or n < k:
        raise GraphError("need 1 <= k <= n")
    for name, value in (("p_in", p_in), ("p_out", p_out)):
        if not 0.0 <= value <= 1.0:
            raise GraphError(f"{name} must lie in [0, 1], got {value}")
    rng = stream(seed, "graph", 1)
    communities = rng.permutation(np.arange(n) % k)
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(communities[iu] == communities[ju], p_in, p_out)
    keep = rng.random(iu.shape[0]) < prob
    edges = EdgeList.from_pairs(np.stack([iu[keep], ju[keep]], axis=1), n)
    return edges, communities.astype(np.int64)

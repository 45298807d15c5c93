from __future__ import annotations

import numpy as np

from gdkm.graphs.adjacency import EdgeList, EmptyGraph, GraphError


def edge_homophily(e: EdgeList, labels: np.ndarray) -> float:
    """Fraction of undirected edges whose endpoints share a label."""
    labels = np.asarray(labels)
    if labels.shape[0] != e.num_nodes:
        raise GraphError(f"expected {e.num_nodes} labels, got {labels.shape[0]}")
    if e.num_edges == 0:
        raise EmptyGraph("edge homophily is undefined on a graph without edges")
    same = labels[e.edges[:, 0]] == labels[e.edges[:, 1]]
    return float(np.mean(same))

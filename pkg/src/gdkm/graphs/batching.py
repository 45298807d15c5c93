from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from gdkm.graphs.adjacency import EdgeList, GraphError, NormalizedAdjacency, normalize_kipf


@dataclass(frozen=True)
class GraphBatch:
    adjacency: NormalizedAdjacency
    graph_offsets: np.ndarray
    graph_labels: np.ndarray
    features: np.ndarray | None = None

    @property
    def num_graphs(self) -> int:
        return int(self.graph_offsets.shape[0] - 1)

    @property
    def num_nodes(self) -> int:
        return int(self.graph_offsets[-1])

    def node_graph_ids(self) -> np.ndarray:
        return np.repeat(np.arange(self.num_graphs), np.diff(self.graph_offsets))

    def pool_matrix(self, graphs: np.ndarray | None = None) -> sp.csr_matrix:
        """Mean-pool matrix (num_graphs x num_nodes); optionally restricted to some graphs."""
        return mean_pool_matrix(self.graph_offsets, graphs)


def mean_pool_matrix(graph_offsets: np.ndarray, graphs: np.ndarray | None = None) -> sp.csr_matrix:
    offsets = np.asarray(graph_offsets, dtype=np.int64)
    total = int(offsets[-1])
    selected = np.arange(offsets.shape[0] - 1) if graphs is None else np.asarray(graphs, dtype=np.int64)
    rows: List[np.ndarray] = []
    cols: List[np.ndarray] = []
    vals: List[np.ndarray] = []
    for r, g in enumerate(selected):
        start, stop = int(offsets[g]), int(offsets[g + 1])
        size = stop - start
        if size <= 0:
            raise GraphError(f"graph {g} has no nodes")
        rows.append(np.full(size, r))
        cols.append(np.arange(start, stop))
        vals.append(np.full(size, 1.0 / size))
    if not rows:
        return sp.csr_matrix((0, total), dtype=np.float64)
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(len(selected), total),
    )


def batch_graphs(graphs: Sequence[Tuple[EdgeList, np.ndarray, int]]) -> GraphBatch:
    """Stack graphs into one block-diagonal kipf-normalized adjacency."""
    if not graphs:
        raise GraphError("batch_graphs needs at least one graph")
    blocks = []
    feats = []
    labels = []
    offsets = [0]
    width = None
    for edges, features, label in graphs:
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] != edges.num_nodes:
            raise GraphError("each graph needs one feature row per node")
        if width is None:
            width = features.shape[1]
        elif features.shape[1] != width:
            raise GraphError(f"inconsistent feature dimension: {features.shape[1]} != {width}")
        blocks.append(normalize_kipf(edges).matrix)
        feats.append(features)
        labels.append(int(label))
        offsets.append(offsets[-1] + edges.num_nodes)
    matrix = sp.block_diag(blocks, format="csr")
    return GraphBatch(
        adjacency=NormalizedAdjacency(matrix=matrix, lam=0.0, scheme="kipf"),
        graph_offsets=np.asarray(offsets, dtype=np.int64),
        graph_labels=np.asarray(labels, dtype=np.int64),
        features=np.vstack(feats),
    )

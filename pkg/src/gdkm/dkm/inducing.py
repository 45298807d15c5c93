from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
import scipy.sparse as sp

from gdkm.errors import DimensionMismatch
from gdkm.graphs.adjacency import NormalizedAdjacency
from gdkm.numerics.random import stream

SchemeKind = Literal["inter", "intra"]
SCHEME_KINDS = ("inter", "intra")


@dataclass(frozen=True)
class InducingScheme:
    """Block adjacency for inducing (i) and test/train (t) nodes.

    Inter-domain inducing points are disconnected (A_ii = I, A_ti = 0).
    Intra-domain ones are graph nodes S: A_ii = Â[S, S], A_ti = Â[t, S].
    Inducing nodes aggregate only over inducing neighbours (A_it = 0), so the
    prior covariance of G_ii is A_ii K(G_ii) A_iiᵀ exactly.
    """

    kind: SchemeKind
    num_inducing: int
    a_ii: sp.csr_matrix
    a_ti: Optional[sp.csr_matrix]
    a_tt: sp.csr_matrix
    indices: Optional[np.ndarray] = None
    test_nodes: Optional[np.ndarray] = None

    @property
    def num_test(self) -> int:
        return int(self.a_tt.shape[0])

    def descriptor(self) -> dict:
        return {
            "kind": self.kind,
            "num_inducing": self.num_inducing,
            "indices": None if self.indices is None else [int(i) for i in self.indices],
        }


def _test_nodes(adjacency: NormalizedAdjacency, test_nodes) -> np.ndarray:
    if test_nodes is None:
        return np.arange(adjacency.num_nodes)
    return np.asarray(test_nodes, dtype=np.int64)


def inter_domain(adjacency: NormalizedAdjacency, num_inducing: int, test_nodes=None) -> InducingScheme:
    if num_inducing < 1:
        raise DimensionMismatch("num_inducing must be >= 1")
    nodes = _test_nodes(adjacency, test_nodes)
    return InducingScheme(
        kind="inter",
        num_inducing=int(num_inducing),
        a_ii=sp.identity(num_inducing, dtype=np.float64, format="csr"),
        a_ti=None,
        a_tt=adjacency.submatrix(nodes, nodes),
        test_nodes=None if test_nodes is None else nodes,
    )


def intra_domain(adjacency: NormalizedAdjacency, indices, test_nodes=None) -> InducingScheme:
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size == 0:
        raise DimensionMismatch("intra-domain scheme needs at least one inducing node")
    if idx.min() < 0 or idx.max() >= adjacency.num_nodes:
        raise DimensionMismatch("inducing node index out of range")
    nodes = _test_nodes(adjacency, test_nodes)
    return InducingScheme(
        kind="intra",
        num_inducing=int(idx.size),
        a_ii=adjacency.submatrix(idx, idx),
        a_ti=adjacency.submatrix(nodes, idx),
        a_tt=adjacency.submatrix(nodes, nodes),
        indices=idx,
        test_nodes=None if test_nodes is None else nodes,
    )


def sample_inducing_nodes(candidates: np.ndarray, num_inducing: int, seed: int) -> np.ndarray:
    """Sorted random subset of ``candidates`` (all of them when there are too few)."""
    candidates = np.asarray(candidates, dtype=np.int64)
    rng = stream(seed, "inducing")
    if num_inducing >= candidates.size:
        return np.sort(candidates)
    return np.sort(rng.choice(candidates, size=num_inducing, replace=False))


def build_scheme(
    kind: str,
    adjacency: NormalizedAdjacency,
    num_inducing: int,
    candidates: np.ndarray,
    seed: int,
) -> InducingScheme:
    if kind == "inter":
        return inter_domain(adjacency, num_inducing)
    if kind == "intra":
        return intra_domain(adjacency, sample_inducing_nodes(candidates, num_inducing, seed))
    raise ValueError(f"unknown inducing scheme: {kind!r}")


def scheme_task_error(kind: str, task: str) -> Optional[str]:
    """The reason ``kind`` cannot serve ``task``, or None.

    Intra-domain inducing nodes belong to one graph, which has no meaning
    when every example is a separate graph.
    """
    if kind == "intra" and task == "graph":
        return "model.scheme intra is not applicable to graph classification; use inter"
    return None

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Literal, Tuple

import numpy as np
import scipy.sparse as sp

from gdkm.errors import DataError, NumericError

# Above this many nodes spectral checks are skipped (dense eigvalsh cost).
DENSE_CHECK_LIMIT = 2000


class GraphError(DataError):
    pass


class EmptyGraph(GraphError):
    pass


class SingularAdjacency(NumericError):
    pass


@dataclass(frozen=True)
class EdgeList:
    """Undirected edges stored once as (u, v) with u < v, no self-loops."""

    edges: np.ndarray
    num_nodes: int
    directed: bool = False

    @classmethod
    def from_pairs(cls, pairs: Iterable[Tuple[int, int]] | np.ndarray, num_nodes: int, directed: bool = False) -> "EdgeList":
        if num_nodes < 1:
            raise GraphError("num_nodes must be >= 1")
        arr = np.asarray(list(pairs) if not isinstance(pairs, np.ndarray) else pairs, dtype=np.int64)
        if arr.size == 0:
            return cls(edges=np.zeros((0, 2), dtype=np.int64), num_nodes=int(num_nodes), directed=directed)
        arr = arr.reshape(-1, 2)
        bad = np.flatnonzero((arr < 0).any(axis=1) | (arr >= num_nodes).any(axis=1))
        if bad.size:
            u, v = arr[bad[0]]
            raise GraphError(f"edge ({u}, {v}) is out of range for {num_nodes} nodes")
        arr = arr[arr[:, 0] != arr[:, 1]]
        canon = np.sort(arr, axis=1)
        canon = np.unique(canon, axis=0)
        return cls(edges=canon, num_nodes=int(num_nodes), directed=directed)

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    def adjacency(self) -> sp.csr_matrix:
        """Symmetric 0/1 adjacency without self-loops."""
        n = self.num_nodes
        if self.num_edges == 0:
            return sp.csr_matrix((n, n), dtype=np.float64)
        rows = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        cols = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        data = np.ones(rows.shape[0], dtype=np.float64)
        return sp.csr_matrix((data, (rows, cols)), shape=(n, n))


@dataclass(frozen=True)
class NormalizedAdjacency:
    matrix: sp.csr_matrix
    lam: float = 0.0
    scheme: Literal["kipf", "lambda_interp", "identity"] = "kipf"

    @property
    def num_nodes(self) -> int:
        return int(self.matrix.shape[0])

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def submatrix(self, rows: np.ndarray, cols: np.ndarray) -> sp.csr_matrix:
        return self.matrix[rows][:, cols].tocsr()

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.to_dense())

    def min_abs_eigenvalue(self) -> float:
        return float(np.min(np.abs(self.eigenvalues())))

    def is_identity(self) -> bool:
        if self.scheme == "identity":
            return True
        diff = self.matrix - sp.identity(self.num_nodes, format="csr")
        return diff.count_nonzero() == 0


def identity_adjacency(n: int) -> NormalizedAdjacency:
    return NormalizedAdjacency(matrix=sp.identity(n, dtype=np.float64, format="csr"), lam=1.0, scheme="identity")


def normalize_kipf(e: EdgeList) -> NormalizedAdjacency:
    """D̃^{-1/2}(A+I)D̃^{-1/2} with D̃ the degree matrix of A+I."""
    a_tilde = e.adjacency() + sp.identity(e.num_nodes, dtype=np.float64, format="csr")
    degree = np.asarray(a_tilde.sum(axis=1)).ravel()
    d_inv_sqrt = sp.diags(1.0 / np.sqrt(degree))
    matrix = (d_inv_sqrt @ a_tilde @ d_inv_sqrt).tocsr()
    # exact symmetry; the product is symmetric up to round-off
    matrix = ((matrix + matrix.T) * 0.5).tocsr()
    matrix.sort_indices()
    return NormalizedAdjacency(matrix=matrix, lam=0.0, scheme="kipf")


def interpolate_lambda(a: NormalizedAdjacency, lam: float) -> NormalizedAdjacency:
    """Â_λ = λI + (1−λ)Â."""
    if not 0.0 <= lam <= 1.0:
        raise GraphError(f"lambda must lie in [0, 1], got {lam}")
    if a.scheme != "kipf":
        raise GraphError("interpolate_lambda expects a kipf-normalized adjacency")
    eye = sp.identity(a.num_nodes, dtype=np.float64, format="csr")
    matrix = (lam * eye + (1.0 - lam) * a.matrix).tocsr()
    matrix.eliminate_zeros()
    out = NormalizedAdjacency(matrix=matrix, lam=float(lam), scheme="lambda_interp")
    if lam > 0.0 and out.num_nodes <= DENSE_CHECK_LIMIT and out.min_abs_eigenvalue() <= 1e-12:
        raise SingularAdjacency(f"interpolated adjacency is singular at lambda={lam}")
    return out


def build_adjacency(e: EdgeList, scheme: str = "kipf", lam: float = 0.0) -> NormalizedAdjacency:
    a = normalize_kipf(e)
    if scheme == "kipf":
        return a
    if scheme == "lambda_interp":
        return interpolate_lambda(a, lam)
    raise GraphError(f"unknown adjacency scheme: {scheme!r}")

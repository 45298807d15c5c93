from __future__ import annotations

import math

import numpy as np
import pytest

from gdkm.graphs.adjacency import (
    EdgeList,
    EmptyGraph,
    GraphError,
    build_adjacency,
    identity_adjacency,
    interpolate_lambda,
    normalize_kipf,
)
from gdkm.graphs.batching import batch_graphs, mean_pool_matrix
from gdkm.graphs.generators import erdos_renyi, planted_partition
from gdkm.graphs.homophily import edge_homophily


def _path(n: int = 3) -> EdgeList:
    return EdgeList.from_pairs([(i, i + 1) for i in range(n - 1)], n)


def test_edge_list_canonicalizes_pairs() -> None:
    e = EdgeList.from_pairs([(1, 0), (0, 1), (2, 2), (2, 1)], 3)
    assert e.num_edges == 2
    assert e.edges.tolist() == [[0, 1], [1, 2]]


def test_edge_list_rejects_out_of_range() -> None:
    with pytest.raises(GraphError) as e:
        EdgeList.from_pairs([(0, 3)], 3)
    assert "out of range" in str(e.value)


def test_kipf_normalization_of_path() -> None:
    a = normalize_kipf(_path()).to_dense()
    # degrees with self-loops are 2, 3, 2
    assert a[0, 0] == pytest.approx(0.5)
    assert a[1, 1] == pytest.approx(1.0 / 3.0)
    assert a[0, 1] == pytest.approx(1.0 / math.sqrt(6.0))
    assert a[0, 2] == 0.0
    assert np.array_equal(a, a.T)


def test_kipf_single_edge_is_idempotent_average() -> None:
    a = normalize_kipf(EdgeList.from_pairs([(0, 1)], 2)).to_dense()
    assert np.allclose(a, [[0.5, 0.5], [0.5, 0.5]])


def test_kipf_without_edges_is_identity() -> None:
    a = normalize_kipf(EdgeList.from_pairs([], 4))
    assert a.is_identity()


def test_interpolate_lambda_endpoints() -> None:
    base = normalize_kipf(_path(5))
    assert np.allclose(interpolate_lambda(base, 0.0).to_dense(), base.to_dense())
    one = interpolate_lambda(base, 1.0)
    assert one.is_identity()
    half = build_adjacency(_path(5), "lambda_interp", 0.5)
    assert half.lam == 0.5
    assert np.allclose(half.to_dense(), 0.5 * np.eye(5) + 0.5 * base.to_dense())


def test_interpolate_lambda_rejects_bad_inputs() -> None:
    base = normalize_kipf(_path())
    with pytest.raises(GraphError):
        interpolate_lambda(base, 1.5)
    with pytest.raises(GraphError):
        interpolate_lambda(identity_adjacency(3), 0.5)
    with pytest.raises(GraphError):
        build_adjacency(_path(), "rw")


def test_edge_homophily() -> None:
    assert edge_homophily(_path(), np.array([0, 0, 1])) == pytest.approx(0.5)
    with pytest.raises(EmptyGraph):
        edge_homophily(EdgeList.from_pairs([], 2), np.array([0, 1]))
    with pytest.raises(GraphError):
        edge_homophily(_path(), np.array([0, 1]))


def test_erdos_renyi_is_seeded_and_near_expected_count() -> None:
    a = erdos_renyi(50, 0.1, seed=0)
    b = erdos_renyi(50, 0.1, seed=0)
    assert np.array_equal(a.edges, b.edges)
    mean = math.comb(50, 2) * 0.1
    sigma = math.sqrt(math.comb(50, 2) * 0.1 * 0.9)
    assert abs(a.num_edges - mean) <= 3 * sigma
    assert erdos_renyi(6, 0.0, 1).num_edges == 0
    assert erdos_renyi(6, 1.0, 1).num_edges == 15


def test_planted_partition_balanced_and_assortative() -> None:
    edges, communities = planted_partition(40, 2, 0.5, 0.0, seed=3)
    assert np.bincount(communities).tolist() == [20, 20]
    assert edge_homophily(edges, communities) == 1.0


def test_mean_pool_matrix_rows_average_each_graph() -> None:
    pool = mean_pool_matrix(np.array([0, 2, 5])).toarray()
    assert pool.shape == (2, 5)
    assert np.allclose(pool.sum(axis=1), 1.0)
    assert np.allclose(pool[1], [0, 0, 1 / 3, 1 / 3, 1 / 3])
    assert mean_pool_matrix(np.array([0, 2, 5]), np.array([1])).shape == (1, 5)


def test_batch_graphs_block_diagonal() -> None:
    g1 = (EdgeList.from_pairs([(0, 1)], 2), np.ones((2, 3)), 0)
    g2 = (_path(3), np.zeros((3, 3)), 1)
    batch = batch_graphs([g1, g2])
    assert batch.num_graphs == 2
    assert batch.num_nodes == 5
    assert batch.node_graph_ids().tolist() == [0, 0, 1, 1, 1]
    dense = batch.adjacency.to_dense()
    assert np.all(dense[:2, 2:] == 0.0)
    with pytest.raises(GraphError):
        batch_graphs([g1, (_path(3), np.zeros((3, 4)), 1)])

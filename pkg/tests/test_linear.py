from __future__ import annotations

import numpy as np
import pytest

from gdkm.autodiff.tape import value_and_grad, value_of
from gdkm.dkm.linear import closed_form_stack, linear_closed_form, linear_demo_data, linear_demo_subset, wishart_gram
from gdkm.dkm.objective import GaussianLikelihood, TargetKernelLikelihood, full_rank_objective, kl_gaussian
from gdkm.graphs.adjacency import EdgeList, SingularAdjacency, build_adjacency, identity_adjacency
from gdkm.nngp.recursion import NngpConfig, nngp_forward
from gdkm.train.optim import global_norm


def _demo(num_nodes: int = 12, lam: float = 0.5, edge_prob: float = 0.3):
    data = linear_demo_data(num_nodes=num_nodes, edge_prob=edge_prob, seed=0)
    return data, build_adjacency(data.edges, "lambda_interp", lam)


def _objective(data, a, nu):
    likelihood = TargetKernelLikelihood(data.target)

    def fn(p):
        grams = [p[f"g{ell}"] for ell in range(1, len(nu) + 1)]
        return full_rank_objective(grams, data.g0, a, nu, likelihood, base_kernel="linear")

    return fn


@pytest.mark.parametrize("depth", [1, 2, 3])
def test_closed_form_is_stationary(depth: int) -> None:
    data, a = _demo()
    nu = [1.0] * depth
    fn = _objective(data, a, nu)
    optimum = {f"g{ell}": g for ell, g in enumerate(closed_form_stack(data.g0, data.target, a, depth), start=1)}
    value, grads = value_and_grad(fn, optimum)

    nngp = nngp_forward(data.g0, NngpConfig(depth=depth, base_kernel="linear", adjacency=a))
    start, start_grads = value_and_grad(fn, {f"g{ell}": g for ell, g in enumerate(nngp, start=1)})
    assert global_norm(start_grads) > 1e-3
    assert global_norm(grads) < 1e-5 * global_norm(start_grads)
    assert value >= start - 1e-8 * abs(start)


@pytest.mark.parametrize("num_nodes", [50, 100])
def test_closed_form_gradient_vanishes_on_larger_graphs(num_nodes: int) -> None:
    data, a = _demo(num_nodes, edge_prob=0.1)
    fn = _objective(data, a, [1.0, 1.0])
    optimum = {f"g{ell}": g for ell, g in enumerate(closed_form_stack(data.g0, data.target, a, 2), start=1)}
    _, grads = value_and_grad(fn, optimum)
    assert max(float(np.max(np.abs(g))) for g in grads.values()) < 1e-6


def test_closed_form_endpoints() -> None:
    data, a = _demo()
    assert np.allclose(linear_closed_form(data.g0, data.target, a, 2, 0), data.g0, atol=1e-8)
    assert np.allclose(linear_closed_form(data.g0, data.target, a, 2, 3), data.target, atol=1e-8)
    with pytest.raises(ValueError):
        linear_closed_form(data.g0, data.target, a, 2, 4)


def test_closed_form_layers_are_spd() -> None:
    data, a = _demo()
    for g in closed_form_stack(data.g0, data.target, a, 2):
        assert np.array_equal(g, g.T)
        assert np.min(np.linalg.eigvalsh(g)) > 0


def test_closed_form_identity_adjacency_is_geometric_interpolation() -> None:
    g0 = np.diag([1.0, 4.0])
    target = np.diag([16.0, 1.0])
    g1 = linear_closed_form(g0, target, identity_adjacency(2), 1, 1)
    assert np.allclose(g1, np.diag([4.0, 2.0]))


def test_closed_form_needs_invertible_adjacency() -> None:
    a = build_adjacency(EdgeList.from_pairs([(0, 1)], 2))
    with pytest.raises(SingularAdjacency):
        linear_closed_form(np.eye(2), np.eye(2), a, 1, 1)


def test_full_rank_objective_on_three_node_toy() -> None:
    a = build_adjacency(EdgeList.from_pairs([(0, 1), (1, 2)], 3), "lambda_interp", 0.5)
    g0 = np.eye(3) + 0.1
    g1 = 1.5 * np.eye(3)
    target = np.diag([1.0, 2.0, 3.0])
    d = a.to_dense()
    expected = -float(kl_gaussian(target, d @ g1 @ d.T)) - 2.0 * float(kl_gaussian(g1, d @ g0 @ d.T))
    value = float(value_of(full_rank_objective([g1], g0, a, [2.0], TargetKernelLikelihood(target), "linear")))
    assert value == pytest.approx(expected)


def test_full_rank_objective_infinite_nu_uses_prior() -> None:
    data, a = _demo(8)
    likelihood = GaussianLikelihood(data.y)
    nngp = nngp_forward(data.g0, NngpConfig(depth=1, base_kernel="linear", adjacency=a))
    frozen = float(value_of(full_rank_objective([np.eye(8)], data.g0, a, [float("inf")], likelihood)))
    at_prior = float(value_of(full_rank_objective(nngp, data.g0, a, [1.0], likelihood)))
    assert frozen == pytest.approx(at_prior)
    with pytest.raises(ValueError):
        full_rank_objective([np.eye(8)], data.g0, a, [1.0, 1.0], likelihood)


def test_demo_data_is_seeded_and_balanced() -> None:
    a = linear_demo_data(num_nodes=20, seed=3)
    b = linear_demo_data(num_nodes=20, seed=3)
    assert np.array_equal(a.g0, b.g0)
    assert np.bincount(a.labels).tolist() == [10, 10]
    assert np.allclose(a.target, a.y @ a.y.T + 0.1 * np.eye(20))


def test_demo_subset_of_dataset() -> None:
    rng = np.random.default_rng(0)
    features = rng.standard_normal((30, 40))
    labels = np.arange(30) % 3
    edges = EdgeList.from_pairs([(i, i + 1) for i in range(29)], 30)
    data = linear_demo_subset(features, labels, edges, num_nodes=10, seed=1)
    assert data.g0.shape == (10, 10)
    assert data.edges.num_nodes == 10
    assert data.y.shape[0] == 10
    assert np.allclose(np.diag(data.target), 1.1)
    with pytest.raises(ValueError):
        linear_demo_subset(features, labels, edges, num_nodes=31)


def test_wishart_gram_is_psd_and_seeded() -> None:
    g = np.eye(4) + 0.5
    w = wishart_gram(g, 50, seed=2)
    assert np.array_equal(w, wishart_gram(g, 50, seed=2))
    assert np.min(np.linalg.eigvalsh(w)) > 0
    with pytest.raises(ValueError):
        wishart_gram(g, 0, seed=2)

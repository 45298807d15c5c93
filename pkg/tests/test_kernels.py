from __future__ import annotations

import numpy as np
import pytest

from gdkm.autodiff.tape import value_of
from gdkm.errors import DimensionMismatch
from gdkm.graphs.adjacency import EdgeList, normalize_kipf
from gdkm.kernels.alignment import DegenerateKernel, cka, label_kernel, normalize_kernel
from gdkm.kernels.blocks import BlockGram, add_blocks, input_blocks, split_dense
from gdkm.kernels.centering import CenteringParams, center_block, center_features, center_kernel
from gdkm.kernels.convolution import graph_conv, graph_conv_block, identity_like
from gdkm.kernels.nonlinearity import apply_kernel, arccos_kernel, arccos_kernel_cross


def _psd(n: int, seed: int = 0, width: int = 4) -> np.ndarray:
    x = np.random.default_rng(seed).standard_normal((n, width))
    return x @ x.T / width


def test_arccos_identity_values() -> None:
    k = value_of(arccos_kernel(np.eye(2)))
    assert np.allclose(np.diag(k), 1.0)
    assert k[0, 1] == pytest.approx(1.0 / np.pi)


def test_arccos_keeps_diagonal_and_correlated_pairs() -> None:
    assert np.allclose(value_of(arccos_kernel(np.ones((2, 2)))), np.ones((2, 2)))
    assert np.allclose(np.diag(value_of(arccos_kernel(3.0 * np.eye(3)))), 3.0)


def test_arccos_preserves_psd() -> None:
    k = value_of(arccos_kernel(_psd(8, seed=4)))
    assert np.min(np.linalg.eigvalsh(k)) >= -1e-10
    assert np.allclose(k, k.T)


def test_arccos_blockwise_matches_assembled() -> None:
    g = _psd(6, seed=1, width=8)
    blocks = arccos_kernel_cross(split_dense(g, 2))
    dense = value_of(arccos_kernel(g))
    assert np.allclose(value_of(blocks.ii), dense[:2, :2], atol=1e-12)
    assert np.allclose(value_of(blocks.ti), dense[2:, :2], atol=1e-12)
    assert np.allclose(value_of(blocks.tt), dense[2:, 2:], atol=1e-12)


def test_arccos_blockwise_diagonal_only_tt() -> None:
    g = _psd(5, seed=2, width=6)
    full = split_dense(g, 2)
    diag_only = full.with_tt(np.diag(value_of(full.tt)).copy(), tt_full=False)
    out = arccos_kernel_cross(diag_only)
    assert out.tt_full is False
    assert np.allclose(value_of(out.tt), np.diag(g)[2:])


def test_arccos_zero_cross_block() -> None:
    g = BlockGram(ii=np.array([[4.0]]), ti=np.zeros((2, 1)), tt=np.diag([1.0, 9.0]))
    out = arccos_kernel_cross(g)
    assert np.allclose(value_of(out.ti).ravel(), [2.0 / np.pi, 6.0 / np.pi])


def test_apply_kernel_linear_is_identity() -> None:
    g = split_dense(_psd(4), 1)
    assert apply_kernel(g, "linear") is g
    with pytest.raises(ValueError):
        apply_kernel(g, "rbf")


def test_graph_conv_examples() -> None:
    a = normalize_kipf(EdgeList.from_pairs([(0, 1)], 2))
    assert np.allclose(value_of(graph_conv(np.eye(2), a)), [[0.5, 0.5], [0.5, 0.5]])
    k = _psd(3)
    assert np.allclose(value_of(graph_conv(k, identity_like(3))), k)
    with pytest.raises(DimensionMismatch):
        graph_conv(np.eye(3), a)


def test_graph_conv_block_matches_dense_oracle() -> None:
    rng = np.random.default_rng(5)
    a = rng.standard_normal((6, 6))
    a = 0.5 * (a + a.T)
    k = _psd(6, seed=6, width=8)
    out = graph_conv_block(split_dense(k, 2), a[:2, :2], a[2:, :2], a[2:, 2:], a_it=a[:2, 2:])
    dense = a @ k @ a.T
    assert np.allclose(value_of(out.ii), dense[:2, :2], atol=1e-12)
    assert np.allclose(value_of(out.ti), dense[2:, :2], atol=1e-12)
    assert np.allclose(value_of(out.tt), dense[2:, 2:], atol=1e-12)


def test_graph_conv_block_inter_domain() -> None:
    a_tt = normalize_kipf(EdgeList.from_pairs([(0, 1), (1, 2)], 3)).matrix
    k = split_dense(_psd(5, seed=7), 2)
    out = graph_conv_block(k, identity_like(2), None, a_tt)
    d = a_tt.toarray()
    assert np.allclose(value_of(out.ii), value_of(k.ii))
    assert np.allclose(value_of(out.ti), d @ value_of(k.ti))
    assert np.allclose(value_of(out.tt), d @ value_of(k.tt) @ d.T)


def test_graph_conv_block_shape_errors() -> None:
    k = split_dense(_psd(5), 2)
    with pytest.raises(DimensionMismatch):
        graph_conv_block(k, identity_like(3), None, identity_like(3))
    diag_only = k.with_tt(np.ones(3), tt_full=False)
    with pytest.raises(DimensionMismatch):
        graph_conv_block(diag_only, identity_like(2), None, identity_like(3), a_it=np.ones((2, 3)))


def test_input_blocks_and_add_blocks() -> None:
    x = np.arange(12, dtype=float).reshape(4, 3)
    g = input_blocks(x[:1], x)
    assert np.allclose(value_of(g.ii), x[:1] @ x[:1].T / 3)
    assert np.allclose(g.assemble()[1:, 1:], (x @ x.T / 3))
    diag = input_blocks(x[:1], x, full_tt=False)
    assert np.allclose(value_of(diag.tt), np.sum(x * x, axis=1) / 3)
    mixed = add_blocks(g, diag)
    assert mixed.tt_full is False
    assert np.allclose(value_of(mixed.tt), np.sum(x * x, axis=1) / 3)


def test_cka_bounds_and_self_alignment() -> None:
    k1, k2 = _psd(10, seed=1), _psd(10, seed=2)
    assert cka(k1, k1) == pytest.approx(1.0)
    assert 0.0 <= cka(k1, k2) <= 1.0
    assert cka(k1, 3.0 * k1 + 2.0) == pytest.approx(1.0)


def test_cka_degenerate_kernel() -> None:
    with pytest.raises(DegenerateKernel):
        cka(np.ones((4, 4)), _psd(4))


def test_label_kernel_and_normalize() -> None:
    y = label_kernel(np.array([0, 1, 0]))
    assert y.tolist() == [[1, 0, 1], [0, 1, 0], [1, 0, 1]]
    k = normalize_kernel(np.diag([4.0, 9.0]) + 1.0)
    assert np.allclose(np.diag(k), 1.0)


def test_centering_kernel_zero_means() -> None:
    params = CenteringParams(enabled=True)
    out = value_of(center_kernel(_psd(5), params))
    assert np.allclose(out.mean(axis=0), 0.0)
    assert np.allclose(out.mean(axis=1), 0.0)
    shifted = value_of(center_kernel(_psd(5), params, gamma=2.0, beta=1.0))
    assert np.allclose(shifted, 4.0 * out + 1.0)


def test_centering_matches_feature_centering_for_linear_kernel() -> None:
    f = np.random.default_rng(3).standard_normal((6, 4))
    params = CenteringParams(enabled=True, gamma=1.5)
    centered = center_features(f, params)
    assert np.allclose(value_of(center_kernel(f @ f.T, params)), centered @ centered.T)


def test_centering_disabled_is_noop() -> None:
    k = split_dense(_psd(4), 2)
    assert center_block(k, CenteringParams()) is k
    with pytest.raises(ValueError):
        CenteringParams(gamma=float("inf"))

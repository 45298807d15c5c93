from __future__ import annotations

from typing import Optional

import numpy as np
import scipy.sparse as sp

from gdkm.autodiff import ops
from gdkm.autodiff.tape import Var
from gdkm.errors import DimensionMismatch
from gdkm.graphs.adjacency import NormalizedAdjacency
from gdkm.kernels.blocks import BlockGram


def _matrix(a):
    return a.matrix if isinstance(a, NormalizedAdjacency) else a


def _sandwich(left, m, right) -> Var:
    """left · m · rightᵀ for constant left/right."""
    inner = ops.spmatmul(right, ops.transpose(m))
    return ops.spmatmul(left, ops.transpose(inner))


def graph_conv(k, a) -> Var:
    """Â k Âᵀ."""
    a = _matrix(a)
    shape = np.shape(k)
    if len(shape) != 2 or a.shape[1] != shape[0] or shape[0] != shape[1]:
        raise DimensionMismatch(f"adjacency {a.shape} does not match kernel {shape}")
    return _sandwich(a, k, a)


def graph_conv_block(
    k: BlockGram,
    a_ii,
    a_ti: Optional[object],
    a_tt,
    a_it: Optional[object] = None,
) -> BlockGram:
    """Blockwise A K Aᵀ with A = [[A_ii, A_it], [A_ti, A_tt]].

    ``a_ti``/``a_it`` may be None for zero blocks; then no cross products are
    formed. With a diagonal-only (or missing) tt block, ``a_it`` must be zero
    and the convolved tt block is not produced.
    """
    a_ii, a_tt = _matrix(a_ii), _matrix(a_tt)
    a_ti = None if a_ti is None else _matrix(a_ti)
    a_it = None if a_it is None else _matrix(a_it)
    p_i, p_t = k.num_inducing, k.num_test

    def _check(name, a, rows, cols):
        if a is not None and tuple(a.shape) != (rows, cols):
            raise DimensionMismatch(f"{name} has shape {tuple(a.shape)}, expected {(rows, cols)}")

    _check("A_ii", a_ii, p_i, p_i)
    _check("A_ti", a_ti, p_t, p_i)
    _check("A_tt", a_tt, p_t, p_t)
    _check("A_it", a_it, p_i, p_t)
    if np.shape(k.ti) != (p_t, p_i):
        raise DimensionMismatch(f"K_ti has shape {np.shape(k.ti)}, expected {(p_t, p_i)}")

    full = k.tt is not None and k.tt_full
    if a_it is not None and not full:
        raise DimensionMismatch("a nonzero A_it needs the full test-test block")

    k_ii = _sandwich(a_ii, k.ii, a_ii)
    k_ti = _sandwich(a_tt, k.ti, a_ii)
    if a_ti is not None:
        k_ti = ops.add(k_ti, _sandwich(a_ti, k.ii, a_ii))
    if a_it is not None:
        y = _sandwich(a_it, k.ti, a_ii)
        k_ii = ops.add(ops.add(k_ii, y), ops.transpose(y))
        k_ii = ops.add(k_ii, _sandwich(a_it, k.tt, a_it))
        k_ti = ops.add(k_ti, _sandwich(a_tt, k.tt, a_it))
        if a_ti is not None:
            k_ti = ops.add(k_ti, _sandwich(a_ti, ops.transpose(k.ti), a_it))

    k_tt = None
    if full:
        k_tt = _sandwich(a_tt, k.tt, a_tt)
        if a_ti is not None:
            x = _sandwich(a_tt, k.ti, a_ti)
            k_tt = ops.add(ops.add(k_tt, x), ops.transpose(x))
            k_tt = ops.add(k_tt, _sandwich(a_ti, k.ii, a_ti))
    return BlockGram(ii=k_ii, ti=k_ti, tt=k_tt, tt_full=True)


def identity_like(n: int) -> sp.csr_matrix:
    return sp.identity(n, dtype=np.float64, format="csr")

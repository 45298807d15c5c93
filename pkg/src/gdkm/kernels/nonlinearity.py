from __future__ import annotations

from typing import Literal

from gdkm.autodiff import ops
from gdkm.autodiff.tape import Var
from gdkm.kernels.blocks import BlockGram

BaseKernel = Literal["arccos", "linear"]
BASE_KERNELS = ("arccos", "linear")


def arccos_kernel(g) -> Var:
    """Arccosine (infinite-width ReLU) kernel of a full Gram matrix."""
    return ops.arccos_full(g)


def linear_kernel(g) -> Var:
    return ops.lift(g)


def arccos_kernel_cross(g: BlockGram) -> BlockGram:
    """Arccosine kernel applied to every block using the matching diagonals."""
    d_i = ops.diag_part(g.ii)
    k_ii = ops.arccos_cross(g.ii, d_i, d_i)
    if g.tt is None:
        raise ValueError("arccos kernel needs at least the diagonal of the test-test block")
    d_t = g.tt_diag()
    k_ti = ops.arccos_cross(g.ti, d_t, d_i)
    if g.tt_full:
        k_tt = ops.arccos_cross(g.tt, d_t, d_t)
    else:
        # θ = 0 on the diagonal, so K_tt,jj = G_tt,jj
        k_tt = d_t
    return BlockGram(ii=k_ii, ti=k_ti, tt=k_tt, tt_full=g.tt_full)


def apply_kernel(g: BlockGram, base_kernel: BaseKernel) -> BlockGram:
    if base_kernel == "arccos":
        return arccos_kernel_cross(g)
    if base_kernel == "linear":
        return g
    raise ValueError(f"unknown base kernel: {base_kernel!r}")


def apply_kernel_dense(g, base_kernel: BaseKernel) -> Var:
    if base_kernel == "arccos":
        return arccos_kernel(g)
    if base_kernel == "linear":
        return linear_kernel(g)
    raise ValueError(f"unknown base kernel: {base_kernel!r}")

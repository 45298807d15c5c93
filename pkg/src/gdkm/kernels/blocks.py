from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from gdkm.autodiff import ops
from gdkm.autodiff.tape import Var, value_of


@dataclass(frozen=True)
class BlockGram:
    """Gram matrix partitioned into inducing (i) and test/train (t) blocks.

    ``tt`` holds the full P_t x P_t block when ``tt_full`` is set, its
    diagonal otherwise, or None when the block was not computed. Blocks may
    be plain arrays or Vars.
    """

    ii: Var | np.ndarray
    ti: Var | np.ndarray
    tt: Optional[Var | np.ndarray] = None
    tt_full: bool = True

    @property
    def num_inducing(self) -> int:
        return int(np.shape(self.ii)[0])

    @property
    def num_test(self) -> int:
        return int(np.shape(self.ti)[0])

    def tt_diag(self) -> Var:
        if self.tt is None:
            raise ValueError("test-test block is not available")
        return ops.diag_part(self.tt) if self.tt_full else ops.lift(self.tt)

    def values(self) -> "BlockGram":
        """Copy with every block converted to a plain ndarray."""
        return BlockGram(
            ii=value_of(self.ii),
            ti=value_of(self.ti),
            tt=None if self.tt is None else value_of(self.tt),
            tt_full=self.tt_full,
        )

    def assemble(self) -> np.ndarray:
        """Dense [[G_ii, G_it], [G_ti, G_tt]]; needs the full tt block."""
        if self.tt is None or not self.tt_full:
            raise ValueError("assemble needs the full test-test block")
        ii, ti, tt = value_of(self.ii), value_of(self.ti), value_of(self.tt)
        return np.block([[ii, ti.T], [ti, tt]])

    def with_tt(self, tt, tt_full: bool) -> "BlockGram":
        return replace(self, tt=tt, tt_full=tt_full)


def split_dense(g: np.ndarray, num_inducing: int) -> BlockGram:
    """Partition an assembled matrix whose first rows are the inducing points."""
    g = np.asarray(g, dtype=np.float64)
    p = num_inducing
    return BlockGram(ii=g[:p, :p], ti=g[p:, :p], tt=g[p:, p:], tt_full=True)


def input_blocks(
    x_inducing: np.ndarray,
    x_test: np.ndarray,
    full_tt: bool = True,
    scale: Optional[float] = None,
) -> BlockGram:
    """G⁰ blocks scale·X Xᵀ (scale = 1/ν₀ by default) for inducing and test inputs."""
    x_inducing = np.asarray(x_inducing, dtype=np.float64)
    x_test = np.asarray(x_test, dtype=np.float64)
    scale = 1.0 / x_inducing.shape[1] if scale is None else scale
    ii = scale * (x_inducing @ x_inducing.T)
    ti = scale * (x_test @ x_inducing.T)
    if full_tt:
        tt = scale * (x_test @ x_test.T)
    else:
        tt = scale * np.sum(x_test * x_test, axis=1)
    return BlockGram(ii=ii, ti=ti, tt=tt, tt_full=full_tt)


def add_blocks(a: BlockGram, b: BlockGram, weight: float = 0.5) -> BlockGram:
    """weight·(a + b) blockwise; tt survives only when both sides agree on its form."""
    ii = ops.mul(ops.add(a.ii, b.ii), weight)
    ti = ops.mul(ops.add(a.ti, b.ti), weight)
    tt = None
    tt_full = a.tt_full
    if a.tt is not None and b.tt is not None:
        if a.tt_full == b.tt_full:
            tt = ops.mul(ops.add(a.tt, b.tt), weight)
        else:
            tt = ops.mul(ops.add(a.tt_diag(), b.tt_diag()), weight)
            tt_full = False
    return BlockGram(ii=ii, ti=ti, tt=tt, tt_full=tt_full)

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gdkm.autodiff import ops
from gdkm.autodiff.tape import Var
from gdkm.kernels.blocks import BlockGram


@dataclass(frozen=True)
class CenteringParams:
    enabled: bool = False
    learn_affine: bool = False
    gamma: float = 1.0
    beta: float = 0.0

    def __post_init__(self) -> None:
        if not (np.isfinite(self.gamma) and np.isfinite(self.beta)):
            raise ValueError("centering gamma and beta must be finite")


def center_features(f: np.ndarray, params: CenteringParams) -> np.ndarray:
    """F'' = γ(F − mean) + β over the rows of a feature matrix."""
    f = np.asarray(f, dtype=np.float64)
    if not params.enabled:
        return f
    return params.gamma * (f - f.mean(axis=0, keepdims=True)) + params.beta


def center_kernel(k, params: CenteringParams, gamma=None, beta=None) -> Var:
    """Gram-side consequence of feature centering: γ²·CKC + β²·11ᵀ.

    ``gamma``/``beta`` may be Vars (trainable); they default to the values
    stored in ``params``.
    """
    if not params.enabled:
        return ops.lift(k)
    gamma = params.gamma if gamma is None else gamma
    beta = params.beta if beta is None else beta
    centered = ops.double_center(k)
    return ops.add(ops.mul(ops.mul(gamma, gamma), centered), ops.mul(beta, beta))


def center_block(k: BlockGram, params: CenteringParams, gamma=None, beta=None) -> BlockGram:
    """Center each block with its own row and column means."""
    if not params.enabled:
        return k
    ii = center_kernel(k.ii, params, gamma, beta)
    ti = center_kernel(k.ti, params, gamma, beta)
    tt = None
    if k.tt is not None and k.tt_full:
        tt = center_kernel(k.tt, params, gamma, beta)
    return BlockGram(ii=ii, ti=ti, tt=tt, tt_full=True)

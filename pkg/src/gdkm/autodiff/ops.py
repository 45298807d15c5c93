"""Primitive matrix operations with hand-written adjoints.

Every function accepts Vars or plain arrays and returns a Var. Outside an
active GradientTape nothing is recorded and the ops are plain numpy.
"""
from __future__ import annotations

from typing import Literal, Sequence

import numpy as np
import scipy.sparse as sp

from gdkm.autodiff.tape import Var, is_tracked, lift, record, value_of
from gdkm.numerics import linalg
from gdkm.numerics.linalg import DEFAULT_JITTER, JitterPolicy

DIAG_FLOOR = 1e-12


def _unbroadcast(g: np.ndarray, shape: Sequence[int]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def constant(x) -> Var:
    return Var(value_of(x))


def add(a, b) -> Var:
    a, b = lift(a), lift(b)
    sa, sb = a.shape, b.shape
    return record(a.value + b.value, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Var:
    a, b = lift(a), lift(b)
    sa, sb = a.shape, b.shape
    return record(a.value - b.value, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Var:
    """Elementwise product with numpy broadcasting."""
    a, b = lift(a), lift(b)
    av, bv = a.value, b.value

    def vjp(g):
        ga = _unbroadcast(g * bv, av.shape) if is_tracked(a) else None
        gb = _unbroadcast(g * av, bv.shape) if is_tracked(b) else None
        return ga, gb

    return record(av * bv, (a, b), vjp)


def matmul(a, b) -> Var:
    a, b = lift(a), lift(b)
    av, bv = a.value, b.value

    def vjp(g):
        ga = g @ bv.T if is_tracked(a) else None
        gb = av.T @ g if is_tracked(b) else None
        return ga, gb

    return record(av @ bv, (a, b), vjp)


def spmatmul(s, x) -> Var:
    """Constant (sparse or dense) matrix times a Var: s @ x."""
    x = lift(x)
    value = s @ x.value
    if sp.issparse(value):
        value = value.toarray()
    st = s.T

    def vjp(g):
        out = st @ g
        return (out.toarray() if sp.issparse(out) else np.asarray(out),)

    return record(np.asarray(value), (x,), vjp)


def congruence(s, k) -> Var:
    """s k s^T for a constant (possibly sparse) s."""
    left = spmatmul(s, k)
    return transpose(spmatmul(s, transpose(left)))


def transpose(a) -> Var:
    a = lift(a)
    return record(a.value.T, (a,), lambda g: (g.T,))


def tril(a) -> Var:
    a = lift(a)
    return record(np.tril(a.value), (a,), lambda g: (np.tril(g),))


def sum_all(a) -> Var:
    a = lift(a)
    shape = a.shape
    return record(np.sum(a.value), (a,), lambda g: (np.full(shape, float(g)),))


def sum_squares(a) -> Var:
    a = lift(a)
    av = a.value
    return record(np.sum(av * av), (a,), lambda g: (2.0 * float(g) * av,))


def row_sum_squares(a) -> Var:
    a = lift(a)
    av = a.value
    return record(np.sum(av * av, axis=1), (a,), lambda g: (2.0 * av * g[:, None],))


def trace(a) -> Var:
    a = lift(a)
    n = a.shape[0]
    return record(np.trace(a.value), (a,), lambda g: (float(g) * np.eye(n),))


def diag_part(a) -> Var:
    a = lift(a)
    return record(np.diag(a.value).copy(), (a,), lambda g: (np.diag(g),))


def take_rows(a, idx) -> Var:
    a = lift(a)
    idx = np.asarray(idx, dtype=np.int64)
    shape = a.shape

    def vjp(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return record(a.value[idx], (a,), vjp)


def log(a) -> Var:
    a = lift(a)
    av = a.value
    return record(np.log(av), (a,), lambda g: (g / av,))


def sum_log_abs_diag(h) -> Var:
    """Σ_j log|h_jj|."""
    h = lift(h)
    d = np.diag(h.value)
    return record(np.sum(np.log(np.abs(d))), (h,), lambda g: (np.diag(float(g) / d),))


def _phi(x: np.ndarray) -> np.ndarray:
    """Lower triangle with the diagonal halved."""
    out = np.tril(x)
    out[np.diag_indices_from(out)] *= 0.5
    return out


def cholesky(a, jitter_policy: JitterPolicy = DEFAULT_JITTER) -> Var:
    """Lower Cholesky factor; the adjoint is returned symmetrized.

    With L L^T = A and upstream L̄, Ā = ½(S + S^T) where
    S = L^{-T} Φ(L^T L̄) L^{-1} and Φ takes the lower triangle with half
    the diagonal.
    """
    a = lift(a)
    factor = linalg.cholesky(a.value, jitter_policy).factor

    def vjp(g):
        p = _phi(factor.T @ np.tril(g))
        y = linalg.tri_solve(factor, p, side="left", transpose=True)
        s = linalg.tri_solve(factor, y, side="right", transpose=False)
        return (0.5 * (s + s.T),)

    return record(factor, (a,), vjp)


def tri_solve(h, b, side: Literal["left", "right"] = "left", transpose: bool = False) -> Var:
    """Triangular solve; see :func:`gdkm.numerics.linalg.tri_solve` for the flags."""
    h, b = lift(h), lift(b)
    hv = h.value
    x = linalg.tri_solve(hv, b.value, side=side, transpose=transpose)

    def vjp(g):
        gb = linalg.tri_solve(hv, g, side=side, transpose=not transpose)
        gh = None
        if is_tracked(h):
            if side == "left":
                gh = -(gb @ x.T) if not transpose else -(x @ gb.T)
            else:
                gh = -(x.T @ gb) if not transpose else -(gb.T @ x)
            gh = np.tril(gh)
        return gh, gb

    return record(x, (h, b), vjp)


def arccos_cross(g, d_rows, d_cols) -> Var:
    """Arccosine kernel between two point sets from their cross Gram block.

    K_ij = (n_ij/π)(sin θ_ij + (π−θ_ij) cos θ_ij), n_ij = √(d_i d_j),
    cos θ_ij = G_ij / n_ij clipped to [−1, 1]. Diagonals are floored at
    1e-12. Derivatives use the clipped angle on both sides of the clip, which
    keeps ∂K_ii/∂G_ii = 1 on the diagonal.
    """
    g, d_rows, d_cols = lift(g), lift(d_rows), lift(d_cols)
    a = np.maximum(d_rows.value, DIAG_FLOOR)
    b = np.maximum(d_cols.value, DIAG_FLOOR)
    n = np.sqrt(np.outer(a, b))
    c = np.clip(g.value / n, -1.0, 1.0)
    theta = np.arccos(c)
    sin_t = np.sqrt(np.clip(1.0 - c * c, 0.0, None))
    k = (n / np.pi) * (sin_t + (np.pi - theta) * c)

    def vjp(gk):
        gg = gk * (np.pi - theta) / np.pi
        t = gk * sin_t * n / np.pi
        ga = t.sum(axis=1) / (2.0 * a)
        gb = t.sum(axis=0) / (2.0 * b)
        return gg, ga, gb

    return record(k, (g, d_rows, d_cols), vjp)


def arccos_full(g) -> Var:
    d = diag_part(g)
    return arccos_cross(g, d, d)


def log_softmax_likelihood(logits, labels) -> Var:
    """Σ_i log softmax(logits_i)[labels_i] (the negative cross-entropy)."""
    logits = lift(logits)
    z = logits.value
    labels = np.asarray(labels, dtype=np.int64)
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_norm
    rows = np.arange(z.shape[0])
    value = np.sum(log_p[rows, labels])

    def vjp(g):
        onehot = np.zeros_like(z)
        onehot[rows, labels] = 1.0
        return (float(g) * (onehot - np.exp(log_p)),)

    return record(value, (logits,), vjp)


def softmax(logits) -> np.ndarray:
    z = value_of(logits)
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def mean(values: Sequence[Var]) -> Var:
    total = lift(values[0])
    for v in values[1:]:
        total = add(total, v)
    return mul(total, 1.0 / len(values))


def _double_center_np(x: np.ndarray) -> np.ndarray:
    return x - x.mean(axis=1, keepdims=True) - x.mean(axis=0, keepdims=True) + x.mean()


def double_center(k) -> Var:
    """C_r K C_c with C = I − ones/n on each side (rows and columns use their own means)."""
    k = lift(k)
    return record(_double_center_np(k.value), (k,), lambda g: (_double_center_np(g),))

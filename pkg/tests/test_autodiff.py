from __future__ import annotations

from typing import Callable, Dict

import numpy as np
import pytest

from gdkm.autodiff import ops
from gdkm.autodiff.tape import GradientTape, NonFiniteGradient, Var, evaluate, grad, value_and_grad

Objective = Callable[[Dict[str, Var]], Var]


def _numeric_grad(fn: Objective, params: Dict[str, np.ndarray], name: str, h: float = 1e-6) -> np.ndarray:
    x = params[name]
    out = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        up = dict(params)
        down = dict(params)
        up[name] = x.copy()
        down[name] = x.copy()
        up[name][idx] += h
        down[name][idx] -= h
        out[idx] = (evaluate(fn, up) - evaluate(fn, down)) / (2 * h)
    return out


def _check(fn: Objective, params: Dict[str, np.ndarray], rtol: float = 1e-5, atol: float = 1e-7) -> None:
    _, grads = value_and_grad(fn, params)
    for name in params:
        assert np.allclose(grads[name], _numeric_grad(fn, params, name), rtol=rtol, atol=atol), name


def _rng(seed: int = 0) -> np.random.Generator:
    return np.random.default_rng(seed)


def test_matmul_and_transpose() -> None:
    rng = _rng()
    w = rng.standard_normal((3, 2))
    params = {"a": rng.standard_normal((3, 4)), "b": rng.standard_normal((4, 2))}
    _check(lambda p: ops.sum_all(ops.mul(ops.matmul(p["a"], p["b"]), w)), params)
    _check(lambda p: ops.sum_squares(ops.transpose(p["a"] @ p["b"])), params)


def test_broadcast_add_and_mul() -> None:
    rng = _rng(1)
    params = {"a": rng.standard_normal((3, 4)), "s": np.array(0.7)}
    _check(lambda p: ops.sum_squares(ops.add(ops.mul(p["a"], p["s"]), p["s"])), params)


def test_cholesky_adjoint() -> None:
    rng = _rng(2)
    w = np.tril(rng.standard_normal((4, 4)))

    def fn(p):
        a = ops.add(ops.matmul(p["b"], ops.transpose(p["b"])), np.eye(4))
        return ops.sum_all(ops.mul(ops.cholesky(a), w))

    _check(fn, {"b": rng.standard_normal((4, 4))})


@pytest.mark.parametrize("side", ["left", "right"])
@pytest.mark.parametrize("transpose", [False, True])
def test_tri_solve_adjoint(side: str, transpose: bool) -> None:
    rng = _rng(3)
    h = np.tril(rng.standard_normal((3, 3))) + 3.0 * np.eye(3)
    w = rng.standard_normal((3, 3))

    def fn(p):
        return ops.sum_all(ops.mul(ops.tri_solve(ops.tril(p["h"]), p["b"], side=side, transpose=transpose), w))

    _check(fn, {"h": h, "b": rng.standard_normal((3, 3))})


def test_arccos_adjoint() -> None:
    rng = _rng(4)
    w = rng.standard_normal((5, 5))

    def fn(p):
        g = ops.matmul(p["x"], ops.transpose(p["x"]))
        return ops.sum_all(ops.mul(ops.arccos_full(g), w))

    _check(fn, {"x": rng.standard_normal((5, 3))}, rtol=1e-4, atol=1e-6)


def test_log_softmax_and_rows() -> None:
    rng = _rng(5)
    labels = np.array([0, 2, 1, 2])

    def fn(p):
        rows = ops.take_rows(p["z"], np.array([0, 1, 3, 3]))
        return ops.log_softmax_likelihood(rows, labels)

    _check(fn, {"z": rng.standard_normal((4, 3))})


def test_log_softmax_single_class_is_zero() -> None:
    value = evaluate(lambda p: ops.log_softmax_likelihood(p["z"], np.zeros(3)), {"z": np.ones((3, 1))})
    assert value == 0.0


def test_logdet_diag_and_centering() -> None:
    rng = _rng(6)
    params = {"h": np.tril(rng.standard_normal((3, 3))) + 2.0 * np.eye(3)}
    _check(lambda p: ops.sum_log_abs_diag(p["h"]), params)
    w = rng.standard_normal((3, 3))
    _check(lambda p: ops.sum_all(ops.mul(ops.double_center(p["h"]), w)), params)
    _check(lambda p: ops.sum_all(ops.row_sum_squares(ops.mul(p["h"], w))), params)


def test_grad_only_for_trainable() -> None:
    params = {"a": np.ones(2), "b": np.ones(2)}
    grads = grad(lambda p: ops.sum_squares(ops.mul(p["a"], p["b"])), params, trainable=["a"])
    assert list(grads) == ["a"]
    assert np.allclose(grads["a"], 2.0)


def test_untracked_ops_record_nothing() -> None:
    with GradientTape() as tape:
        ops.matmul(np.eye(2), np.ones((2, 2)))
        watched = tape.watch(np.ones(2))
        ops.sum_squares(watched)
    assert len(tape) == 1


def test_non_finite_objective() -> None:
    with np.errstate(invalid="ignore"):
        with pytest.raises(NonFiniteGradient):
            value_and_grad(lambda p: ops.sum_all(ops.log(p["x"])), {"x": np.array([-1.0])})


def test_gradient_target_must_be_scalar() -> None:
    with GradientTape() as tape:
        x = tape.watch(np.ones(2))
        y = ops.mul(x, 2.0)
    with pytest.raises(ValueError):
        tape.gradient(y, [x])

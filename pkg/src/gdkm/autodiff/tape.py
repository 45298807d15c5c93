from __future__ import annotations

from typing import Callable, Dict, Iterable, List, Mapping, Sequence, Tuple

import numpy as np

from gdkm.errors import NumericError


class NonFiniteGradient(NumericError):
    pass


Vjp = Callable[[np.ndarray], Sequence[np.ndarray | None]]

_ACTIVE: List["GradientTape"] = []


class Var:
    """A float64 array that may be tracked by the active GradientTape.

    Operators dispatch to :mod:`gdkm.autodiff.ops`, so expressions written
    with ``+ - * @`` are recorded. Sparse matrices must go through
    ``ops.spmatmul``; ``scipy.sparse @ Var`` would silently drop tracking.
    """

    __slots__ = ("value", "tracked")
    __array_ufunc__ = None

    def __init__(self, value, tracked: bool = False) -> None:
        self.value = np.asarray(value, dtype=np.float64)
        self.tracked = tracked

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    @property
    def T(self) -> "Var":
        from gdkm.autodiff import ops
        return ops.transpose(self)

    def __array__(self, dtype=None, copy=None):
        return self.value if dtype is None else self.value.astype(dtype)

    def __float__(self) -> float:
        return float(self.value)

    def __repr__(self) -> str:
        flag = ", tracked" if self.tracked else ""
        return f"Var(shape={self.value.shape}{flag})"

    def __add__(self, other):
        from gdkm.autodiff import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from gdkm.autodiff import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from gdkm.autodiff import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from gdkm.autodiff import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from gdkm.autodiff import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from gdkm.autodiff import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from gdkm.autodiff import ops
        return ops.mul(self, 1.0 / float(other))

    def __neg__(self):
        from gdkm.autodiff import ops
        return ops.mul(self, -1.0)

    def __matmul__(self, other):
        from gdkm.autodiff import ops
        return ops.matmul(self, other)

    def __rmatmul__(self, other):
        from gdkm.autodiff import ops
        return ops.matmul(other, self)


def lift(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


def value_of(x) -> np.ndarray:
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


def is_tracked(x) -> bool:
    return isinstance(x, Var) and x.tracked


class GradientTape:
    """Records primitive ops executed inside ``with GradientTape() as tape``.

    Each record is (output, inputs, vjp). ``gradient`` replays the records
    in reverse creation order, which is a valid topological order.
    """

    def __init__(self) -> None:
        self._records: List[Tuple[Var, Tuple[object, ...], Vjp]] = []

    def __enter__(self) -> "GradientTape":
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE.remove(self)

    def __len__(self) -> int:
        return len(self._records)

    def watch(self, value) -> Var:
        return Var(np.array(value, dtype=np.float64, copy=True), tracked=True)

    def gradient(self, target: Var, sources: Iterable[Var]) -> List[np.ndarray]:
        sources = list(sources)
        if target.value.size != 1:
            raise ValueError("gradient target must be a scalar")
        grads: Dict[int, np.ndarray] = {id(target): np.ones_like(target.value)}
        for out, inputs, vjp in reversed(self._records):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            for x, gx in zip(inputs, vjp(g)):
                if gx is None or not is_tracked(x):
                    continue
                key = id(x)
                grads[key] = grads[key] + gx if key in grads else gx
        return [grads.get(id(s), np.zeros_like(s.value)) for s in sources]


def record(value, inputs: Tuple[object, ...], vjp: Vjp) -> Var:
    """Wrap ``value``; record it on the innermost active tape if any input is tracked."""
    tape = _ACTIVE[-1] if _ACTIVE else None
    tracked = tape is not None and any(is_tracked(x) for x in inputs)
    out = Var(value, tracked=tracked)
    if tracked:
        tape._records.append((out, inputs, vjp))
    return out


def value_and_grad(
    objective_fn: Callable[[Mapping[str, Var]], Var],
    params: Mapping[str, np.ndarray],
    trainable: Iterable[str] | None = None,
) -> Tuple[float, Dict[str, np.ndarray]]:
    """Objective value and reverse-mode gradients for the trainable params.

    Non-trainable entries are passed to ``objective_fn`` as untracked Vars.
    """
    names = list(params) if trainable is None else [n for n in params if n in set(trainable)]
    with GradientTape() as tape:
        inputs = {
            name: (tape.watch(value) if name in names else Var(value))
            for name, value in params.items()
        }
        out = objective_fn(inputs)
    value = float(out.value)
    if not np.isfinite(value):
        raise NonFiniteGradient(f"objective is not finite ({value})")
    grads = dict(zip(names, tape.gradient(out, [inputs[n] for n in names])))
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"gradient for {name!r} has non-finite entries")
    return value, grads


def grad(
    objective_fn: Callable[[Mapping[str, Var]], Var],
    params: Mapping[str, np.ndarray],
    trainable: Iterable[str] | None = None,
) -> Dict[str, np.ndarray]:
    return value_and_grad(objective_fn, params, trainable)[1]


def evaluate(objective_fn: Callable[[Mapping[str, Var]], Var], params: Mapping[str, np.ndarray]) -> float:
    """Objective value without recording anything."""
    return float(objective_fn({name: Var(value) for name, value in params.items()}).value)

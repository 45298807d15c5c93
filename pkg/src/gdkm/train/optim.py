from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Mapping, Tuple

import numpy as np

from gdkm.autodiff.tape import NonFiniteGradient


@dataclass
class AdamState:
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


@dataclass(frozen=True)
class Adam:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def init(self, params: Mapping[str, np.ndarray]) -> AdamState:
        return AdamState(
            m={n: np.zeros_like(p, dtype=np.float64) for n, p in params.items()},
            v={n: np.zeros_like(p, dtype=np.float64) for n, p in params.items()},
        )

    def update(
        self,
        params: Mapping[str, np.ndarray],
        grads: Mapping[str, np.ndarray],
        state: AdamState,
        lr: float,
    ) -> Tuple[Dict[str, np.ndarray], AdamState]:
        """One descent step p ← p − lr · m̂ / (√v̂ + ε) for every name in ``grads``."""
        step = state.step + 1
        m: Dict[str, np.ndarray] = {}
        v: Dict[str, np.ndarray] = {}
        out: Dict[str, np.ndarray] = {}
        for name, g in grads.items():
            m[name] = self.beta1 * state.m[name] + (1.0 - self.beta1) * g
            v[name] = self.beta2 * state.v[name] + (1.0 - self.beta2) * g * g
            if not (np.all(np.isfinite(m[name])) and np.all(np.isfinite(v[name]))):
                raise NonFiniteGradient(f"Adam moments for {name!r} are not finite")
            m_hat = m[name] / (1.0 - self.beta1**step)
            v_hat = v[name] / (1.0 - self.beta2**step)
            out[name] = params[name] - lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return out, AdamState(m=m, v=v, step=step)


def global_norm(grads: Mapping[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_by_global_norm(
    grads: Mapping[str, np.ndarray], max_norm: float
) -> Tuple[Dict[str, np.ndarray], float, bool]:
    """Rescale so the joint norm is at most ``max_norm``; returns (grads, norm before, clipped)."""
    norm = global_norm(grads)
    if max_norm <= 0 or norm <= max_norm:
        return dict(grads), norm, False
    scale = max_norm / norm
    return {n: g * scale for n, g in grads.items()}, norm, True

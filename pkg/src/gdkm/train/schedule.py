from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class LrSchedule:
    """Two-stage learning rate: linear warm-up base → peak, then cosine peak → floor.

    The warm-up covers ``warm_fraction · total_epochs`` epochs; the cosine
    stage reaches ``floor`` exactly at ``total_epochs``.
    """

    total_epochs: int
    base: float = 1e-3
    peak: float = 1e-2
    floor: float = 1e-5
    warm_fraction: float = 0.25

    def __post_init__(self) -> None:
        if self.total_epochs < 0:
            raise ValueError("total_epochs must be >= 0")
        if not 0.0 <= self.warm_fraction <= 1.0:
            raise ValueError("warm_fraction must lie in [0, 1]")

    def __call__(self, epoch: float) -> float:
        total = float(self.total_epochs)
        if total <= 0:
            return self.base
        warm = self.warm_fraction * total
        if epoch <= warm:
            if warm <= 0:
                return self.peak
            return self.base + (self.peak - self.base) * epoch / warm
        if total <= warm:
            return self.peak
        t = min(1.0, (epoch - warm) / (total - warm))
        return self.floor + 0.5 * (self.peak - self.floor) * (1.0 + math.cos(math.pi * t))


@dataclass(frozen=True)
class PolynomialSchedule:
    """init · (1 − epoch/T)^power, clamped at zero after T."""

    total_epochs: int
    init: float = 0.1
    power: float = 0.7

    def __call__(self, epoch: float) -> float:
        if self.total_epochs <= 0:
            return self.init
        frac = min(1.0, max(0.0, epoch / self.total_epochs))
        return self.init * (1.0 - frac) ** self.power

"""Periodic boundary functions of theta with derivatives up to order 4."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

TWO_PI = 2.0 * np.pi


def theta_grid(m: int) -> np.ndarray:
    """Uniform periodic grid of ``m`` points, endpoint excluded."""
    return np.arange(m) * (TWO_PI / m)


class BoundaryFunction:
    def __call__(self, theta, order: int = 0) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class FourierBoundary(BoundaryFunction):
    """``mean + sum_m cos_m cos(m theta) + sin_m sin(m theta)`` for ``m = 1..M``.

    Derivatives of every order are exact.
    """

    mean: float = 0.0
    cos: tuple[float, ...] = ()
    sin: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "cos", tuple(float(x) for x in self.cos))
        object.__setattr__(self, "sin", tuple(float(x) for x in self.sin))

    @classmethod
    def constant(cls, c: float) -> "FourierBoundary":
        return cls(mean=float(c))

    def __call__(self, theta, order: int = 0) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        out = np.full_like(theta, self.mean if order == 0 else 0.0)
        n = max(len(self.cos), len(self.sin))
        for m in range(1, n + 1):
            a = self.cos[m - 1] if m <= len(self.cos) else 0.0
            b = self.sin[m - 1] if m <= len(self.sin) else 0.0
            if a == 0.0 and b == 0.0:
                continue
            # d^k/dtheta^k of cos(m t) is m^k cos(m t + k pi/2)
            phase = order * np.pi / 2
            out += m ** order * (a * np.cos(m * theta + phase) + b * np.sin(m * theta + phase))
        return out

    def modes(self) -> int:
        return max(len(self.cos), len(self.sin))

    def to_dict(self) -> dict:
        return {"kind": "fourier", "mean": self.mean, "cos": list(self.cos), "sin": list(self.sin)}


@dataclass(frozen=True)
class SampledBoundary(BoundaryFunction):
    """Boundary given by callables for the value and its derivatives."""

    derivatives: Sequence[Callable[[np.ndarray], np.ndarray]] = field(default_factory=tuple)

    def __call__(self, theta, order: int = 0) -> np.ndarray:
        if order >= len(self.derivatives):
            raise ValueError(f"derivative of order {order} was not supplied")
        theta = np.asarray(theta, dtype=float)
        return np.asarray(self.derivatives[order](theta), dtype=float) * np.ones_like(theta)

    def to_dict(self) -> dict:
        raise TypeError("callable boundaries cannot be serialized")


def boundary_from_dict(obj) -> BoundaryFunction:
    """Parse a config value: a number, or ``{"kind": "fourier", ...}``."""
    if isinstance(obj, BoundaryFunction):
        return obj
    if obj is None:
        return FourierBoundary()
    if isinstance(obj, (int, float)):
        return FourierBoundary.constant(float(obj))
    kind = obj.get("kind", "fourier")
    if kind != "fourier":
        raise ValueError(f"unknown boundary kind {kind!r}")
    return FourierBoundary(mean=obj.get("mean", 0.0), cos=tuple(obj.get("cos", ())),
                           sin=tuple(obj.get("sin", ())))

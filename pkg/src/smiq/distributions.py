"""Sojourn-time distributions on (0, inf).

Three families cover the models in this package: Exponential, ShiftedPareto
(a Pareto on [1, inf) shifted to start at 0, also known as Lomax), and
Custom for anything the caller can describe with a sampler, a mean, and a
tail integral.  All families expose the same four operations:

* ``mean()``
* ``sample(rng, size=None)``
* ``tail_integral(x)``, the integrated survival function int_x^inf (1-F)
* ``equilibrium_sample(rng, size=None)``, a draw from the density
  (1 - F(y)) / mean, the stationary residual of a renewal process with
  increment law F.

``tail_integral(0)`` equals the mean for every family.  The exponential law
is the fixed point of the equilibrium transform; a ShiftedPareto with shape
``a`` maps to a ShiftedPareto with shape ``a - 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .errors import InfiniteMeanError, UnsupportedOperationError

__all__ = [
    "Exponential",
    "ShiftedPareto",
    "Custom",
    "SojournDist",
    "dist_to_json",
    "dist_from_json",
]

_EQ_TOL = 1e-10
_EQ_BRACKET_CAP = 1e18


@dataclass(frozen=True)
class Exponential:
    """Exponential law with the given rate (mean 1/rate)."""

    rate: float

    def __post_init__(self):
        if not (self.rate > 0 and math.isfinite(self.rate)):
            raise ValueError(f"rate must be positive and finite, got {self.rate}")

    def mean(self) -> float:
        return 1.0 / self.rate

    def sample(self, rng: np.random.Generator, size=None):
        return rng.exponential(1.0 / self.rate, size)

    def cdf(self, x):
        return -np.expm1(-self.rate * np.maximum(x, 0.0))

    def tail_integral(self, x: float) -> float:
        if x < 0:
            raise ValueError("tail_integral is defined for x >= 0")
        return math.exp(-self.rate * x) / self.rate

    def equilibrium_sample(self, rng: np.random.Generator, size=None):
        # the exponential law is its own equilibrium transform
        return rng.exponential(1.0 / self.rate, size)


@dataclass(frozen=True)
class ShiftedPareto:
    """Pareto with scale 1 and the given shape, shifted to start at 0.

    Survival function (1 + x) ** -shape on x >= 0.  The mean is finite only
    for shape > 1, and every model here needs finite-mean sojourns, so
    smaller shapes are rejected outright.
    """

    shape: float

    def __post_init__(self):
        if not (math.isfinite(self.shape) and self.shape > 0):
            raise ValueError(f"shape must be positive and finite, got {self.shape}")
        if self.shape <= 1:
            raise InfiniteMeanError(
                f"ShiftedPareto(shape={self.shape}) has infinite mean; shape must exceed 1"
            )

    def mean(self) -> float:
        return 1.0 / (self.shape - 1.0)

    def sample(self, rng: np.random.Generator, size=None):
        return rng.pareto(self.shape, size)

    def cdf(self, x):
        x = np.maximum(x, 0.0)
        return 1.0 - (1.0 + x) ** (-self.shape)

    def tail_integral(self, x: float) -> float:
        if x < 0:
            raise ValueError("tail_integral is defined for x >= 0")
        return (1.0 + x) ** (1.0 - self.shape) / (self.shape - 1.0)

    def equilibrium_sample(self, rng: np.random.Generator, size=None):
        # equilibrium density (shape-1) * (1+y)**-shape, a ShiftedPareto
        # with shape reduced by one; sampling needs no finite-mean guard
        return rng.pareto(self.shape - 1.0, size)


class Custom:
    """Sojourn law described by a sampler, a mean, and a tail integral.

    ``sampler(rng)`` must return one positive draw.  ``tail_integral`` must
    be the decreasing function x -> int_x^inf (1 - F(t)) dt with
    ``tail_integral(0) == mean``; that identity is checked at construction.
    Equilibrium draws invert the tail integral numerically, so they are only
    available when the supplied tail actually decays to zero.
    """

    def __init__(
        self,
        sampler: Callable[[np.random.Generator], float],
        mean: float,
        tail_integral: Callable[[float], float],
    ):
        if not math.isfinite(mean):
            raise InfiniteMeanError("Custom sojourn law must have a finite mean")
        if mean <= 0:
            raise ValueError(f"mean must be positive, got {mean}")
        at_zero = tail_integral(0.0)
        if not math.isfinite(at_zero) or abs(at_zero - mean) > 1e-8 * max(1.0, abs(mean)):
            raise ValueError(
                f"tail_integral(0) = {at_zero} does not match the declared mean {mean}"
            )
        self._sampler = sampler
        self._mean = float(mean)
        self._tail = tail_integral

    def mean(self) -> float:
        return self._mean

    def sample(self, rng: np.random.Generator, size=None):
        if size is None:
            return self._sampler(rng)
        return np.array([self._sampler(rng) for _ in range(int(size))])

    def tail_integral(self, x: float) -> float:
        if x < 0:
            raise ValueError("tail_integral is defined for x >= 0")
        return self._tail(x)

    def _equilibrium_one(self, u: float) -> float:
        # solve tail(x) = mean * (1 - u), the inverse CDF of the
        # equilibrium law, after bracketing the root by doubling
        target = self._mean * (1.0 - u)
        if target >= self._mean:
            return 0.0
        hi = 1.0
        while self._tail(hi) > target:
            hi *= 2.0
            if hi > _EQ_BRACKET_CAP:
                raise UnsupportedOperationError(
                    "tail_integral does not decay; equilibrium sampling unavailable"
                )
        return brentq(lambda x: self._tail(x) - target, 0.0, hi, xtol=_EQ_TOL)

    def equilibrium_sample(self, rng: np.random.Generator, size=None):
        if size is None:
            return self._equilibrium_one(rng.random())
        return np.array([self._equilibrium_one(rng.random()) for _ in range(int(size))])


SojournDist = Exponential | ShiftedPareto | Custom


def dist_to_json(dist: SojournDist) -> dict:
    """JSON-ready description of a built-in sojourn law."""
    if isinstance(dist, Exponential):
        return {"kind": "exp", "rate": dist.rate}
    if isinstance(dist, ShiftedPareto):
        return {"kind": "pareto_shifted", "shape": dist.shape}
    raise UnsupportedOperationError(f"{type(dist).__name__} has no JSON form")


def dist_from_json(obj: dict) -> SojournDist:
    """Inverse of :func:`dist_to_json`."""
    try:
        kind = obj["kind"]
    except (TypeError, KeyError):
        raise ValueError(f"sojourn spec must be an object with a 'kind': {obj!r}")
    if kind == "exp":
        return Exponential(rate=float(obj["rate"]))
    if kind == "pareto_shifted":
        return ShiftedPareto(shape=float(obj["shape"]))
    raise ValueError(f"unknown sojourn kind {kind!r}")

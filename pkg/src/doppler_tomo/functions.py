"""Smooth analytic scalar and covector functions on the plane.

These are the building blocks for generator coefficients (magnetic
strength, conformal factor), attenuation coefficients and test fields.
Every function accepts an array of points of shape ``(k, 2)`` and returns
values of shape ``(k,)`` (scalars) or ``(k, 2)`` (covectors); gradients
are analytic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _pts(x):
    x = np.asarray(x, dtype=float)
    return x.reshape(-1, 2) if x.ndim == 1 else x


@dataclass(frozen=True)
class ConstantFunction:
    value: float = 0.0

    def __call__(self, x):
        return np.full(_pts(x).shape[0], float(self.value))

    def grad(self, x):
        return np.zeros_like(_pts(x))


@dataclass(frozen=True)
class GaussianBump:
    """``amplitude * exp(-|x - center|^2 / width^2)``."""

    center: tuple = (0.0, 0.0)
    width: float = 0.5
    amplitude: float = 1.0

    def __call__(self, x):
        d = _pts(x) - np.asarray(self.center, dtype=float)
        return self.amplitude * np.exp(-np.sum(d * d, axis=1) / self.width**2)

    def grad(self, x):
        d = _pts(x) - np.asarray(self.center, dtype=float)
        g = self.amplitude * np.exp(-np.sum(d * d, axis=1) / self.width**2)
        return (-2.0 / self.width**2) * g[:, None] * d


@dataclass(frozen=True)
class PolynomialBump:
    """Compactly supported bump ``(1 - |x - center|^2 / radius^2)^power``.

    Zero outside the disk of the given radius, so it vanishes on that circle
    to order ``power`` and is ``C^{power-1}`` across it.
    """

    radius: float = 1.0
    power: int = 2
    center: tuple = (0.0, 0.0)
    amplitude: float = 1.0

    def _s(self, x):
        d = _pts(x) - np.asarray(self.center, dtype=float)
        s = 1.0 - np.sum(d * d, axis=1) / self.radius**2
        return d, np.clip(s, 0.0, None)

    def __call__(self, x):
        _, s = self._s(x)
        return self.amplitude * s**self.power

    def grad(self, x):
        d, s = self._s(x)
        coef = -2.0 * self.power * s ** (self.power - 1) / self.radius**2
        return self.amplitude * coef[:, None] * d

    def laplacian(self, x):
        d, s = self._s(x)
        p, r2 = self.power, self.radius**2
        rr = np.sum(d * d, axis=1)
        second = 4.0 * p * (p - 1) * s ** max(p - 2, 0) * rr / r2**2 if p > 1 else 0.0
        lap = second - 4.0 * p * s ** (p - 1) / r2
        return self.amplitude * np.where(s > 0, lap, 0.0)


@dataclass(frozen=True)
class LinearCovector:
    """Constant-plus-linear covector field ``h(x) = a + B x``."""

    offset: tuple = (0.5, -0.3)
    matrix: tuple = ((0.0, 0.2), (-0.1, 0.0))

    def __call__(self, x):
        x = _pts(x)
        return np.asarray(self.offset, dtype=float) + x @ np.asarray(self.matrix, dtype=float).T


@dataclass(frozen=True)
class GradientCovector:
    """The differential ``d psi`` of a scalar function with a ``grad`` method."""

    potential: object

    def __call__(self, x):
        return self.potential.grad(_pts(x))


@dataclass(frozen=True)
class ProductCovector:
    """``psi * h + d psi``, the field annihilated by the matching constructed weight."""

    psi: object
    h: object

    def __call__(self, x):
        x = _pts(x)
        return self.psi(x)[:, None] * self.h(x) + self.psi.grad(x)


@dataclass(frozen=True)
class CurlCovector:
    """Rotated gradient ``(-d2 psi, d1 psi)``; divergence free."""

    potential: object

    def __call__(self, x):
        g = self.potential.grad(_pts(x))
        return np.column_stack([-g[:, 1], g[:, 0]])


@dataclass(frozen=True)
class PerturbedFunction:
    """``base + delta * direction`` for two scalar functions with gradients."""

    base: object
    direction: object
    delta: float = 0.0

    def __call__(self, x):
        x = _pts(x)
        return self.base(x) + self.delta * self.direction(x)

    def grad(self, x):
        x = _pts(x)
        return self.base.grad(x) + self.delta * self.direction.grad(x)

"""Large-N limit: transport of the excited-fraction distribution.

The density ``p(x, t)`` of the excited fraction obeys ``p_t = (x^2 p)_x`` on
``[0, 1]``.  Characteristics ``x(t) = x0 / (1 + x0 t)`` never cross, so the
solution is the closed-form pullback

    p(x, t) = (1 - x t)^-2 p0(x / (1 - x t)),

and point masses simply ride along the characteristics.  Time is in units of
``1/gamma``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

logger = logging.getLogger(__name__)

MASS_TOL = 1e-6
WEIGHT_TOL = 1e-12
DEFAULT_GRID_POINTS = 2048


def characteristic(x0, t):
    """Position at time ``t`` of the characteristic starting at ``x0``."""
    x0 = np.asarray(x0, dtype=float)
    out = x0 / (1.0 + x0 * np.asarray(t, dtype=float))
    return float(out) if out.ndim == 0 else out


def trapezoid(y, x) -> float:
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)))


@dataclass(frozen=True)
class Density:
    """Tabulated density on an ascending grid in ``[0, 1]``.

    ``pdf`` optionally keeps the initial density as a callable so evolved
    values are exact; without it the tabulated values are interpolated
    linearly.  ``pdf`` always refers to time ``origin``.
    """

    grid: np.ndarray
    values: np.ndarray
    time: float = 0.0
    pdf: Callable | None = None
    origin: float = 0.0
    strict: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if grid.ndim != 1 or grid.shape != values.shape or len(grid) < 2:
            raise ValueError("grid and values must be 1-d arrays of equal length >= 2")
        if np.any(np.diff(grid) <= 0) or grid[0] < 0 or grid[-1] > 1:
            raise ValueError("grid must be strictly ascending inside [0, 1]")
        if np.any(values < 0):
            raise ValueError("densities must be non-negative")
        mass = trapezoid(values, grid)
        if abs(mass - 1) > MASS_TOL:
            if self.strict:
                raise ValueError(f"density has quadrature mass {mass:.12g}, expected 1")
            logger.warning("quadrature mass %.12g on this grid; refine it to resolve the support edge", mass)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_pdf(cls, pdf: Callable, grid=None, normalize: bool = True) -> "Density":
        """Tabulate ``pdf`` on ``grid`` (default: 2048 uniform points on [0, 1])."""
        grid = np.linspace(0.0, 1.0, DEFAULT_GRID_POINTS) if grid is None else np.asarray(grid, dtype=float)
        values = np.asarray(pdf(grid), dtype=float)
        scale = 1.0
        if normalize:
            scale = 1.0 / trapezoid(values, grid)
            values = values * scale
        f = pdf if scale == 1.0 else (lambda x: scale * np.asarray(pdf(x), dtype=float))
        return cls(grid, values, 0.0, f, 0.0)

    @property
    def mass(self) -> float:
        return trapezoid(self.values, self.grid)


@dataclass(frozen=True)
class PointMasses:
    positions: np.ndarray
    weights: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.positions, dtype=float))
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if x.shape != w.shape or x.ndim != 1:
            raise ValueError("positions and weights must be 1-d arrays of equal length")
        if np.any(w < 0) or abs(w.sum() - 1) > WEIGHT_TOL:
            raise ValueError("weights must be non-negative and sum to 1")
        if np.any((x < 0) | (x > 1)):
            raise ValueError("positions must lie in [0, 1]")
        object.__setattr__(self, "positions", x)
        object.__setattr__(self, "weights", w)

    @classmethod
    def single(cls, x0: float) -> "PointMasses":
        return cls(np.array([x0]), np.array([1.0]))


ContinuumDistribution = Union[Density, PointMasses]


def pullback_density(p0: Callable, x, t: float) -> np.ndarray:
    """``(1 - x t)^-2 p0(x / (1 - x t))``, zero where the pullback leaves [0, 1].

    Points with ``x t >= 1`` or with a pulled-back argument above 1 sit above
    the characteristic from ``x0 = 1`` and carry no mass; they short-circuit
    to zero before the Jacobian is formed.
    """
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    denom = 1.0 - x * t
    ok = denom > 0
    src = np.full_like(x, np.inf)
    src[ok] = x[ok] / denom[ok]
    ok &= src <= 1.0
    if np.any(ok):
        out[ok] = np.asarray(p0(src[ok]), dtype=float) / denom[ok] ** 2
    return out


def evolve_density(p0: ContinuumDistribution, t: float) -> ContinuumDistribution:
    """Advance a distribution by ``t`` time units along the characteristics."""
    if t < 0:
        raise ValueError("t must be non-negative")
    if isinstance(p0, PointMasses):
        return PointMasses(characteristic(p0.positions, t), p0.weights.copy(), p0.time + t)
    if t == 0:
        return p0
    if p0.pdf is not None:
        source, elapsed = p0.pdf, p0.time + t - p0.origin
        origin = p0.origin
    else:
        grid, values = p0.grid, p0.values

        def source(y):
            return np.interp(y, grid, values, left=0.0, right=0.0)

        elapsed, origin = t, p0.time
    values = pullback_density(source, p0.grid, elapsed)
    return Density(p0.grid, values, p0.time + t, source, origin, strict=False)


def mean_excited(p: ContinuumDistribution) -> float:
    if isinstance(p, PointMasses):
        return float(np.dot(p.weights, p.positions))
    return trapezoid(p.grid * p.values, p.grid)


def mean_curve_point_mass(x0: float, times) -> np.ndarray:
    """Mean excited fraction for all atoms starting at ``x0``."""
    return np.asarray(characteristic(x0, np.asarray(times, dtype=float)), dtype=float)

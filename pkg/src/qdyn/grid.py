"""Uniform 1-D grids, wave functions and the finite-difference Hamiltonian.

The two end points of a grid are hard walls: physical states vanish there
and the evolution/eigen solvers work on the ``n_points - 2`` interior
points.  :func:`apply_hamiltonian` nevertheless evaluates every row, treating
neighbours outside the grid as zero.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import GridMismatchError, InvalidBoundsError, NonFinitePotentialError

NORM_TOL = 1e-10


@dataclass(frozen=True)
class Grid:
    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self):
        if not (np.isfinite(self.x_min) and np.isfinite(self.x_max)):
            raise InvalidBoundsError("grid bounds must be finite")
        if not self.x_max > self.x_min:
            raise InvalidBoundsError(
                f"x_max must exceed x_min, got [{self.x_min}, {self.x_max}]")
        if int(self.n_points) != self.n_points or self.n_points < 3:
            raise InvalidBoundsError(f"n_points must be an integer >= 3, got {self.n_points}")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_points - 1)

    @property
    def points(self) -> np.ndarray:
        # linspace computes x_min + i*dx and pins the last point to x_max
        return np.linspace(self.x_min, self.x_max, self.n_points)

    @property
    def interior(self) -> slice:
        return slice(1, self.n_points - 1)


def build_grid(x_min: float, x_max: float, n_points: int) -> Grid:
    """Return the uniform grid with both end points included."""
    return Grid(float(x_min), float(x_max), int(n_points))


@dataclass
class PotentialGrid:
    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_points,):
            raise GridMismatchError(
                f"potential has shape {self.values.shape}, grid has {self.grid.n_points} points")
        if not np.all(np.isfinite(self.values)):
            raise NonFinitePotentialError("potential contains non-finite values")


def discretize_potential(f: Callable, grid: Grid) -> PotentialGrid:
    """Sample ``f`` at every grid point.

    ``f`` is called once with the whole point array; scalar-only callables
    are retried point by point.
    """
    x = grid.points
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        try:
            values = np.asarray(f(x), dtype=float)
            if values.shape != x.shape:
                values = np.broadcast_to(values, x.shape).astype(float)
        except (TypeError, ValueError, ZeroDivisionError):
            values = np.array([_scalar_eval(f, xi) for xi in x], dtype=float)
    bad = ~np.isfinite(values)
    if bad.any():
        where = x[bad][0]
        raise NonFinitePotentialError(f"potential is not finite at x={where!r}")
    return PotentialGrid(values, grid)


def _scalar_eval(f, x):
    try:
        return float(f(float(x)))
    except (ZeroDivisionError, OverflowError, ValueError):
        return np.nan


@dataclass
class WaveFunction:
    amplitudes: np.ndarray
    grid: Grid
    time: float = 0.0
    normalized: bool = field(default=False)

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != (self.grid.n_points,):
            raise GridMismatchError(
                f"amplitudes have shape {self.amplitudes.shape}, grid has {self.grid.n_points} points")
        if not np.all(np.isfinite(self.amplitudes)):
            raise ValueError("wave function amplitudes must be finite")
        if self.normalized and abs(self.norm_squared() - 1.0) > NORM_TOL:
            raise ValueError("wave function flagged normalized but its norm is "
                             f"{self.norm_squared()!r}")

    def density(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def norm_squared(self) -> float:
        return float(np.sum(self.density()) * self.grid.dx)

    def normalize(self) -> "WaveFunction":
        n = np.sqrt(self.norm_squared())
        if n == 0.0:
            raise ValueError("cannot normalize the zero state")
        return WaveFunction(self.amplitudes / n, self.grid, self.time, normalized=True)

    def inner(self, other: "WaveFunction") -> complex:
        """<self|other> with the dx-weighted inner product."""
        _check_same_grid(self.grid, other.grid)
        return complex(np.vdot(self.amplitudes, other.amplitudes) * self.grid.dx)

    def boundary_amplitude(self) -> float:
        return float(max(abs(self.amplitudes[0]), abs(self.amplitudes[-1])))


def gaussian_packet(grid: Grid, center: float = 0.0, sigma: float = 1.0,
                    momentum: float = 0.0) -> WaveFunction:
    """Normalized Gaussian whose probability density has standard deviation ``sigma``."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    x = grid.points
    amp = np.exp(-((x - center) ** 2) / (4.0 * sigma**2) + 1j * momentum * x)
    amp[0] = amp[-1] = 0.0
    return WaveFunction(amp, grid).normalize()


def _check_same_grid(a: Grid, b: Grid):
    if a != b:
        raise GridMismatchError(f"grids differ: {a} vs {b}")


def kinetic_bands(grid: Grid, D: float) -> tuple[float, float]:
    """Diagonal and off-diagonal entries of -D d^2/dx^2 (central difference)."""
    h2 = grid.dx**2
    return 2.0 * D / h2, -D / h2


def apply_hamiltonian(psi: WaveFunction, pot: PotentialGrid, D: float) -> WaveFunction:
    """Return H psi for H = -D d^2/dx^2 + V on the grid of ``psi``.

    Uses the second-order central difference; neighbours beyond either end
    of the grid count as zero.
    """
    _check_same_grid(psi.grid, pot.grid)
    a = psi.amplitudes
    padded = np.concatenate(([0.0], a, [0.0]))
    lap = (padded[2:] - 2.0 * a + padded[:-2]) / psi.grid.dx**2
    return WaveFunction(-D * lap + pot.values * a, psi.grid, psi.time)


def rayleigh_quotient(psi: WaveFunction, pot: PotentialGrid, D: float) -> float:
    h_psi = apply_hamiltonian(psi, pot, D)
    return float((psi.inner(h_psi) / psi.inner(psi)).real)

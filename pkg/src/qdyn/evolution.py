"""Real- and imaginary-time propagation on a 1-D grid.

Real time solves ``i dpsi/dt = H psi`` with the implicit midpoint
(Crank-Nicolson) rule, which is unitary for the Hermitian tridiagonal H.
Imaginary time solves ``dpsi/dtau = -H psi`` with Strang splitting; the
kinetic factor is applied exactly in the sine basis that diagonalises the
hard-wall second difference.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
import scipy.fft
import scipy.sparse
import scipy.sparse.linalg

from .errors import InstabilityError, ValidationError
from .grid import (NORM_TOL, PotentialGrid, WaveFunction, _check_same_grid,
                   kinetic_bands)

BOUNDARY_TOL = 1e-12
MODES = ("real", "imaginary")


class BoundaryWarning(UserWarning):
    """The state carries non-negligible amplitude next to a hard wall."""


@dataclass(frozen=True)
class EvolutionConfig:
    D: float
    dt: float
    n_steps: int
    mode: str = "imaginary"
    renormalize_each_step: bool = False
    sample_every: Optional[int] = None
    boundary: str = "fixed-zero"

    def __post_init__(self):
        if not (self.D > 0 and math.isfinite(self.D)):
            raise ValidationError(f"D must be positive and finite, got {self.D!r}")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValidationError(f"dt must be positive and finite, got {self.dt!r}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 0:
            raise ValidationError(f"n_steps must be a non-negative integer, got {self.n_steps!r}")
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.sample_every is not None and self.sample_every < 1:
            raise ValidationError("sample_every must be >= 1")
        if self.boundary != "fixed-zero":
            raise ValidationError("only the fixed-zero boundary is supported")

    def should_sample(self, step: int) -> bool:
        if step == self.n_steps:
            return True
        return self.sample_every is not None and step % self.sample_every == 0


def _check_boundary(psi: np.ndarray, label: str):
    peak = np.max(np.abs(psi))
    if peak == 0.0:
        return
    edge = max(abs(psi[0]), abs(psi[1]), abs(psi[-2]), abs(psi[-1])) / peak
    if edge > BOUNDARY_TOL:
        warnings.warn(f"{label}: relative amplitude {edge:.3g} at the grid wall exceeds "
                      f"{BOUNDARY_TOL:g}; widen the domain", BoundaryWarning, stacklevel=3)


def _check_finite(psi: np.ndarray, step: int):
    if not np.all(np.isfinite(psi)):
        raise InstabilityError(f"non-finite amplitude after step {step}")


def evolve_real(psi0: WaveFunction, pot: PotentialGrid,
                cfg: EvolutionConfig) -> list[WaveFunction]:
    """Propagate ``psi0`` in real time with Crank-Nicolson steps.

    Returns the sampled states; the first entry is ``psi0`` itself and the
    last is the state after ``cfg.n_steps`` steps.
    """
    if cfg.mode != "real":
        raise ValidationError("evolve_real requires mode='real'")
    _check_same_grid(psi0.grid, pot.grid)
    if abs(psi0.norm_squared() - 1.0) > NORM_TOL:
        raise ValidationError(f"psi0 must be normalized, norm^2={psi0.norm_squared()!r}")
    trajectory = [psi0]
    if cfg.n_steps == 0:
        return trajectory
    grid = psi0.grid
    _check_boundary(psi0.amplitudes, "initial state")

    diag, off = kinetic_bands(grid, cfg.D)
    v = pot.values[grid.interior]
    m = v.size
    h_diag = diag + v
    half = 0.5j * cfg.dt
    lhs = scipy.sparse.diags(
        [np.full(m - 1, half * off), 1.0 + half * h_diag, np.full(m - 1, half * off)],
        [-1, 0, 1], format="csc", dtype=complex)
    solve = scipy.sparse.linalg.factorized(lhs)
    rhs_diag = 1.0 - half * h_diag
    rhs_off = -half * off

    psi = psi0.amplitudes[grid.interior].copy()
    for step in range(1, cfg.n_steps + 1):
        rhs = rhs_diag * psi
        rhs[1:] += rhs_off * psi[:-1]
        rhs[:-1] += rhs_off * psi[1:]
        psi = solve(rhs)
        _check_finite(psi, step)
        if cfg.should_sample(step):
            trajectory.append(_embed(psi, psi0, step * cfg.dt, normalized=False))
    _check_boundary(trajectory[-1].amplitudes, "final state")
    return trajectory


def kinetic_decay_factors(n_interior: int, dx: float, D: float, dtau: float) -> np.ndarray:
    """exp(-dtau * lambda_j) for the eigenvalues of -D d^2/dx^2 with hard walls."""
    j = np.arange(1, n_interior + 1)
    lam = 4.0 * D / dx**2 * np.sin(np.pi * j / (2.0 * (n_interior + 1))) ** 2
    return np.exp(-dtau * lam)


# overflow surfaces as InstabilityError via the finiteness check
@np.errstate(over="ignore", invalid="ignore")
def evolve_imaginary(psi0: WaveFunction, pot: PotentialGrid,
                     cfg: EvolutionConfig) -> list[WaveFunction]:
    """Propagate ``psi0`` in imaginary time, ``dpsi/dtau = (D d^2/dx^2 - V) psi``.

    Each step is ``exp(-V dt/2) exp(-T dt) exp(-V dt/2)``.  With
    ``cfg.renormalize_each_step`` every state is rescaled to unit norm,
    otherwise amplitudes decay as ``exp(-E tau)``.
    """
    if cfg.mode != "imaginary":
        raise ValidationError("evolve_imaginary requires mode='imaginary'")
    _check_same_grid(psi0.grid, pot.grid)
    trajectory = [psi0]
    if cfg.n_steps == 0:
        return trajectory
    grid = psi0.grid
    _check_boundary(psi0.amplitudes, "initial state")

    v = pot.values[grid.interior]
    half_pot = np.exp(-0.5 * cfg.dt * v)
    kin = kinetic_decay_factors(v.size, grid.dx, cfg.D, cfg.dt)
    dx = grid.dx

    psi = psi0.amplitudes[grid.interior].copy()
    for step in range(1, cfg.n_steps + 1):
        psi = half_pot * psi
        psi = scipy.fft.dst(kin * scipy.fft.dst(psi, type=1, norm="ortho"),
                            type=1, norm="ortho")
        psi = half_pot * psi
        if cfg.renormalize_each_step:
            nrm = np.sqrt(np.sum(np.abs(psi) ** 2) * dx)
            if nrm == 0.0 or not np.isfinite(nrm):
                raise InstabilityError(f"state norm collapsed to {nrm!r} at step {step}")
            psi = psi / nrm
        _check_finite(psi, step)
        if cfg.should_sample(step):
            trajectory.append(_embed(psi, psi0, step * cfg.dt,
                                     normalized=cfg.renormalize_each_step))
    _check_boundary(trajectory[-1].amplitudes, "final state")
    return trajectory


def evolve(psi0: WaveFunction, pot: PotentialGrid, cfg: EvolutionConfig) -> list[WaveFunction]:
    if cfg.mode == "real":
        return evolve_real(psi0, pot, cfg)
    return evolve_imaginary(psi0, pot, cfg)


def _embed(interior: np.ndarray, like: WaveFunction, elapsed: float,
           normalized: bool) -> WaveFunction:
    full = np.zeros(like.grid.n_points, dtype=complex)
    full[like.grid.interior] = interior
    out = WaveFunction(full, like.grid, like.time + elapsed)
    # flag without re-validating: renormalized states satisfy the norm by construction
    out.normalized = normalized
    return out


def constant_slope_potential(pot: PotentialGrid, x0: float) -> PotentialGrid:
    """First-order Taylor mode: the constant potential ``dV/dx`` at ``x0``.

    The slope is read off the tabulated potential by central differences
    (one-sided at the ends).  A constant potential only contributes a global
    phase (real time) or a uniform decay (imaginary time).
    """
    x = pot.grid.points
    if not x[0] <= x0 <= x[-1]:
        raise ValidationError(f"x0={x0!r} lies outside the grid")
    slope = np.interp(x0, x, np.gradient(pot.values, pot.grid.dx))
    return PotentialGrid(np.full_like(pot.values, slope), pot.grid)


def free_potential(grid) -> PotentialGrid:
    """Zeroth-order Taylor mode: no potential at all."""
    return PotentialGrid(np.zeros(grid.n_points), grid)


def free_packet_width(sigma0: float, D: float, t: float) -> float:
    """Density standard deviation of a free Gaussian packet at time ``t``.

    For ``i dpsi/dt = -D d^2psi/dx^2`` a packet starting with density width
    ``sigma0`` spreads as ``sigma0 * sqrt(1 + (D t / sigma0**2)**2)``.
    """
    if not sigma0 > 0 or not D > 0 or not t >= 0:
        raise ValidationError("need sigma0 > 0, D > 0 and t >= 0")
    return sigma0 * math.hypot(1.0, D * t / sigma0**2)


def packet_width(psi: WaveFunction) -> float:
    """Standard deviation of |psi|^2 on the grid."""
    x = psi.grid.points
    p = psi.density()
    p = p / p.sum()
    mean = np.dot(p, x)
    return float(np.sqrt(np.dot(p, (x - mean) ** 2)))


def diffusion_green_function(x, tau: float, D: float, dim: int = 1):
    """Heat kernel ``(4 pi D tau)^(-dim/2) exp(-|x|^2 / (4 D tau))``.

    For ``dim == 1`` ``x`` may be a scalar or any array of positions.  For
    ``dim > 1`` the last axis of ``x`` holds the ``dim`` coordinates.
    """
    if not tau > 0 or not D > 0:
        raise ValidationError("need tau > 0 and D > 0")
    if int(dim) != dim or dim < 1:
        raise ValidationError(f"dim must be a positive integer, got {dim!r}")
    x = np.asarray(x, dtype=float)
    if dim == 1:
        r2 = x**2
    else:
        if x.shape[-1:] != (dim,):
            raise ValidationError(f"last axis of x must have length {dim}")
        r2 = np.sum(x**2, axis=-1)
    out = (4.0 * math.pi * D * tau) ** (-dim / 2.0) * np.exp(-r2 / (4.0 * D * tau))
    return float(out) if out.ndim == 0 else out


def write_trajectory_csv(states: Iterable[WaveFunction], path) -> None:
    """Write ``tau_or_t,x,re,im,abs2`` rows, one per (sample, grid point)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tau_or_t", "x", "re", "im", "abs2"])
        for s in states:
            t = _g17(s.time)
            for xi, a in zip(s.grid.points, s.amplitudes):
                w.writerow([t, _g17(xi), _g17(a.real), _g17(a.imag), _g17(abs(a) ** 2)])


def _g17(v: float) -> str:
    return format(float(v), ".17g")

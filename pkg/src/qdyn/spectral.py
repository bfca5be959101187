"""Eigen-decomposition of the grid Hamiltonian and spectral propagation.

Includes the energy Softmax ``exp(-E_k tau) / sum_i exp(-E_i tau)`` and its
two-level special case, the time-dependent sigmoid.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import scipy.linalg

from .errors import (ConvergenceError, EmptyExpansionError, ValidationError)
from .grid import (Grid, PotentialGrid, WaveFunction, _check_same_grid,
                   apply_hamiltonian, kinetic_bands)

DEFAULT_LEVELS = 16


@dataclass
class Spectrum:
    """Lowest eigenpairs of ``-D d^2/dx^2 + V``.

    ``eigenstates`` has shape ``(k, n_points)``; rows are orthonormal under
    the dx-weighted inner product and vanish at the two walls.
    """
    energies: np.ndarray
    eigenstates: Optional[np.ndarray]
    D: float
    grid: Optional[Grid]

    @classmethod
    def from_energies(cls, energies: Sequence[float]) -> "Spectrum":
        """Energy-only spectrum for analytic work (no grid, no states)."""
        return cls(np.asarray(energies, dtype=float), None, float("nan"), None)

    def __len__(self):
        return len(self.energies)

    def state(self, n: int) -> WaveFunction:
        if self.eigenstates is None:
            raise ValueError("this spectrum carries no eigenstates")
        return WaveFunction(self.eigenstates[n], self.grid)


@dataclass
class StateExpansion:
    coefficients: np.ndarray

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=complex)

    def weight(self) -> float:
        return float(np.sum(np.abs(self.coefficients) ** 2))


@dataclass(frozen=True)
class EnergySplit:
    kinetic: float
    potential: float
    total: float


def eigensolve(pot: PotentialGrid, D: float, k: int = DEFAULT_LEVELS) -> Spectrum:
    """Lowest ``k`` eigenpairs of the finite-difference Hamiltonian.

    The hard-wall operator acts on the ``n_points - 2`` interior points, so
    ``1 <= k <= n_points - 2``.  Each eigenvector is scaled to unit dx-norm
    and its sign fixed so that its first significant entry is positive.
    """
    grid = pot.grid
    m = grid.n_points - 2
    if int(k) != k or not 1 <= k <= m:
        raise ValidationError(f"k must be an integer in [1, {m}], got {k!r}")
    if not D > 0:
        raise ValidationError("D must be positive")
    diag, off = kinetic_bands(grid, D)
    d = diag + pot.values[grid.interior]
    e = np.full(m - 1, off)
    try:
        w, vecs = scipy.linalg.eigh_tridiagonal(d, e, select="i", select_range=(0, k - 1))
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise ConvergenceError(f"tridiagonal eigensolver failed: {exc}") from exc
    if not (np.all(np.isfinite(w)) and np.all(np.isfinite(vecs))):
        raise ConvergenceError("eigensolver returned non-finite values")

    vecs = vecs / math.sqrt(grid.dx)
    for j in range(vecs.shape[1]):
        col = vecs[:, j]
        first = np.flatnonzero(np.abs(col) > 1e-3 * np.abs(col).max())[0]
        if col[first] < 0:
            vecs[:, j] = -col
    states = np.zeros((k, grid.n_points))
    states[:, grid.interior] = vecs.T
    return Spectrum(w, states, float(D), grid)


def eigen_residuals(spec: Spectrum, pot: PotentialGrid) -> np.ndarray:
    """``||H phi_n - E_n phi_n||`` (dx-weighted) for every stored level."""
    out = []
    for n, energy in enumerate(spec.energies):
        phi = spec.state(n)
        r = apply_hamiltonian(phi, pot, spec.D).amplitudes - energy * phi.amplitudes
        out.append(math.sqrt(float(np.sum(np.abs(r) ** 2)) * spec.grid.dx))
    return np.array(out)


def expand_state(psi: WaveFunction, spec: Spectrum) -> StateExpansion:
    """Coefficients ``c_n = <phi_n|psi>``."""
    if spec.eigenstates is None:
        raise ValueError("this spectrum carries no eigenstates")
    _check_same_grid(psi.grid, spec.grid)
    return StateExpansion(spec.eigenstates @ psi.amplitudes * psi.grid.dx)


def reconstruct(exp: StateExpansion, spec: Spectrum) -> WaveFunction:
    return WaveFunction(exp.coefficients @ spec.eigenstates, spec.grid)


def _energies(spec: Union[Spectrum, Sequence[float]]) -> np.ndarray:
    energies = spec.energies if isinstance(spec, Spectrum) else spec
    return np.asarray(energies, dtype=float)


def propagation_factors(energies, time, mode: str) -> np.ndarray:
    """Per-level factors: ``exp(-i E t)`` (real) or ``exp(-E tau)`` (imaginary).

    ``time`` may be complex in real mode; ``t = -1j * tau`` reproduces the
    imaginary-mode factors.
    """
    energies = np.asarray(energies, dtype=float)
    if mode == "real":
        z = -1j * (energies * time)
        # e^x (cos y + i sin y) keeps the real axis bit-identical to exp(x)
        return np.exp(z.real) * (np.cos(z.imag) + 1j * np.sin(z.imag))
    if mode == "imaginary":
        if isinstance(time, complex) or np.iscomplexobj(time):
            raise ValidationError("imaginary-time propagation needs a real tau")
        if time < 0:
            raise ValidationError("tau must be non-negative")
        return np.exp(-energies * time)
    raise ValidationError(f"mode must be 'real' or 'imaginary', got {mode!r}")


def spectral_propagate(exp0: StateExpansion, spec: Union[Spectrum, Sequence[float]],
                       time, mode: str = "imaginary") -> StateExpansion:
    energies = _energies(spec)
    if len(energies) != len(exp0.coefficients):
        raise ValidationError("expansion and spectrum have different lengths")
    return StateExpansion(exp0.coefficients * propagation_factors(energies, time, mode))


def ground_state_limit(exp0: StateExpansion, spec: Union[Spectrum, Sequence[float]],
                       rel_tol: float = 1e-12, ratio: float = 100.0) -> tuple[int, float]:
    """Which level survives imaginary-time decay, and from when.

    Returns the index of the lowest-energy level with a non-zero coefficient
    (magnitudes at or below ``rel_tol * max|c|`` count as zero; ties go to
    the lowest index) and the smallest tau after which that term is
    ``ratio`` times larger than every other term.  Degenerate surviving
    levels give ``inf``.
    """
    energies = _energies(spec)
    mags = np.abs(exp0.coefficients)
    if mags.size == 0 or len(energies) != mags.size:
        raise EmptyExpansionError("expansion is empty or does not match the spectrum")
    top = mags.max()
    if top == 0.0:
        raise EmptyExpansionError("all coefficients are zero")
    alive = np.flatnonzero(mags > rel_tol * top)
    g = int(alive[np.argmin(energies[alive])])
    tau = 0.0
    for j in alive:
        if j == g:
            continue
        gap = energies[j] - energies[g]
        if gap <= 0.0:
            return g, math.inf
        # |c_g| e^{-E_g t} = ratio |c_j| e^{-E_j t}
        tau = max(tau, math.log(ratio * mags[j] / mags[g]) / gap)
    return g, tau


def energy_decomposition(psi: WaveFunction, pot: PotentialGrid, D: float) -> EnergySplit:
    """Kinetic ``<psi|-D d^2|psi>`` and potential ``<psi|V|psi>`` energies."""
    _check_same_grid(psi.grid, pot.grid)
    zero = PotentialGrid(np.zeros(psi.grid.n_points), psi.grid)
    kinetic = psi.inner(apply_hamiltonian(psi, zero, D)).real
    potential = float(np.sum(pot.values * psi.density()) * psi.grid.dx)
    return EnergySplit(kinetic, potential, kinetic + potential)


def occupation_probabilities(energies: Sequence[float], tau: float) -> np.ndarray:
    """Energy Softmax ``exp(-E_k tau) / sum_i exp(-E_i tau)``.

    Energies are shifted by their minimum before exponentiating.  ``tau``
    may be ``inf``, giving the uniform distribution over the lowest level(s).
    """
    e = np.asarray(energies, dtype=float)
    if e.ndim != 1 or e.size == 0:
        raise ValidationError("energies must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(e)):
        raise ValidationError("energies must be finite")
    if not tau >= 0:
        raise ValidationError("tau must be non-negative")
    shifted = e - e.min()
    if math.isinf(tau):
        w = (shifted == 0.0).astype(float)
    else:
        w = np.exp(-(shifted * tau))
    return w / w.sum()


def two_level_probability(delta_e: float, tau: float) -> float:
    """Sigmoid ``1 / (1 + exp(-delta_e * tau))`` for the lower of two levels.

    Evaluated through the same stabilised path as
    :func:`occupation_probabilities`, so the two agree bit for bit.
    """
    if not (math.isfinite(delta_e) and tau >= 0):
        raise ValidationError("delta_e must be finite and tau non-negative")
    if math.isinf(tau):
        return 1.0 if delta_e > 0 else (0.5 if delta_e == 0 else 0.0)
    if delta_e >= 0:
        return float(1.0 / (1.0 + np.exp(-(delta_e * tau))))
    e = np.exp(-(-delta_e * tau))
    return float(e / (e + 1.0))


def born_weights(exp0: StateExpansion, spec: Union[Spectrum, Sequence[float]],
                 tau: float) -> np.ndarray:
    """Diagnostic: ``|c_n exp(-E_n tau)|^2`` normalised to sum to one.

    Unlike :func:`occupation_probabilities` this keeps the coefficients and
    squares the amplitudes, so decay rates are doubled.
    """
    amp = np.abs(spectral_propagate(exp0, spec, tau, "imaginary").coefficients) ** 2
    total = amp.sum()
    if total == 0.0:
        raise EmptyExpansionError("all propagated coefficients vanished")
    return amp / total


def write_spectrum_csv(spec: Spectrum, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "energy"])
        for n, energy in enumerate(spec.energies):
            w.writerow([n, repr(float(energy))])


def write_state_csvs(spec: Spectrum, directory) -> list[Path]:
    """One ``n,x,phi`` file per level, named ``phi_<n>.csv``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    x = spec.grid.points
    for n in range(len(spec)):
        path = directory / f"phi_{n}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "x", "phi"])
            for xi, v in zip(x, spec.eigenstates[n]):
                w.writerow([n, repr(float(xi)), repr(float(v))])
        paths.append(path)
    return paths


def softmax_trace(energies: Sequence[float], taus: Sequence[float]) -> np.ndarray:
    """Rows of occupation probabilities, one per tau."""
    return np.array([occupation_probabilities(energies, t) for t in taus])


def write_softmax_csv(energies: Sequence[float], taus: Sequence[float], path) -> None:
    probs = softmax_trace(energies, taus)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tau"] + [f"p{i}" for i in range(len(energies))])
        for t, row in zip(taus, probs):
            w.writerow([repr(float(t))] + [repr(float(p)) for p in row])

import math

import numpy as np
import pytest
import sympy as sp

from qdyn.errors import GridMismatchError, InvalidBoundsError, NonFinitePotentialError
from qdyn.grid import (PotentialGrid, WaveFunction, apply_hamiltonian, build_grid,
                       discretize_potential, gaussian_packet, rayleigh_quotient)


def test_build_grid_spacing():
    g = build_grid(-10, 10, 2001)
    assert g.dx == pytest.approx(0.01, abs=1e-15)
    x = g.points
    assert x[0] == -10.0 and x[-1] == 10.0


def test_build_grid_endpoints_small():
    assert build_grid(0, 1, 3).points.tolist() == [0.0, 0.5, 1.0]


@pytest.mark.parametrize("args", [(1, -1, 100), (0, 0, 10), (0, 1, 2), (0, np.inf, 10)])
def test_build_grid_rejects_bad_bounds(args):
    with pytest.raises(InvalidBoundsError):
        build_grid(*args)


def test_points_reproducible():
    g = build_grid(-3.3, 7.1, 1001)
    i = np.arange(g.n_points - 1)
    assert np.array_equal(g.points[:-1], -3.3 + i * g.dx)
    assert np.array_equal(g.points, build_grid(-3.3, 7.1, 1001).points)


def test_discretize_zero_and_square():
    g = build_grid(-1, 1, 3)
    assert discretize_potential(lambda x: 0.0 * x, g).values.tolist() == [0.0, 0.0, 0.0]
    assert discretize_potential(lambda x: x**2, g).values.tolist() == [1.0, 0.0, 1.0]


def test_discretize_scalar_only_callable():
    g = build_grid(-1, 1, 5)
    pot = discretize_potential(math.cos, g)
    assert np.allclose(pot.values, np.cos(g.points))


def test_discretize_singular():
    g = build_grid(-1, 1, 3)
    with pytest.raises(NonFinitePotentialError):
        discretize_potential(lambda x: 1 / x, g)


def test_wavefunction_normalized_flag():
    g = build_grid(-5, 5, 101)
    with pytest.raises(ValueError):
        WaveFunction(np.ones(g.n_points), g, normalized=True)
    psi = WaveFunction(np.ones(g.n_points), g).normalize()
    assert abs(psi.norm_squared() - 1) <= 1e-10


def test_wavefunction_rejects_nonfinite():
    g = build_grid(-1, 1, 5)
    with pytest.raises(ValueError):
        WaveFunction([0, 1, np.nan, 1, 0], g)


def test_gaussian_packet_width():
    g = build_grid(-20, 20, 4001)
    psi = gaussian_packet(g, 1.5, 0.8)
    x, p = g.points, psi.density() * g.dx
    assert np.sum(p) == pytest.approx(1, abs=1e-12)
    assert np.sqrt(np.sum(p * (x - 1.5) ** 2)) == pytest.approx(0.8, rel=1e-9)


def test_hamiltonian_grid_mismatch():
    g1, g2 = build_grid(-1, 1, 11), build_grid(-1, 1, 13)
    with pytest.raises(GridMismatchError):
        apply_hamiltonian(WaveFunction(np.zeros(11), g1), PotentialGrid(np.zeros(13), g2), 1.0)


def test_hamiltonian_constant_interior_zero():
    g = build_grid(-1, 1, 21)
    out = apply_hamiltonian(WaveFunction(np.full(21, 3.0), g), PotentialGrid(np.zeros(21), g), 2.0)
    assert np.all(out.amplitudes[1:-1] == 0)
    # boundary rows see a zero neighbour outside the grid
    assert out.amplitudes[0] == pytest.approx(-2.0 * 3.0 / g.dx**2 * (-1.0))


def _plane_wave_error(n, k=3.0, D=0.7):
    g = build_grid(0, 2 * np.pi, n)
    psi = WaveFunction(np.exp(1j * k * g.points), g)
    out = apply_hamiltonian(psi, PotentialGrid(np.zeros(n), g), D)
    err = out.amplitudes[1:-1] - D * k**2 * psi.amplitudes[1:-1]
    return np.max(np.abs(err))


def test_plane_wave_second_order():
    e1, e2, e3 = (_plane_wave_error(n) for n in (201, 401, 801))
    # leading error is D k^4 dx^2 / 12
    assert e1 == pytest.approx(0.7 * 3.0**4 * (2 * np.pi / 200) ** 2 / 12, rel=1e-2)
    assert 3.9 < e1 / e2 < 4.1
    assert 3.9 < e2 / e3 < 4.1


def test_harmonic_ground_state_residual_symbolic():
    # oracle: symbolic -psi'' + x^2 psi for psi = exp(-x^2/2)
    xs = sp.symbols("x")
    psi_sym = sp.exp(-xs**2 / 2)
    h_sym = sp.simplify(-sp.diff(psi_sym, xs, 2) + xs**2 * psi_sym)
    energy = sp.simplify(h_sym / psi_sym)
    assert energy == 1
    h_num = sp.lambdify(xs, h_sym, "numpy")

    residuals = []
    for n in (401, 801, 1601):
        g = build_grid(-10, 10, n)
        psi = WaveFunction(np.exp(-g.points**2 / 2), g)
        out = apply_hamiltonian(psi, discretize_potential(lambda x: x**2, g), 1.0)
        residuals.append(np.max(np.abs(out.amplitudes[1:-1] - h_num(g.points[1:-1]))))
    assert residuals[0] < 1e-3
    assert 3.5 < residuals[0] / residuals[1] < 4.5
    assert 3.5 < residuals[1] / residuals[2] < 4.5


def test_rayleigh_quotient_of_gaussian(harmonic):
    g, pot = harmonic
    psi = WaveFunction(np.exp(-g.points**2 / 2), g)
    assert rayleigh_quotient(psi, pot, 1.0) == pytest.approx(1.0, abs=1e-4)

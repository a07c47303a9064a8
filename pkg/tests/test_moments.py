import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from conftest import bump
from ebbi.collision import DistributionFunction, build_grid
from ebbi.geometry import MetricState, frame_from_metric
from ebbi.moments import Moments, MomentsError, compute_moments, frame_stress, isotropic_pressure, shell_energy


def _radial(fn):
    return 4.0 * math.pi * quad(lambda r: fn(r) * r * r, 0.0, 12.0, epsabs=1e-14, epsrel=1e-13)[0]


RHO = _radial(lambda r: math.exp(-r * r) * math.sqrt(1.0 + r * r))
N0 = _radial(lambda r: math.exp(-r * r))
SHAT = _radial(lambda r: math.exp(-r * r) * r * r / math.sqrt(1.0 + r * r)) / 3.0


@pytest.fixture(scope="module")
def fine_grid():
    return build_grid(33, 6.0)


@pytest.mark.parametrize("g", [np.eye(3), np.diag([1.2, 0.8, 1.0]),
                               np.array([[1.1, 0.2, 0.0], [0.2, 0.9, -0.1], [0.0, -0.1, 1.3]])])
def test_gaussian_moments_against_radial_quadrature(fine_grid, g):
    P = fine_grid.nodes
    g_inv = np.linalg.inv(g)
    f = DistributionFunction(fine_grid, np.exp(-np.einsum("...a,ab,...b->...", P, g_inv, P)))
    state = MetricState(0.0, g, g)
    m = compute_moments(f, state)
    assert m.rho == pytest.approx(RHO, rel=1e-3)
    assert m.N[0] == pytest.approx(N0, rel=1e-3)
    assert np.allclose(frame_stress(m, frame_from_metric(g)), SHAT * np.eye(3), rtol=1e-3, atol=1e-3 * SHAT)
    assert m.S_trace == pytest.approx(3.0 * SHAT, rel=1e-3)
    assert np.abs(m.T0a).max() < 1e-12 and np.abs(m.N[1:]).max() < 1e-12


def test_momentum_density_of_shifted_data(fine_grid):
    P = fine_grid.nodes
    shifted = np.exp(-np.sum((P - [0.5, 0.0, 0.0]) ** 2, axis=-1))
    m = compute_moments(DistributionFunction(fine_grid, shifted), MetricState(0.0, np.eye(3), np.eye(3)))
    # int exp(-|p - a|^2) p_x dp = a pi^{3/2}
    assert m.T0a[0] == pytest.approx(-0.5 * math.pi ** 1.5, rel=1e-6)
    assert m.N[1] > 0 and abs(m.T0a[1]) < 1e-12


def test_energy_minus_trace_identity(small_grid, rng):
    g = np.diag([1.5, 0.7, 1.1])
    vals = bump(small_grid, 3.5).values * rng.uniform(0.1, 1.0, small_grid.shape)
    m = compute_moments(DistributionFunction(small_grid, vals), MetricState(0.0, g, g))
    p0 = shell_energy(small_grid, np.linalg.inv(g))
    inv_energy = np.sum(vals / p0) * small_grid.cell_volume / math.sqrt(np.linalg.det(g))
    assert m.rho - m.S_trace == pytest.approx(inv_energy, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.3, 3.0))
def test_dominant_energy_and_positive_stress(seed, spread):
    from conftest import random_spd

    rng = np.random.default_rng(seed)
    grid = build_grid(9, 4.0)
    g = random_spd(rng, spread)
    f = DistributionFunction(grid, rng.uniform(0.0, 1.0, grid.shape) ** 3)
    m = compute_moments(f, MetricState(0.0, g, g))
    assert m.rho >= m.N[0] >= 0.0
    assert np.linalg.eigvalsh(m.S).min() >= -1e-12 * np.abs(m.S).max()
    assert 0.0 <= m.S_trace <= m.rho


def test_vacuum_and_zero_data(small_grid):
    v = Moments.vacuum()
    assert v.rho == 0.0 and not v.S.any() and not v.N.any()
    m = compute_moments(DistributionFunction(small_grid, np.zeros(small_grid.shape)),
                        MetricState(0.0, np.eye(3), np.eye(3)))
    assert m.rho == 0.0 and m.S_trace == 0.0


def test_isotropic_pressure_matches_trace(small_grid):
    R = 1.7
    g = R * R * np.eye(3)
    f = bump(small_grid, 3.5)
    m = compute_moments(f, MetricState(0.0, g, g))
    assert isotropic_pressure(f, R, g) == pytest.approx(m.S_trace / 3.0, rel=1e-13)
    with pytest.raises(MomentsError):
        isotropic_pressure(f, R, np.diag([1.0, 2.0, 1.0]))
    with pytest.raises(MomentsError):
        isotropic_pressure(f, 0.0)


def test_cold_matter_is_pressureless():
    grid = build_grid(9, 4.0)
    vals = np.zeros(grid.shape)
    vals[4, 4, 4] = 1.0
    f = DistributionFunction(grid, vals)
    assert isotropic_pressure(f, 1.0) == 0.0
    assert compute_moments(f, MetricState(0.0, np.eye(3), np.eye(3))).rho == pytest.approx(grid.cell_volume)

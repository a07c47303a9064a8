import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from ebbi.collision import DistributionFunction, build_grid
from ebbi.diagnostics import (SERIES, DiagnosticsError, RunRecord, asymptotic_report, derivative, fit_decay_rate,
                              metric_limit_increments, weighted_norm)
from ebbi.geometry import MetricState

IDENTITY = MetricState(0.0, np.eye(3), np.eye(3))


def _norm_oracle(k, N):
    def integrand(r):
        grad = [1.0, 4.0 * r * r, 16.0 * r ** 4 - 16.0 * r * r + 12.0]
        return (1 + r * r) ** k * math.exp(math.sqrt(1 + r * r)) * sum(grad[:N + 1]) * math.exp(-2 * r * r) * r * r

    return math.sqrt(4.0 * math.pi * quad(integrand, 0.0, 12.0, epsabs=0, epsrel=1e-12, limit=200)[0])


@pytest.fixture(scope="module")
def gaussian():
    grid = build_grid(49, 6.0)
    return DistributionFunction(grid, np.exp(-np.sum(grid.nodes ** 2, axis=-1)))


@pytest.mark.parametrize("N", [0, 1])
def test_norm_against_radial_quadrature(gaussian, N):
    assert weighted_norm(gaussian, IDENTITY, 5.5, N) == pytest.approx(_norm_oracle(5.5, N), rel=2e-3)


def test_second_derivative_norm_converges_at_fourth_order():
    ref = _norm_oracle(5.5, 2)
    errs = []
    for n in (49, 65):
        grid = build_grid(n, 6.0)
        f = DistributionFunction(grid, np.exp(-np.sum(grid.nodes ** 2, axis=-1)))
        errs.append(abs(weighted_norm(f, IDENTITY, 5.5, 2) / ref - 1.0))
    assert errs[1] < 2e-3
    assert errs[1] / errs[0] == pytest.approx((48 / 64) ** 4, rel=0.1)


def test_norm_homogeneity_and_monotonicity(gaussian):
    base = [weighted_norm(gaussian, IDENTITY, 2.0, N) for N in range(4)]
    assert all(b > a for a, b in zip(base, base[1:]))
    scaled = weighted_norm(gaussian.with_values(3.0 * gaussian.values), IDENTITY, 2.0, 3)
    assert scaled == pytest.approx(3.0 * base[3], rel=1e-13)
    assert weighted_norm(gaussian, IDENTITY, 3.0, 1) > weighted_norm(gaussian, IDENTITY, 2.0, 1)
    with pytest.raises(DiagnosticsError):
        weighted_norm(gaussian, IDENTITY, 2.0, 4)


def test_derivative_exact_on_quartics():
    x = np.linspace(-1.0, 2.0, 13)
    h = x[1] - x[0]
    y = 3 * x ** 4 - x ** 3 + 2 * x - 5
    assert np.allclose(derivative(y, 0, h), 12 * x ** 3 - 3 * x ** 2 + 2, rtol=1e-11, atol=1e-11)
    two = np.stack([y, 2 * y], axis=1)
    assert np.allclose(derivative(two, 0, h)[:, 1], 2 * (12 * x ** 3 - 3 * x ** 2 + 2), atol=1e-10)
    with pytest.raises(DiagnosticsError):
        derivative(y[:4], 0, h)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 6.0), st.floats(0.01, 100.0))
def test_fit_recovers_exact_exponentials(lam, amp):
    t = np.linspace(0.0, 8.0, 81)
    fit = fit_decay_rate(t, amp * np.exp(-lam * t))
    assert fit.lam == pytest.approx(lam, rel=1e-9, abs=1e-9) and fit.residual < 1e-9
    assert fit.window == (4.0, 8.0) and fit.points == 41


def test_fit_errors():
    t = np.linspace(0.0, 1.0, 5)
    with pytest.raises(DiagnosticsError):
        fit_decay_rate(t, np.ones(5), (0.1, 0.2))
    with pytest.raises(DiagnosticsError):
        fit_decay_rate(t, np.array([1.0, 0.5, 0.0, 0.1, 0.1]), (0.0, 1.0))


def _synthetic(rho_rate=3.0, shear_rate=2.0, t_end=8.0):
    rec = RunRecord()
    for t in np.linspace(0.0, t_end, 81):
        G = np.diag([1.0, 2.0, 3.0]) + math.exp(-t) * np.diag([0.1, -0.1, 0.0])
        rho = 0.1 * math.exp(-rho_rate * t)
        vals = {
            "H": 1.0 + 0.1 * math.exp(-2 * t), "sigma2": 0.5 * math.exp(-shear_rate * t),
            "F": 0.1 * math.exp(-2 * t), "rho": rho, "N0": 0.9 * rho, "Shat_max": 0.01 * math.exp(-5 * t),
            "s1": 1 / 3 + 0.1 * math.exp(-t), "s2": 1 / 3, "s3": 1 / 3 - 0.1 * math.exp(-t),
            "d": -1.0 + 0.2 * math.exp(-2 * t),
        }
        rec.append(t, vals, math.exp(2 * t) * G, math.exp(2 * t) * G)
    return rec


def test_report_on_synthetic_rates():
    rep = asymptotic_report(_synthetic(), 1.0)
    verdicts = {c["name"]: c["verdict"] for c in rep["claims"]}
    assert set(verdicts.values()) == {"pass"}
    fitted = {c["name"]: c["fitted"] for c in rep["claims"]}
    assert fitted["rho"] == pytest.approx(3.0) and fitted["Shat_over_rho"] == pytest.approx(2.0)
    assert fitted["s_minus_third"] == pytest.approx(1.0)
    end = rep["end_values"]
    assert end["rho_ge_N0"] is True
    inc = end["metric_limit_increments"]
    assert all(b < a for a, b in zip(inc, inc[1:]))
    assert np.allclose(end["G"], np.diag([1.0, 2.0, 3.0]), atol=1e-3)


def test_report_flags_slow_and_out_of_band_rates():
    rep = asymptotic_report(_synthetic(rho_rate=2.0, shear_rate=1.0), 1.0)
    verdicts = {c["name"]: c["verdict"] for c in rep["claims"]}
    assert verdicts["rho"] == "fail" and verdicts["sigma2"] == "fail" and verdicts["H_minus_gamma"] == "pass"
    fast = asymptotic_report(_synthetic(rho_rate=4.0), 1.0)
    assert {c["name"]: c["verdict"] for c in fast["claims"]}["rho"] == "fail"


def test_report_on_vacuum_floor_and_coverage():
    rec = RunRecord()
    for t in np.linspace(0.0, 6.0, 61):
        rec.append(t, {"H": 1.0, "sigma2": 0.0, "rho": 0.0, "N0": 0.0, "Shat_max": 0.0})
    verdicts = {c["name"]: c["verdict"] for c in asymptotic_report(rec, 1.0)["claims"]}
    assert verdicts["H_minus_gamma"] == "pass" and verdicts["rho"] == "not evaluated"
    with pytest.raises(DiagnosticsError, match="5/gamma"):
        asymptotic_report(rec, 0.5)


def test_metric_limit_increments_rate():
    t = np.linspace(0.0, 10.0, 101)
    g = [math.exp(2 * s) * (np.eye(3) + math.exp(-s) * np.ones((3, 3))) for s in t]
    inc = metric_limit_increments(t, g, 1.0)
    assert np.allclose(inc[1:] / inc[:-1], math.exp(-1.0), rtol=1e-12)


def test_record_bookkeeping():
    rec = RunRecord()
    rec.append(0.0, {"H": 1.0, "extra": 2.0})
    rec.append(1.0, {"H": 0.5})
    assert len(rec) == 2 and set(SERIES) <= set(rec.scalars)
    assert np.isnan(rec.series("extra")[1]) and np.isnan(rec.series("rho")).all()
    with pytest.raises(DiagnosticsError):
        rec.append(1.0, {"H": 0.4})

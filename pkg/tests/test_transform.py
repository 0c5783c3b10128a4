import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from epac.epac import harmonic_standard_effective_potential
from epac.errors import IntegrandNotLocalized, NonConvexAtOrigin, QOutOfRange
from epac.model import Polynomial, ThermoState, harmonic, hcl_quartic, hcl_even
from epac.oracle import tilted_generating_function
from epac.quadrature import centroid_moments
from epac.sampler import PathEnsembleConfig, analytic_harmonic_table, build_centroid_table, default_grid, polynomial_table
from epac.transform import (
    GeneratingFunctionTable,
    extract_parameters,
    generating_function,
    ground_state_energy,
    harmonic_generating_function,
    inverse_legendre,
    legendre_point,
    legendre_transform,
    oracle_generating_function,
    polynomial_moments,
)


def harmonic_w(J, omega, beta, m=1.0):
    return J**2 / (2 * m * omega**2) - math.log(2 * math.sinh(0.5 * beta * omega)) / beta


def test_harmonic_generating_value():
    ts = ThermoState(1.0)
    g = generating_function(analytic_harmonic_table(1.0, ts), ts, J_grid=[-1.0, 0.0, 1.0])
    assert g.w[2] == pytest.approx(0.45868, abs=1e-5)
    np.testing.assert_allclose(g.w, [harmonic_w(j, 1.0, 1.0) for j in (-1, 0, 1)], atol=1e-12)
    np.testing.assert_allclose(g.dw, [-1, 0, 1], atol=1e-12)
    np.testing.assert_allclose(g.d2w, 1.0, rtol=1e-10)


@given(st.floats(0.1, 20.0), st.floats(0.3, 3.0), st.floats(-2.0, 2.0))
def test_quadrature_matches_harmonic_closed_form(beta, omega, J):
    ts = ThermoState(beta)
    t = analytic_harmonic_table(omega, ts)
    w, mean, var = centroid_moments(t.fit._float, beta, 1.0, J)
    assert w == pytest.approx(harmonic_w(J, omega, beta), abs=1e-10 * (1 + abs(w)))
    assert mean == pytest.approx(J / omega**2, abs=1e-10 * (1 + abs(mean)))
    assert beta * var == pytest.approx(1 / omega**2, rel=1e-9)


@given(st.floats(-3.0, 3.0))
def test_constant_shift_moves_w(C):
    ts = ThermoState(2.0)
    base = hcl_even()._float
    shifted = base.copy()
    shifted[0] += C
    for J in (-0.5, 0.0, 0.7):
        assert centroid_moments(shifted, 2.0, 1.0, J)[0] == pytest.approx(centroid_moments(base, 2.0, 1.0, J)[0] - C, abs=1e-12)


def test_quadrature_localization_errors():
    with pytest.raises(IntegrandNotLocalized):
        centroid_moments([0, 0, 0, 1.0], 1.0, 1.0, 0.0)
    with pytest.raises(IntegrandNotLocalized):
        centroid_moments([0, 0, 0.5], 1.0, 1.0, 0.0, domain=(-1.0, 1.0))
    # a cubic is fine once restricted to a domain where the density has died off
    w, mean, _ = centroid_moments([0, 0, 0.5, 0.01], 10.0, 1.0, 0.0, domain=(-5.0, 5.0))
    assert abs(mean) < 0.1


@given(st.floats(0.2, 20.0), st.floats(0.4, 2.5), st.floats(-1.0, 1.0))
def test_harmonic_legendre_closed_form_and_involution(beta, omega, f):
    ts = ThermoState(beta)
    g = harmonic_generating_function(omega, ts, f)
    Q = np.linspace(g.dw[2], g.dw[-3], 41)
    curve = legendre_transform(g, Q)
    np.testing.assert_allclose(curve.V, harmonic_standard_effective_potential(omega, f, ts, Q), atol=1e-10)
    assert curve.is_convex() and g.is_convex()
    inner = slice(3, -3)
    back = inverse_legendre(legendre_transform(g, np.linspace(g.dw[1], g.dw[-2], 201)), g.J[inner])
    np.testing.assert_allclose(back, g.w[inner], atol=1e-8)
    assert curve.fenchel_gap(g) >= -1e-10


def test_stationarity_duality():
    ts = ThermoState(3.0)
    g = oracle_generating_function(hcl_quartic(), ts)
    Q = np.linspace(g.dw[3], g.dw[-4], 31)
    curve = legendre_transform(g, Q)
    spline = curve.interpolant()
    h = 1e-5
    numeric = (spline(Q[1:-1] + h) - spline(Q[1:-1] - h)) / (2 * h)
    np.testing.assert_allclose(numeric, curve.dV[1:-1], rtol=1e-8, atol=1e-8)


def test_oracle_extraction_beta_10():
    g = oracle_generating_function(hcl_quartic(), ThermoState(10.0))
    p = extract_parameters(g)
    assert p.Q_min == pytest.approx(-0.150148, abs=1e-6)
    assert p.omega_beta == pytest.approx(0.966281, abs=1e-6)
    assert p.Q_min_curve == pytest.approx(p.Q_min, abs=1e-6)
    assert p.omega_curve == pytest.approx(p.omega_beta, rel=1e-6)
    curve = legendre_transform(g, np.linspace(p.Q_min - 0.5, p.Q_min + 0.5, 51))
    assert ground_state_energy(curve, p) == pytest.approx(p.E0, abs=1e-9)
    assert ground_state_energy(curve) == pytest.approx(p.E0, abs=1e-9)
    # the free energy at beta = 100 is the ground-state energy to 1e-40
    E0 = extract_parameters(oracle_generating_function(hcl_quartic(), ThermoState(100.0))).E0
    assert E0 == pytest.approx(0.494222, abs=1e-6)


def test_legendre_point_matches_table():
    ts = ThermoState(2.0)
    mom = polynomial_moments(hcl_even()._float, ts)
    g = generating_function(polynomial_table(hcl_even(), ts), ts)
    for Q in (-0.8, 0.0, 1.1):
        v, J, _ = legendre_point(mom, Q)
        assert v == pytest.approx(float(legendre_transform(g, [Q]).V[0]), abs=1e-9)


def test_harmonic_minimum_temperature_trend():
    betas = [100.0, 10.0, 1.0, 0.1, 0.01]
    v = [harmonic_standard_effective_potential(1.0, 0.0, ThermoState(b), 0.0) for b in betas]
    assert np.all(np.diff(v) < 0)
    assert v[0] == pytest.approx(0.5, abs=1e-12)
    assert harmonic_standard_effective_potential(1.0, 0.0, ThermoState(1.0), 0.0) == pytest.approx(0.04132, abs=1e-5)
    assert harmonic_standard_effective_potential(1.0, 0.0, ThermoState(5.0), 0.0) == pytest.approx(0.49864, abs=1e-5)


def test_extraction_errors():
    g = harmonic_generating_function(1.0, ThermoState(1.0))
    with pytest.raises(QOutOfRange):
        extract_parameters(g, J0=g.J[-1] + 1.0)
    bad = GeneratingFunctionTable(np.array([-1.0, 0.0, 1.0]), np.zeros(3), np.array([0.0, 0.0, 0.0]), np.ones(3), "analytic", 1.0)
    with pytest.raises(NonConvexAtOrigin):
        legendre_transform(bad, [0.0])
    with pytest.raises(QOutOfRange):
        legendre_point(lambda J: (0.0, math.tanh(J), 1.0 - math.tanh(J) ** 2), 2.0)


def test_sampled_generating_function_against_oracle():
    ts = ThermoState(10.0)
    cfg = PathEnsembleConfig.for_beta(10.0, sweeps=1400, burn_in=200, block_size=200, seed=5)
    table = build_centroid_table(hcl_even(), ts, grid=default_grid(hcl_even(), ts, energy=60.0), cfg=cfg)
    J = np.linspace(-0.6, 0.6, 7)
    w = generating_function(table, ts, J_grid=J).w

    def w_of(fit):
        mom = polynomial_moments(fit._float, ts, table.domain)
        return np.array([mom(j)[0] for j in J])

    reps = np.array([w_of(f) for f in table.replica_fits(32, 1)])
    err = np.hypot(reps.std(axis=0, ddof=1), w_of(table.alt_fit) - w)
    exact = np.array([tilted_generating_function(hcl_even(), ts, j) for j in J])
    assert np.all(np.abs(w - exact) <= 3 * err + 1e-9)


def test_csv_outputs(tmp_path):
    ts = ThermoState(1.0)
    g = harmonic_generating_function(1.0, ts)
    g.to_csv(tmp_path / "w.csv", {"seed": 3})
    c = legendre_transform(g, np.linspace(-1, 1, 5))
    c.to_csv(tmp_path / "v.csv", {"seed": 3}, pin_zero=True)
    lines = (tmp_path / "v.csv").read_text().splitlines()
    body = [l for l in lines if not l.startswith("#")]
    assert body[0] == "Q,V"
    assert min(float(l.split(",")[1]) for l in body[1:]) == 0.0

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epac.epac import (
    envelope_decay,
    epac_autocorrelation,
    frequency_enhancement_check,
    harmonic_autocorrelation,
    harmonic_effective_classical_potential,
    harmonic_parameters,
    harmonic_standard_effective_potential,
    run_scheme,
    split_linear,
    time_average,
)
from epac.errors import FitRejected
from epac.model import Polynomial, ThermoState, Tilted, asym_harmonic, harmonic, hcl_quartic, hcl_tilted
from epac.oracle import exact_autocorrelation, solve_bound_states, thermal_expectation_q
from epac.transform import EpacParameters

TIMES = 0.05 * np.arange(401)


@given(st.floats(0.05, 50.0), st.floats(0.2, 3.0), st.floats(-2.0, 2.0), st.floats(0.5, 2.0))
def test_epac_series_structure(beta, omega, Q, m):
    p = EpacParameters(beta=beta, mass=m, Q_min=Q, omega_beta=omega)
    t = np.linspace(-7.0, 7.0, 141)
    c = epac_autocorrelation(p, t).values
    np.testing.assert_allclose(c.real, c.real[::-1], rtol=0, atol=1e-12 * np.abs(c).max())
    np.testing.assert_allclose(c.imag, -c.imag[::-1], rtol=0, atol=1e-12 * np.abs(c).max())
    c0 = epac_autocorrelation(p, [0.0]).values[0]
    assert c0.imag == 0.0
    assert c0.real == pytest.approx(1 / (2 * m * omega * math.tanh(0.5 * beta * omega)) + Q**2, rel=1e-14)
    assert c0.real - Q**2 > 0


def test_single_mode_spectrum():
    omega = 1.3
    p = EpacParameters(beta=2.0, mass=1.0, Q_min=0.4, omega_beta=omega)
    n, periods = 256, 8
    t = np.arange(n) * periods * 2 * math.pi / omega / n
    spec = np.abs(np.fft.fft(epac_autocorrelation(p, t).values)) / n
    keep = np.zeros(n, dtype=bool)
    keep[[0, periods, n - periods]] = True
    assert spec[~keep].max() <= 1e-10 * spec.max()


@settings(max_examples=12)
@given(st.floats(0.5, 20.0), st.floats(0.5, 2.0), st.floats(-1.0, 1.0), st.sampled_from([0.5, 1.0, 2.0]))
def test_harmonic_exactness(beta, omega, f, m):
    ts = ThermoState(beta, m)
    params = harmonic_parameters(omega, ts, f)
    p = Tilted(harmonic(omega, m), f, 0)
    exact = exact_autocorrelation(solve_bound_states(p, ts), beta, TIMES)
    np.testing.assert_allclose(epac_autocorrelation(params, TIMES).values, exact.values, atol=1e-8)


def test_asym_harmonic_constant_term():
    ts = ThermoState(3.0, 2.0)
    f, omega = 0.3, 1.5
    params = run_scheme("A", asym_harmonic(f, omega, 2.0), ts, route="analytic").params
    c = epac_autocorrelation(params, TIMES).values - harmonic_autocorrelation(omega, ts, TIMES).values
    np.testing.assert_allclose(c, f**2 / (4.0 * omega**4), atol=1e-13)


def test_standard_effective_potential_closed_form():
    ts = ThermoState(1.0)
    assert harmonic_standard_effective_potential(1.0, 0.0, ts, 0.0) == pytest.approx(0.04132, abs=1e-5)
    assert harmonic_standard_effective_potential(1.0, 0.0, ThermoState(5.0), 0.0) == pytest.approx(0.49864, abs=1e-5)
    f = 0.3
    Q = np.linspace(-1, 1, 2001)
    v = harmonic_standard_effective_potential(1.0, f, ts, Q)
    assert Q[np.argmin(v)] == pytest.approx(-f, abs=1e-3)
    assert v.min() == pytest.approx(-(f**2) / 2 + math.log(2 * math.sinh(0.5)), abs=1e-6)
    # the centroid potential lies above the standard one by (1/beta) log(beta omega)
    gap = harmonic_effective_classical_potential(1.0, ThermoState(4.0), 0.0) - harmonic_standard_effective_potential(1.0, 0.0, ThermoState(4.0), 0.0)
    assert gap == pytest.approx(-math.log(4.0) / 4.0, abs=1e-12)


def test_split_linear():
    d = split_linear(hcl_quartic())
    assert (d.shift, d.f, d.c) == (Fraction(5, 2), Fraction(-5, 4), Fraction(125, 64))
    d = split_linear(hcl_tilted())
    assert d.shift == 0 and d.f == Fraction(-5, 4) and d.c == Fraction(125, 64)
    d = split_linear(asym_harmonic())
    assert d.shift == 0 and d.f == Fraction(3, 10)


@pytest.mark.parametrize("beta", [0.1, 1.0, 10.0, 100.0])
def test_harmonic_plus_linear_schemes_identical(beta):
    ts = ThermoState(beta)
    p = asym_harmonic(Fraction(3, 10))
    a = run_scheme("A", p, ts, route="analytic")
    b = run_scheme("B", p, ts, route="analytic")
    assert a.params.Q_min == pytest.approx(b.params.Q_min, abs=1e-12)
    assert a.params.omega_beta == pytest.approx(b.params.omega_beta, abs=1e-10)
    assert a.params.E0 == pytest.approx(b.params.E0, abs=1e-10)
    assert b.params.omega_s == pytest.approx(1.0, abs=1e-10)


def test_oracle_schemes_agree_and_shift_is_exact():
    ts = ThermoState(10.0)
    a = run_scheme("A", hcl_quartic(), ts, route="oracle")
    b = run_scheme("B", hcl_quartic(), ts, route="oracle")
    # the two oracle runs use different DVR grids
    assert a.params.Q_min == pytest.approx(b.params.Q_min, abs=1e-7)
    assert a.params.omega_beta == pytest.approx(b.params.omega_beta, rel=1e-6)
    assert b.X_min - b.params.Q_min == 2.5
    mean = thermal_expectation_q(solve_bound_states(hcl_quartic(), ts), 10.0)
    assert b.params.Q_min == pytest.approx(mean, abs=1e-6)
    Q = b.curve.Q[(b.curve.Q > a.curve.Q[0]) & (b.curve.Q < a.curve.Q[-1])]
    np.testing.assert_allclose(np.interp(Q, a.curve.Q, a.curve.V), np.interp(Q, b.curve.Q, b.curve.V), atol=1e-5)
    row = b.summary_row("hcl-quartic")
    assert row["scheme"] == "B" and row["beta"] == 10.0


def test_enhancement_equality_for_harmonic():
    rep = frequency_enhancement_check(run_scheme("B", asym_harmonic(), ThermoState(2.0), route="analytic"))
    assert rep.omega_bar == pytest.approx(rep.omega_s, abs=1e-12)
    assert rep.quartic == pytest.approx(0.0, abs=1e-8)
    assert rep.enhanced


def test_enhancement_for_quartic():
    rep = frequency_enhancement_check(run_scheme("B", hcl_quartic(), ThermoState(10.0), route="oracle"))
    assert rep.margin == pytest.approx(0.37707, abs=1e-4)
    assert rep.quartic > 0
    assert rep.omega_quartic == pytest.approx(rep.omega_bar, rel=0.05)


def test_enhancement_rejects_negative_quartic():
    even = Polynomial((0, 0, Fraction(1, 2), 0, Fraction(-1, 20), 0, Fraction(1, 500)))
    res = run_scheme("B", Tilted(even, Fraction(-1, 2), 0), ThermoState(10.0), route="oracle")
    with pytest.raises(FitRejected):
        frequency_enhancement_check(res)
    with pytest.raises(ValueError):
        frequency_enhancement_check(run_scheme("A", asym_harmonic(), ThermoState(1.0), route="analytic"))


def test_accuracy_degrades_with_temperature():
    devs = []
    for beta in (10.0, 1.0, 0.1):
        ts = ThermoState(beta)
        params = run_scheme("B", hcl_quartic(), ts, route="oracle").params
        exact = exact_autocorrelation(solve_bound_states(hcl_quartic(), ts), beta, TIMES)
        devs.append(time_average(TIMES, np.abs(epac_autocorrelation(params, TIMES).values.real - exact.values.real)))
        if beta == 0.1:
            assert envelope_decay(exact, 2 * math.pi / params.omega_beta) >= 0.5
            assert abs(envelope_decay(epac_autocorrelation(params, TIMES), 2 * math.pi / params.omega_beta)) <= 0.01
    assert devs[0] < devs[1] < devs[2]


def test_scheme_argument_validation():
    with pytest.raises(ValueError):
        run_scheme("C", hcl_quartic(), ThermoState(1.0))
    with pytest.raises(ValueError):
        run_scheme("A", hcl_quartic(), ThermoState(1.0), route="exact")
    with pytest.raises(ValueError):
        run_scheme("A", hcl_quartic(), ThermoState(1.0), route="analytic")

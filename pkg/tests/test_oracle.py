import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from epac.errors import NonConfiningPotential, TruncationTooSevere, UnboundedSpectrumRequest
from epac.model import ThermoState, Tilted, asym_harmonic, harmonic, morse_hcl, hcl_quartic
from epac.oracle import (
    boltzmann_weights,
    exact_autocorrelation,
    solve_bound_states,
    spectrum_to_csv,
    thermal_expectation_q,
    thermal_expectation_q2,
    tilted_generating_function,
    tilted_generating_moments,
)

# exact thermal data of the quartic 1/2 q^2 + 1/10 q^3 + 1/100 q^4, frozen from the eigensolver
QUARTIC_E0 = 0.494222
QUARTIC_MEAN_Q = {0.1: -1.37350, 1.0: -0.33760, 10.0: -0.150148, 100.0: -0.150128}


def test_harmonic_levels():
    s = solve_bound_states(harmonic(), ThermoState(100.0), n_states=10)
    np.testing.assert_allclose(s.energies, np.arange(10) + 0.5, atol=1e-8)


def test_morse_levels():
    s = solve_bound_states(morse_hcl(), ThermoState(100.0), n_states=3)
    np.testing.assert_allclose(s.energies, [0.495, 1.455, 2.375], atol=1e-6)


def test_quartic_ground_state():
    E0 = solve_bound_states(hcl_quartic(), ThermoState(100.0), n_states=4).energies[0]
    # second-order perturbation estimate 0.4938 +- 0.0005
    assert abs(E0 - 0.4938) <= 5e-4
    assert E0 == pytest.approx(QUARTIC_E0, abs=1e-6)


@pytest.mark.parametrize("beta", sorted(QUARTIC_MEAN_Q))
def test_quartic_mean_position(beta):
    s = solve_bound_states(hcl_quartic(), ThermoState(beta))
    assert thermal_expectation_q(s, beta) == pytest.approx(QUARTIC_MEAN_Q[beta], abs=1e-5)


@pytest.mark.parametrize("beta", [0.5, 1.0, 10.0])
def test_harmonic_mean_is_zero(beta):
    s = solve_bound_states(harmonic(), ThermoState(beta))
    assert abs(thermal_expectation_q(s, beta)) < 1e-10


def test_asym_harmonic_mean():
    s = solve_bound_states(asym_harmonic(), ThermoState(2.0))
    assert thermal_expectation_q(s, 2.0) == pytest.approx(-0.3, abs=1e-9)


def test_harmonic_c0_closed_form():
    s = solve_bound_states(harmonic(), ThermoState(1.0))
    c = exact_autocorrelation(s, 1.0, [0.0]).values[0]
    assert c.real == pytest.approx(0.5 / math.tanh(0.5), abs=1e-9)
    assert c.real == pytest.approx(1.08198, abs=1e-5)
    assert abs(c.imag) < 1e-14


@pytest.mark.parametrize("beta", [0.3, 1.0, 10.0])
def test_c0_equals_direct_trace(beta):
    s = solve_bound_states(hcl_quartic(), ThermoState(beta))
    w = boltzmann_weights(s, beta)
    via_elements = float(w @ (s.q_elements**2).sum(axis=0))
    direct = thermal_expectation_q2(s, beta)
    c0 = exact_autocorrelation(s, beta, [0.0]).values[0].real
    assert c0 == pytest.approx(direct, abs=1e-10)
    assert via_elements == pytest.approx(direct, abs=1e-10)


def test_harmonic_generating_function():
    w = tilted_generating_function(harmonic(), ThermoState(2.0), 0.0)
    assert w == pytest.approx(-0.5 * math.log(2 * math.sinh(1.0)), abs=1e-9)
    assert w == pytest.approx(-0.427293, abs=1e-6)


@pytest.mark.parametrize("beta", [0.5, 10.0])
def test_generating_slope_is_mean(beta):
    ts = ThermoState(beta)
    h = 1e-3
    wp = tilted_generating_function(hcl_quartic(), ts, h)
    wm = tilted_generating_function(hcl_quartic(), ts, -h)
    mean = thermal_expectation_q(solve_bound_states(hcl_quartic(), ts), beta)
    assert (wp - wm) / (2 * h) == pytest.approx(mean, abs=1e-6)


def test_generating_curvature_matches_differences():
    ts = ThermoState(3.0)
    h = 1e-3
    w = [tilted_generating_function(hcl_quartic(), ts, j) for j in (-h, 0.0, h)]
    _, _, second = tilted_generating_moments(hcl_quartic(), ts, 0.0)
    assert (w[0] - 2 * w[1] + w[2]) / h**2 == pytest.approx(second, rel=1e-4)


@given(st.lists(st.integers(-30, 30), min_size=3, max_size=6, unique=True))
def test_generating_function_convex(steps):
    ts = ThermoState(2.0)
    J = 0.05 * np.sort(steps)
    w = np.array([tilted_generating_function(hcl_quartic(), ts, j) for j in J])
    slopes = np.diff(w) / np.diff(J)
    assert np.all(np.diff(slopes) >= -1e-9)


@pytest.mark.parametrize("beta", [0.1, 1.0, 10.0])
def test_correlation_hermitian_symmetry(beta):
    t = np.linspace(-10, 10, 401)
    c = exact_autocorrelation(solve_bound_states(hcl_quartic(), ThermoState(beta)), beta, t).values
    np.testing.assert_allclose(np.conj(c), c[::-1], atol=1e-12)


def test_low_temperature_fluctuation_limit():
    beta = 100.0
    s = solve_bound_states(hcl_quartic(), ThermoState(beta))
    c0 = thermal_expectation_q2(s, beta)
    mean = thermal_expectation_q(s, beta)
    ground = float(np.sum(s.q_elements[0, 1:] ** 2))
    assert c0 - mean**2 == pytest.approx(ground, abs=1e-8)


def test_error_paths():
    with pytest.raises(UnboundedSpectrumRequest):
        solve_bound_states(morse_hcl(), ThermoState(1.0))
    with pytest.raises(UnboundedSpectrumRequest):
        solve_bound_states(morse_hcl(), ThermoState(1.0), n_states=200)
    with pytest.raises(NonConfiningPotential):
        solve_bound_states(Tilted(morse_hcl(), 0.1, 0), ThermoState(1.0), n_states=2)
    with pytest.raises(NonConfiningPotential):
        tilted_generating_function(morse_hcl(), ThermoState(1.0), 0.0)
    s = solve_bound_states(hcl_quartic(), ThermoState(10.0), n_states=3)
    with pytest.raises(TruncationTooSevere):
        boltzmann_weights(s, 0.1)


def test_spectrum_csv(tmp_path):
    s = solve_bound_states(harmonic(), ThermoState(10.0), n_states=4)
    spectrum_to_csv(s, tmp_path / "e.csv", tmp_path / "q.csv", {"seed": 0})
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[-1].startswith("3,3.5")
    assert "# units: hbar=kB=1" in lines

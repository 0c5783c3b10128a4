import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from epac.errors import NonConfiningPotential
from epac.model import Polynomial, ThermoState, Tilted, evaluate, harmonic, morse_hcl, hcl_even
from epac.sampler import (
    PathEnsembleConfig,
    analytic_harmonic_table,
    block_error,
    build_centroid_table,
    centroid_mean_force,
    cumulative_trapezoid_with_errors,
    default_grid,
    harmonic_reference_free_energy,
    harmonic_ti_value,
    rng_stream,
)

SMALL = PathEnsembleConfig(beads=32, sweeps=600, burn_in=200, block_size=100, walkers=16, seed=7)


def test_config_validation():
    for kw in (
        dict(beads=3),
        dict(sweeps=100, burn_in=100),
        dict(sweeps=1000, burn_in=100, block_size=7),
        dict(sweeps=300, burn_in=100, block_size=200),
        dict(step_scale=0.0),
        dict(walkers=0),
        dict(seed=-1),
    ):
        with pytest.raises(ValueError):
            PathEnsembleConfig(**kw)
    assert PathEnsembleConfig.for_beta(100.0).beads == 1024
    assert PathEnsembleConfig.for_beta(0.1, beads=16).beads == 16


def test_rng_streams_are_keyed():
    a = rng_stream(3, 5).standard_normal(4)
    b = rng_stream(3, 5).standard_normal(4)
    c = rng_stream(3, 6).standard_normal(4)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)


def test_block_error_on_independent_data():
    x = np.random.default_rng(0).standard_normal((4000, 8))
    mean, err = block_error(x, 100)
    assert abs(mean) < 4 * err
    assert err == pytest.approx(1 / math.sqrt(x.size), rel=0.3)


@pytest.mark.parametrize("q_c", [-1.0, 0.0, 0.7])
def test_harmonic_force_is_linear(q_c):
    r = centroid_mean_force(harmonic(), ThermoState(2.0), q_c, SMALL)
    assert abs(r.force - q_c) <= 3 * r.err + 1e-12
    assert 0.2 <= r.acceptance <= 1.0


def test_symmetric_force_vanishes_at_origin():
    r = centroid_mean_force(hcl_even(), ThermoState(10.0), 0.0, PathEnsembleConfig(beads=64, sweeps=600, burn_in=200, block_size=100, walkers=16))
    assert abs(r.force) <= 3 * r.err


def test_linear_term_shifts_force_by_f():
    ts = ThermoState(2.0)
    for i, q in enumerate(np.linspace(-2, 2, 5)):
        a = centroid_mean_force(hcl_even(), ts, q, SMALL, i)
        b = centroid_mean_force(Tilted(hcl_even(), 0.6, 0), ts, q, SMALL, i)
        assert abs(b.force - a.force - 0.6) <= 3 * math.hypot(a.err, b.err) + 1e-12


def test_high_fidelity_self_oracle():
    """Production force at x_c = 1, beta = 10 against twice the beads and ten times the sweeps."""
    ts = ThermoState(10.0)
    prod = PathEnsembleConfig(beads=128, sweeps=600, burn_in=200, block_size=100, walkers=16, seed=1)
    ref = PathEnsembleConfig(beads=256, sweeps=4200, burn_in=200, block_size=500, walkers=16, seed=2)
    a = centroid_mean_force(hcl_even(), ts, 1.0, prod)
    b = centroid_mean_force(hcl_even(), ts, 1.0, ref)
    assert abs(a.force - b.force) <= 3 * math.hypot(a.err, b.err)


def test_bead_doubling():
    ts = ThermoState(1.0)
    a = centroid_mean_force(hcl_even(), ts, 1.5, SMALL)
    b = centroid_mean_force(hcl_even(), ts, 1.5, PathEnsembleConfig(**{**SMALL.__dict__, "beads": 64}))
    assert abs(a.force - b.force) <= 3 * math.hypot(a.err, b.err)


def test_harmonic_table_shape_and_pin():
    ts = ThermoState(2.0)
    table = build_centroid_table(harmonic(), ts, grid=np.linspace(-6, 6, 9), cfg=SMALL)
    q = np.linspace(-6, 6, 17)
    np.testing.assert_allclose(table.fit(q) - table.fit(0.0), 0.5 * q**2, atol=1e-10)
    assert float(table.fit(0.0)) == pytest.approx(0.5 * math.log(math.sinh(1.0)), abs=1e-10)
    assert float(table.fit(0.0)) == pytest.approx(0.08072, abs=1e-5)
    assert table.provenance["parity"] is True


def test_parity_without_halving():
    ts = ThermoState(1.0)
    table = build_centroid_table(hcl_even(), ts, grid=default_grid(hcl_even(), ts, 9), cfg=SMALL, use_parity=False)
    err = np.hypot(table.std_err, table.std_err[::-1])
    assert np.all(np.abs(table.values - table.values[::-1]) <= 3 * err + 1e-12)


def test_classical_limit():
    ts = ThermoState(0.01)
    p = hcl_even()
    table = build_centroid_table(p, ts, grid=default_grid(p, ts, 9), cfg=SMALL, constant_mode="harmonic_TI")
    q = table.grid
    shape = table.fit(q) - table.fit(0.0)
    classical = evaluate(p, q) - evaluate(p, 0.0)
    # the leading quantum correction to the shape is beta (V''(q) - V''(0)) / 24
    assert np.all(np.abs(shape - classical) <= 3 * table.std_err + 0.05)


def test_worker_count_does_not_change_table():
    ts = ThermoState(1.0)
    grid = default_grid(hcl_even(), ts, 9)
    a = build_centroid_table(hcl_even(), ts, grid=grid, cfg=SMALL)
    b = build_centroid_table(hcl_even(), ts, grid=grid, cfg=SMALL, workers=2)
    np.testing.assert_array_equal(a.forces, b.forces)
    np.testing.assert_array_equal(a.fit._float, b.fit._float)


def test_seed_changes_samples():
    ts = ThermoState(1.0)
    a = centroid_mean_force(hcl_even(), ts, 1.0, SMALL)
    b = centroid_mean_force(hcl_even(), ts, 1.0, PathEnsembleConfig(**{**SMALL.__dict__, "seed": 8}))
    assert a.force != b.force


def test_non_confining_rejected():
    with pytest.raises(NonConfiningPotential):
        centroid_mean_force(Polynomial((0, 0, 0, 1)), ThermoState(1.0), 0.0, SMALL)
    with pytest.raises(NonConfiningPotential):
        build_centroid_table(morse_hcl(), ThermoState(1.0), grid=np.linspace(-1, 1, 9), cfg=SMALL)


def test_grid_validation():
    with pytest.raises(ValueError):
        build_centroid_table(harmonic(), ThermoState(1.0), grid=np.linspace(-1, 1, 5), cfg=SMALL)
    with pytest.raises(ValueError):
        build_centroid_table(harmonic(), ThermoState(1.0), grid=np.geomspace(1, 2, 9), cfg=SMALL)


@given(st.floats(0.05, 50.0), st.floats(0.1, 4.0))
def test_reference_free_energy_converges(beta, omega):
    ts = ThermoState(beta)
    cont = harmonic_reference_free_energy(omega**2, ts)
    x = 0.5 * beta * omega
    assert cont == pytest.approx(math.log(math.sinh(x) / x) / beta, rel=1e-10, abs=1e-12)
    coarse = harmonic_reference_free_energy(omega**2, ts, 64)
    fine = harmonic_reference_free_energy(omega**2, ts, 1024)
    assert abs(fine - cont) <= abs(coarse - cont) + 1e-14


def test_ti_pin_is_exact_for_harmonic():
    ts = ThermoState(10.0)
    v, e = harmonic_ti_value(harmonic(), ts, 0.0, PathEnsembleConfig(beads=64, sweeps=400, burn_in=200, block_size=100, walkers=8))
    x = 5.0
    assert v == pytest.approx(math.log(math.sinh(x) / x) / 10.0, abs=1e-12)


def test_trapezoid_errors():
    grid = np.linspace(-1, 1, 5)
    vals, std = cumulative_trapezoid_with_errors(grid, 2 * grid, np.full(5, 0.1), 2)
    np.testing.assert_allclose(vals, [1.0, 0.25, 0.0, 0.25, 1.0])
    assert std[2] == 0.0 and std[0] == pytest.approx(std[-1])


def test_analytic_table_csv(tmp_path):
    t = analytic_harmonic_table(1.0, ThermoState(2.0))
    path = t.to_csv(tmp_path / "vc.csv", {"seed": 0})
    text = path.read_text()
    assert "# constant_mode: analytic" in text and "q_c,V,err" in text

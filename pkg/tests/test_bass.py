import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from herdsim.bass import (
    BassParams,
    abm_params,
    adoption_rate_series,
    bass_closed_form,
    bass_ode_solve,
    convergence_experiment,
    deviation,
    inflection_time,
)
from herdsim.errors import ArgumentError
from herdsim.kirman import continuum_rates, simulate
from herdsim.series import EventPath, SeedSpec, UniformSeries

FIG2 = BassParams(1000, 0.01, 0.275)


def test_pure_innovation_is_linear_ode():
    p = BassParams(500, 0.3, 0.0)
    t = np.linspace(0, 20, 201)
    x = bass_ode_solve(p, t).values
    exact = 500 * (1 - np.exp(-0.3 * t))
    assert np.allclose(x[1:], exact[1:], rtol=1e-6)


def test_matches_separation_of_variables_solution():
    t = np.linspace(0, 60, 601)
    assert np.allclose(bass_ode_solve(FIG2, t).values, bass_closed_form(FIG2, t), rtol=1e-8, atol=1e-8)


def test_inflection_time():
    t_star = inflection_time(FIG2)
    assert t_star == pytest.approx(math.log(27.5) / 0.285)
    assert t_star == pytest.approx(11.63, abs=0.01)
    t = np.linspace(0, 40, 40001)
    rate = np.gradient(bass_closed_form(FIG2, t), t)
    assert t[np.argmax(rate)] == pytest.approx(t_star, abs=2e-3)


def test_saturation_and_monotonicity():
    t = np.linspace(0, 200, 2001)
    x = bass_ode_solve(FIG2, t).values
    assert np.all(np.diff(x) >= 0)
    assert x[-1] == pytest.approx(1000, abs=1e-6 * 1000)


def test_step_halving_invariance():
    t = np.linspace(0, 40, 81)
    a = bass_ode_solve(FIG2, t, max_step=0.02).values
    b = bass_ode_solve(FIG2, t, max_step=0.01).values
    assert np.max(np.abs(a - b)) / 1000 <= 1e-8


def test_grid_validation():
    with pytest.raises(ArgumentError):
        bass_ode_solve(FIG2, [1.0, 2.0])
    with pytest.raises(ArgumentError):
        bass_ode_solve(FIG2, [0.0, 1.0, 3.0])
    with pytest.raises(ArgumentError):
        BassParams(10, 0.0, 0.0)


def test_adoption_rate_examples():
    lin = UniformSeries(0.0, 0.1, np.arange(0, 5.01, 0.1))
    assert np.allclose(adoption_rate_series(lin, 0.5).values, 1.0)
    const = UniformSeries(0.0, 0.1, np.full(30, 7.0))
    assert np.allclose(adoption_rate_series(const, 1.0).values, 0.0)
    with pytest.raises(ArgumentError):
        adoption_rate_series(const, 10.0)
    with pytest.raises(ArgumentError):
        adoption_rate_series(const, 0.25)


def test_adoption_rate_from_event_path():
    path = EventPath([0.0, 0.4, 1.3], [0, 1, 2], end=2.0)
    r = adoption_rate_series(path, 1.0)
    assert list(r.values) == [1.0, 1.0]


@given(st.floats(0.0, 1.0))
def test_macroscopic_drift_identity(x):
    pp, pm = continuum_rates(abm_params(FIG2), x)
    assert FIG2.n_potential * pp == pytest.approx((1 - x) * (0.01 + 0.275 * x), rel=1e-12, abs=1e-15)
    assert pm == 0


def test_abm_adoption_is_monotone():
    path = simulate(abm_params(BassParams(200, 0.01, 0.275)), 0, 100.0, SeedSpec(1))
    assert np.all(np.diff(path.values) == 1) and path.values[-1] == 200


def test_deviation_is_reproducible_and_ordered():
    a = deviation(FIG2, 1.0, 30.0, SeedSpec(3))
    assert a == deviation(FIG2, 1.0, 30.0, SeedSpec(3))
    res = convergence_experiment([(1000, 0.1), (1000, 1.0), (10000, 1.0)], 0.01, 0.275, 30.0, SeedSpec(5), 9)
    med = [r["median"] for r in res]
    assert med[0] > med[1] > med[2]

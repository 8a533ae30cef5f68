import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from herdsim.errors import ArgumentError, DomainError, SingularityError
from herdsim.kirman import (
    KirmanParams,
    MarketMap,
    absolute_return,
    continuum_rates,
    max_fixed_step,
    mood_flip,
    price_and_return,
    simulate,
    simulate_fixed_step,
    simulate_grid,
    simulate_many,
    stationary_distribution,
    step_probabilities,
    transition_rates,
)
from herdsim.series import SeedSpec, UniformSeries

FIG1 = KirmanParams(100, 0.2, 0.2, 5.0)
BASS = KirmanParams(1000, 0.01, 0.0, 0.275, coupling="extensive", unidirectional=True)


def test_rate_examples():
    assert transition_rates(FIG1, 50)[0] == pytest.approx(12510.0)
    assert transition_rates(FIG1, 100)[0] == 0.0
    assert transition_rates(FIG1, 0)[1] == 0.0
    assert transition_rates(BASS, 0) == (pytest.approx(10.0), 0.0)


def test_rate_state_validation():
    with pytest.raises(ArgumentError):
        transition_rates(FIG1, 101)
    with pytest.raises(ArgumentError):
        transition_rates(FIG1, -1)


def test_param_validation():
    with pytest.raises(ArgumentError):
        KirmanParams(1, 0.1, 0.1, 1.0)
    with pytest.raises(ArgumentError):
        KirmanParams(10, 0.0, 0.1, 0.0)
    with pytest.raises(ArgumentError):
        KirmanParams(10, -0.1, 0.1, 1.0)
    with pytest.raises(ArgumentError):
        KirmanParams(10, 0.1, 0.1, 1.0, coupling="local")


@given(
    st.integers(2, 500), st.floats(0, 20), st.floats(0, 20), st.floats(0.01, 10),
    st.sampled_from(["global", "extensive"]), st.floats(0, 2), st.data(),
)
def test_discrete_continuum_relation(n, s1, s2, h, coupling, alpha, data):
    p = KirmanParams(n, s1, s2, h, coupling, alpha)
    x = data.draw(st.integers(0, n))
    dt = 1e-4
    pu, pd = step_probabilities(p, x, dt)
    cu, cd = continuum_rates(p, x / n)
    assert pu == pytest.approx(n * n * cu * dt, rel=1e-12, abs=1e-300)
    assert pd == pytest.approx(n * n * cd * dt, rel=1e-12, abs=1e-300)
    up, down = transition_rates(p, x)
    assert math.isfinite(up) and math.isfinite(down) and up >= 0 and down >= 0


def test_extensive_drift_identity():
    # N * pi_plus(x) equals the adoption right-hand side (1 - x)(sigma + h x)
    for x in np.linspace(0, 1, 11):
        pp, pm = continuum_rates(BASS, x)
        assert BASS.n_agents * pp == pytest.approx((1 - x) * (0.01 + 0.275 * x), rel=1e-12)
        assert pm == 0.0


def test_feedback_rates():
    p = KirmanParams(10, 0.5, 0.5, 2.0, feedback_alpha=1.0)
    up, down = transition_rates(p, 0)
    assert up == pytest.approx(10 * 0.5) and down == 0.0
    # y = 4/6 scales sigma2 and h
    f = 4 / 6
    up, down = transition_rates(p, 4)
    assert up == pytest.approx(6 * (0.5 + 2.0 * f * 4))
    assert down == pytest.approx(4 * f * (0.5 + 2.0 * 6))
    up, down = transition_rates(p, 10)
    assert up == 0.0 and math.isfinite(down) and down > 0


def test_stationary_distribution_is_normalized_and_balanced():
    pi = stationary_distribution(FIG1)
    assert pi.sum() == pytest.approx(1.0)
    for x in range(100):
        flux_up = pi[x] * transition_rates(FIG1, x)[0]
        flux_down = pi[x + 1] * transition_rates(FIG1, x + 1)[1]
        assert flux_up == pytest.approx(flux_down, rel=1e-9)


@pytest.mark.parametrize(
    "params, horizon",
    [(FIG1, 2e4), (KirmanParams(100, 16.0, 16.0, 5.0), 2e3), (KirmanParams(50, 1.0, 3.0, 0.05, "extensive"), 2e5)],
)
def test_detailed_balance_total_variation(params, horizon):
    _, occ = simulate_grid(params, params.n_agents // 2, horizon, 1.0, SeedSpec(11))
    tv = 0.5 * np.abs(occ / occ.sum() - stationary_distribution(params)).sum()
    assert tv < 0.02


def test_phase_shapes():
    s, occ = simulate_grid(FIG1, 50, 2000.0, 0.1, SeedSpec(1))
    hist = np.histogram(s.values / 100, bins=10, range=(0, 1))[0]
    assert hist[0] > hist[4] and hist[-1] > hist[5]
    s, occ = simulate_grid(KirmanParams(100, 16.0, 16.0, 5.0), 50, 200.0, 0.01, SeedSpec(1))
    hist = np.histogram(s.values / 100, bins=10, range=(0, 1))[0]
    assert np.argmax(hist) in (4, 5)
    assert hist[0] < hist[4] and hist[-1] < hist[5]


def test_jumps_are_unit_and_deterministic():
    a = simulate(FIG1, 50, 5.0, SeedSpec(7))
    b = simulate(FIG1, 50, 5.0, SeedSpec(7))
    assert np.array_equal(a.times, b.times) and np.array_equal(a.values, b.values)
    assert set(np.abs(np.diff(a.values))) == {1}
    c = simulate(FIG1, 50, 5.0, SeedSpec(7, 1))
    assert not np.array_equal(a.values[:50], c.values[:50])


def test_grid_matches_event_path():
    path = simulate(FIG1, 50, 20.0, SeedSpec(3))
    grid, occ = simulate_grid(FIG1, 50, 20.0, 0.5, SeedSpec(3))
    from herdsim.series import resample
    assert np.array_equal(resample(path, 0.5).values, grid.values)
    assert np.allclose(occ, path.occupation(101))


def test_absorbing_zero_without_idiosyncratic_moves():
    p = KirmanParams(100, 0.0, 0.0, 5.0)
    path = simulate(p, 0, 100.0, SeedSpec(1))
    assert len(path) == 1 and path.values[0] == 0 and path.t_end == 100.0


def test_unidirectional_saturates_and_never_decreases():
    path = simulate(BASS, 0, 500.0, SeedSpec(5))
    assert path.values[-1] == BASS.n_agents
    assert np.all(np.diff(path.values) == 1)


def test_exponential_waiting_times():
    # at X = 0 with sigma1 only the first waiting time is Exp(N sigma1)
    p = KirmanParams(10, 1.0, 1.0, 0.0)
    waits = [simulate(p, 0, 1e3, SeedSpec(9, i), max_events=2).times[1] for i in range(3000)]
    from scipy import stats
    assert stats.kstest(waits, "expon", args=(0, 1 / 10.0)).pvalue > 1e-3


def test_fixed_step_scheme():
    limit = max_fixed_step(FIG1)
    assert limit == pytest.approx(1 / max(sum(transition_rates(FIG1, x)) for x in range(101)))
    with pytest.raises(ArgumentError):
        simulate_fixed_step(FIG1, 50, 10, 2 * limit, SeedSpec(1))
    s = simulate_fixed_step(FIG1, 50, 200_000, limit, SeedSpec(1))
    assert set(np.unique(np.abs(np.diff(s.values)))) <= {0.0, 1.0}
    assert s.values.min() >= 0 and s.values.max() <= 100


def test_simulate_many_ordered_and_reproducible():
    a = simulate_many(FIG1, 50, 5.0, SeedSpec(2), 3, dt_out=0.5)
    b = [simulate_grid(FIG1, 50, 5.0, 0.5, SeedSpec(2, i))[0] for i in range(3)]
    for x, y in zip(a, b):
        assert np.array_equal(x.values, y.values)


def test_absolute_return():
    s = absolute_return(UniformSeries(0, 1, [0.5, 0.0, 0.9]))
    assert np.allclose(s.values, [1.0, 0.0, 9.0])
    with pytest.raises(SingularityError):
        absolute_return(UniformSeries(0, 1, [0.2, 1.0]))
    with pytest.raises(DomainError):
        absolute_return(UniformSeries(0, 1, [-0.1]))


@given(st.lists(st.floats(0, 0.999), min_size=2, max_size=30))
def test_absolute_return_monotone(xs):
    xs = np.sort(xs)
    y = absolute_return(UniformSeries(0, 1, xs)).values
    assert np.all(y >= 0) and np.all(np.diff(y) >= 0)


def test_price_and_return_examples():
    price, ret = price_and_return(UniformSeries(0, 0.5, [0.5] * 6), MarketMap(1, 1, 1.0))
    assert np.allclose(price.values, math.e) and np.allclose(ret.values, 0.0)
    assert ret.t0 == 1.0 and len(ret) == 4
    price, _ = price_and_return(UniformSeries(0, 1, [0.0] * 4), MarketMap(1, 3.5, 1.0),
                                UniformSeries(0, 1, [1, -1, 1, -1]))
    assert np.allclose(price.values, 3.5)
    x = UniformSeries(0, 1.0, [0.5, 2 / 3, 2 / 3])
    _, ret = price_and_return(x, MarketMap(1, 1, 1.0))
    assert ret.values[0] == pytest.approx(1.0)


def test_price_errors():
    with pytest.raises(SingularityError):
        price_and_return(UniformSeries(0, 1, [0.5, 1.0]), MarketMap())
    with pytest.raises(ArgumentError):
        price_and_return(UniformSeries(0, 1, [0.5, 0.5, 0.5]), MarketMap(window_T=1.5))
    with pytest.raises(ArgumentError):
        MarketMap(r0=0)


def test_mood_flip_statistics():
    m = mood_flip(200_000, 0.1, 0.5, SeedSpec(4))
    assert set(np.unique(m.values)) == {-1.0, 1.0}
    flips = np.mean(m.values[1:] != m.values[:-1])
    assert flips == pytest.approx(0.5 * (1 - math.exp(-0.1)), rel=0.03)
    assert np.all(mood_flip(10, 0.1, 0.0, SeedSpec(4)).values == 1.0)

"""Mean sampling, compensated time, occupation densities, ingestion and recipe loading."""

import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from herdsim import recipes
from herdsim.analysis import estimate_pdf, pool_histograms
from herdsim.bursts import extract_bursts, pool_bursts
from herdsim.errors import ArgumentError, DomainError, ParseError
from herdsim.ingest import RegridWarning, ingest_empirical
from herdsim.sde import StepControl, custom_model, integrate, integrate_grid
from herdsim.series import EventPath, UniformSeries, write_series_csv


@pytest.fixture(scope="module")
def ramp():
    # dy = dt exactly: the interval mean over [(k-1)d, kd] is y0 + (k - 1/2) d
    return custom_model("ramp", lambda y: 1.0, lambda y: 0.0)


@pytest.fixture(scope="module")
def frozen():
    return custom_model("frozen", lambda y: 0.0, lambda y: 0.0)


def test_mean_sampling_of_linear_path_is_exact(ramp):
    d = 0.25
    s = integrate_grid(ramp, 1.0, 5.0, d, StepControl(kappa=0.5, dt_max=0.01), seed=1, sampling="mean")
    k = np.arange(1, len(s) + 1)
    assert s.t0 == d and len(s) == 20
    np.testing.assert_allclose(s.values, 1.0 + (k - 0.5) * d, rtol=0, atol=1e-12)
    assert s.meta["sampling"] == "mean"


def test_point_sampling_of_linear_path(ramp):
    s = integrate_grid(ramp, 1.0, 5.0, 0.25, StepControl(kappa=0.5, dt_max=0.01), seed=1)
    np.testing.assert_allclose(s.values, 1.0 + s.times, atol=1e-12)


def test_sampling_mode_is_validated(ramp):
    with pytest.raises(ArgumentError):
        integrate_grid(ramp, 1.0, 1.0, 0.1, sampling="median")


def test_compensated_time_tracks_step_count(frozen):
    # 30000 equal steps of a non-representable length; naive summation drifts by many ulps
    h = 1e-6 / 3
    path = integrate(frozen, 0.5, 0.01, StepControl(kappa=1.0, dt_max=h, dt_min=1e-18), seed=0)
    t = path.times
    k = np.arange(t.size)
    exact = k * h
    assert np.all(np.diff(t) > 0)
    inner = slice(1, -1)
    assert np.max(np.abs(t[inner] - exact[inner]) / np.spacing(exact[inner])) <= 2
    assert t[-1] == pytest.approx(0.01, abs=1e-17)


# --- occupation-time densities ------------------------------------------------------------------


def test_occupation_density_weights_by_holding_time():
    # state 2 held 3 time units, state 20 held 1: probability mass 3/4 and 1/4
    path = EventPath([0.0, 3.0], [2.0, 20.0], end=4.0)
    h = estimate_pdf(path, 4, bounds=(1.0, 100.0))
    mass = h.density * h.widths
    assert h.total == pytest.approx(4.0)
    assert mass.sum() == pytest.approx(1.0)
    assert mass[np.searchsorted(h.edges, 2.0) - 1] == pytest.approx(0.75)
    assert mass[np.searchsorted(h.edges, 20.0) - 1] == pytest.approx(0.25)


def test_occupation_density_pools_paths():
    a = EventPath([0.0, 1.0], [2.0, 5.0], end=2.0)
    b = EventPath([0.0], [5.0], end=2.0)
    h = estimate_pdf([a, b], 4, bounds=(1.0, 10.0))
    assert h.total == pytest.approx(4.0)
    mass = h.density * h.widths
    assert mass[np.searchsorted(h.edges, 5.0) - 1] == pytest.approx(0.75)


@given(st.lists(st.floats(0.1, 10.0), min_size=2, max_size=40), st.integers(1, 4))
def test_pooled_histograms_equal_one_pass(holds, parts):
    values = np.geomspace(1.5, 900.0, len(holds))
    times = np.concatenate(([0.0], np.cumsum(holds)[:-1]))
    path = EventPath(times, values, end=float(np.sum(holds)))
    whole = estimate_pdf(path, 5, bounds=(1.0, 1000.0))
    cuts = np.array_split(np.arange(len(holds)), parts)
    pieces = [EventPath(times[c] - times[c[0]], values[c], end=float(np.sum(np.asarray(holds)[c])))
              for c in cuts if c.size]
    pooled = pool_histograms(estimate_pdf(p, 5, bounds=(1.0, 1000.0)) for p in pieces)
    np.testing.assert_allclose(pooled.density, whole.density, rtol=1e-12, atol=1e-15)
    assert pooled.total == pytest.approx(whole.total)


def test_pool_histograms_rejects_mismatched_edges():
    a = estimate_pdf(np.array([1.0, 2.0, 3.0]), 4, bounds=(1.0, 10.0))
    b = estimate_pdf(np.array([1.0, 2.0, 3.0]), 4, bounds=(1.0, 20.0))
    with pytest.raises(ArgumentError):
        pool_histograms([a, b])
    with pytest.raises(ArgumentError):
        pool_histograms([])


def test_zero_occupation_is_an_error():
    with pytest.raises(DomainError):
        estimate_pdf(EventPath([0.0], [5.0], end=0.0), 4, bounds=(1.0, 10.0))


# --- ingestion ----------------------------------------------------------------------------------


def _csv(tmp_path, name, values, dt=60.0, t0=0.0):
    return write_series_csv(UniformSeries(t0, dt, np.asarray(values, float)), tmp_path / name, sidecar=False)


def test_ingest_identity_passthrough(tmp_path):
    v = np.array([0.5, 1.5, 3.0, 0.25, 2.0])
    (s,) = ingest_empirical([_csv(tmp_path, "a.csv", v)], ma_window=1, normalize_series=False)
    np.testing.assert_array_equal(s.values, v)
    assert s.dt == 60.0 and s.t0 == 0.0


def test_ingest_constant_file_normalizes_to_ones(tmp_path):
    (s,) = ingest_empirical([_csv(tmp_path, "c.csv", np.full(50, 7.25))], ma_window=5, normalize_series=True)
    np.testing.assert_allclose(s.values, 1.0, rtol=0, atol=1e-15)
    assert len(s) == 46


def test_ingest_applies_average_before_normalization(tmp_path):
    v = np.arange(1.0, 11.0)
    (s,) = ingest_empirical([_csv(tmp_path, "r.csv", v)], ma_window=3, normalize_series=True)
    avg = np.convolve(v, np.ones(3) / 3, mode="valid")
    np.testing.assert_allclose(s.values, avg / np.mean(np.abs(avg)), rtol=1e-14)
    assert s.t0 == pytest.approx(120.0)


def test_ingest_pooled_bursts_count_per_file_sum(tmp_path):
    a = np.array([0, 3, 3, 0, 0, 4, 0, 5, 5, 0], float)
    b = np.array([0, 0, 6, 0, 7, 7, 7, 0, 8, 0, 0], float)
    sets = ingest_empirical([_csv(tmp_path, "a.csv", a), _csv(tmp_path, "b.csv", b)])
    per = [len(extract_bursts(s, 1.0)) for s in sets]
    assert per == [3, 3]
    assert len(pool_bursts(extract_bursts(s, 1.0) for s in sets)) == sum(per)


def test_ingest_reports_parse_error_line(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("t,value\n0,1\n60,oops\n120,3\n")
    with pytest.raises(ParseError, match="line 3"):
        ingest_empirical([p])


def test_ingest_tolerates_small_jitter_and_regrids_large(tmp_path):
    t = 60.0 * np.arange(20)
    small = tmp_path / "small.csv"
    small.write_text("t,value\n" + "".join(f"{float(ti * (1 + 1e-9 * (i % 2)))!r},{i + 1}\n" for i, ti in enumerate(t)))
    with warnings.catch_warnings():
        warnings.simplefilter("error", RegridWarning)
        (s,) = ingest_empirical([small])
    assert len(s) == 20
    big = tmp_path / "big.csv"
    tt = t.copy()
    tt[5] += 20.0
    big.write_text("t,value\n" + "".join(f"{float(ti)!r},{i + 1}\n" for i, ti in enumerate(tt)))
    with pytest.warns(RegridWarning):
        (s,) = ingest_empirical([big])
    assert "regrid_warning" in s.meta


@pytest.mark.parametrize("kw", [{"ma_window": 0}, {"ma_window": 2.5}])
def test_ingest_argument_errors(tmp_path, kw):
    with pytest.raises(ArgumentError):
        ingest_empirical([_csv(tmp_path, "a.csv", [1.0, 2.0, 3.0])], **kw)


def test_ingest_needs_files():
    with pytest.raises(ArgumentError):
        ingest_empirical([])


# --- recipes ------------------------------------------------------------------------------------


def test_bundled_recipes_cover_all_figures():
    assert {"fig1", "fig2", "fig3", "fig4", "fig5", "fig7a"} <= set(recipes.available())
    for name in recipes.available():
        cfg = recipes.load_recipe(name)
        assert cfg["recipe"] in recipes.RECIPES
        assert isinstance(cfg["seed"], int)


def test_recipe_rejects_unknown_override_and_name():
    with pytest.raises(ArgumentError):
        recipes.run_recipe("fig2", {"no_such_key": 1})
    with pytest.raises(ArgumentError):
        recipes.load_recipe("fig99")


def test_small_bass_recipe_runs(tmp_path):
    rep = recipes.run_recipe("fig2", {"realizations": 3, "settings": [[200, 1.0], [2000, 1.0]]})
    assert [c.criterion for c in rep["checks"]] == [3, 3]
    assert len(rep["results"]) == 2
    assert all(0 < r["median"] < 1 for r in rep["results"])


def test_burst_duration_stats_on_exact_samples():
    from herdsim.bursts import BesselMap, burst_duration_cdf

    bmap = BesselMap(2.0, 4.0, 2.0)
    t_min = bmap.crossover / 50
    # inverse-CDF samples of the exact law give a small KS distance and the right late rate
    grid = np.geomspace(t_min, 40 * bmap.crossover, 4000)
    cdf = burst_duration_cdf(bmap, grid, "series", t_min)
    u = (np.arange(3000) + 0.5) / 3000
    d = np.interp(u, cdf, grid)
    st_ = recipes.burst_duration_stats(d, bmap, t_min)
    assert st_["ks"] < 0.01
    assert st_["late_rate"] / st_["late_rate_theory"] == pytest.approx(1.0, abs=0.15)
    assert math.isfinite(st_["early_slope"])

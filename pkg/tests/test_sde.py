import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate as quad, special, stats

from herdsim.errors import ArgumentError, BoundaryError, DomainError, IntegrationError, SingularityError
from herdsim.sde import (
    MODELS,
    StepControl,
    custom_model,
    herding_exponents,
    integrate,
    integrate_grid,
    integrate_many,
    make_model,
    predict_beta,
    qgaussian_pdf,
)
from herdsim.series import SeedSpec


def test_predict_beta():
    assert predict_beta(3, 2.5) == 1.0
    assert predict_beta(4, 2.5) == pytest.approx(4 / 3)
    assert predict_beta(4, 1.5) == pytest.approx(2.0)
    with pytest.raises(SingularityError, match="eta != 1"):
        predict_beta(4, 1)


def test_qgaussian_pdf():
    assert qgaussian_pdf(2, 0.0) == pytest.approx(1 / math.pi)
    assert qgaussian_pdf(3, 0.0) == pytest.approx(0.5)
    total, _ = quad.quad(lambda y: qgaussian_pdf(4, y), -100, 100, limit=200)
    assert total == pytest.approx(1.0, abs=1e-4)
    with pytest.raises(DomainError):
        qgaussian_pdf(1.0, 0.0)


@given(st.floats(1.2, 12.0))
def test_qgaussian_is_scaled_student_t(lam):
    # the density is a Student t with lam - 1 degrees of freedom in t = y sqrt(lam - 1)
    y = np.linspace(-20, 20, 41)
    nu = lam - 1
    ref = stats.t(df=nu).pdf(y * math.sqrt(nu)) * math.sqrt(nu)
    assert np.allclose(qgaussian_pdf(lam, y), ref, rtol=1e-9)


def test_herding_exponents():
    assert herding_exponents(2, 1) == {"eta": 2.0, "lambda": 4.0, "pdf_exponent": 4.0, "beta": 1.5}
    r = herding_exponents(0.5, 1)
    assert r["pdf_exponent"] == 2.5 and r["beta"] == 0.75
    r = herding_exponents(2, 0)
    assert r["pdf_exponent"] == 3 and r["beta"] == 1
    with pytest.raises(ArgumentError):
        herding_exponents(2, -1)


@given(st.floats(0.0, 3.0), st.floats(1.0, 4.0))
def test_herding_exponents_agree_with_power_class(eps2, alpha):
    r = herding_exponents(eps2, alpha)
    assert r["beta"] == pytest.approx(predict_beta(r["lambda"], r["eta"]), rel=1e-12)


def _ref(name, p, y):
    if name == "population":
        return p["sigma1"] * (1 - y) - p["sigma2"] * y, math.sqrt(2 * p["h"] * y * (1 - y))
    if name == "power_general":
        return (p["eta"] - p["lambda"] / 2) * y ** (2 * p["eta"] - 1), y ** p["eta"]
    if name == "power_qgauss":
        return (p["eta"] - p["lambda"] / 2) * (1 + y * y) ** (p["eta"] - 1) * y, (1 + y * y) ** (p["eta"] / 2)
    if name == "power_expmin":
        return (p["eta"] - p["lambda"] / 2 + p["m"] / 2 * (p["y_min"] / y) ** p["m"]) * y ** (2 * p["eta"] - 1), y ** p["eta"]
    if name == "cev":
        mu = (p["eta"] - 1) * p["y_min"] ** (2 * (p["eta"] - 1))
        return mu * y, y ** p["eta"]
    if name == "return_two_region":
        d = p["eps"] * math.sqrt(1 + y * y) + 1
        return (p["eta"] - p["lambda"] / 2) * (1 + y * y) ** (p["eta"] - 1) * y / d**2, (1 + y * y) ** (p["eta"] / 2) / d
    if name == "herding_y":
        return (p["sigma1"] - y * (p["sigma2"] - 2 * p["h"])) * (1 + y), math.sqrt(2 * p["h"] * y) * (1 + y)
    if name == "herding_y_tau":
        tau = y ** -p["alpha"]
        return (p["eps1"] + y * (2 - p["eps2"]) / tau) * (1 + y), math.sqrt(2 * y / tau) * (1 + y)
    if name == "herding_asym":
        return (2 - p["eps2"]) * y ** (2 + p["alpha"]), math.sqrt(2) * y ** ((3 + p["alpha"]) / 2)
    if name == "herding_cev_lim":
        return p["eps1"] * y, math.sqrt(2) * y ** ((3 + p["alpha"]) / 2)
    raise KeyError(name)


PARAMS = {
    "population": dict(sigma1=0.3, sigma2=0.7, h=2.0),
    "power_general": dict(eta=2.5, lam=4.0),
    "power_qgauss": dict(eta=1.5, lam=3.0),
    "power_expmin": dict(eta=2.0, lam=3.5, m=2.0, y_min=0.5),
    "cev": dict(eta=2.5, y_min=1.0),
    "return_two_region": dict(eta=2.5, lam=3.6, eps=0.3),
    "herding_y": dict(sigma1=0.2, sigma2=0.4, h=5.0),
    "herding_y_tau": dict(eps1=1.0, eps2=1.5, alpha=1.0),
    "herding_asym": dict(eps2=1.0, alpha=2.0),
    "herding_cev_lim": dict(eps1=2.0, alpha=1.0),
}


def test_registry_is_complete():
    assert set(MODELS) == set(PARAMS)


@pytest.mark.parametrize("name", sorted(PARAMS))
@given(u=st.floats(0.01, 0.99))
def test_registry_coefficients(name, u):
    m = make_model(name, **PARAMS[name])
    y = u if name == "population" else (u - 0.5) * 20 if m.domain[0] < 0 else 0.01 + 30 * u
    a, b = _ref(name, m.params, y)
    assert m.drift(y) == pytest.approx(a, rel=1e-12, abs=1e-14)
    assert m.diffusion(y) == pytest.approx(b, rel=1e-12, abs=1e-14)
    assert m.diffusion(y) >= 0


def test_model_validation():
    with pytest.raises(ArgumentError):
        make_model("nope")
    with pytest.raises(ArgumentError):
        make_model("power_general", eta=2.5)
    with pytest.raises(ArgumentError):
        make_model("power_general", eta=2.5, lam=4, foo=1)
    with pytest.raises(ArgumentError):
        make_model("population", sigma1=0.1, sigma2=0.1, h=0.0)
    with pytest.raises(ArgumentError):
        make_model("power_general", eta=2.5, lam=4, y_min=10, y_max=1)
    with pytest.raises(ArgumentError):
        StepControl(kappa=0)
    with pytest.raises(ArgumentError):
        StepControl(dt_min=1, dt_max=0.1)


def test_start_outside_domain():
    m = make_model("population", sigma1=0.2, sigma2=0.2, h=5)
    with pytest.raises(DomainError):
        integrate(m, 1.0, 1.0)
    with pytest.raises(DomainError):
        integrate(make_model("power_general", eta=2.5, lam=4), 0.5, 1.0)


def test_zero_diffusion_decay():
    m = custom_model("decay", lambda y: -y, lambda y: 0.0, domain=(0.0, math.inf))
    path = integrate(m, 1.0, 1.0, seed=SeedSpec(1))
    assert path.times[-1] == 1.0
    assert path.values[-1] == pytest.approx(math.exp(-1), abs=1e-3)


def test_geometric_brownian_limit():
    # eta = 1 and lambda = 2 remove the drift: log-increments are i.i.d. normal
    m = make_model("power_general", eta=1.0, lam=2.0, y_min=1e-12, y_max=1e12)
    s = integrate_grid(m, 1.0, 20.0, 0.01, StepControl(kappa=0.1), SeedSpec(4))
    inc = np.diff(np.log(s.values))
    assert stats.shapiro(inc[:4000]).pvalue > 1e-3
    assert inc.var() == pytest.approx(0.01, rel=0.06)
    assert abs(inc.mean() + 0.005) < 4 * math.sqrt(0.01 / inc.size)
    r = np.corrcoef(inc[:-1], inc[1:])[0, 1]
    assert abs(r) < 4 / math.sqrt(inc.size)


def test_grid_output_lands_on_grid():
    m = make_model("power_general", eta=2.5, lam=4)
    s = integrate(m, 2.0, 1.0, seed=1, dt_out=0.25)
    assert np.array_equal(s.times, [0, 0.25, 0.5, 0.75, 1.0])


def test_determinism():
    m = make_model("herding_y_tau", eps1=1, eps2=1, alpha=1)
    a = integrate_grid(m, 1.0, 50.0, 0.1, seed=SeedSpec(9))
    b = integrate_grid(m, 1.0, 50.0, 0.1, seed=SeedSpec(9))
    c = integrate_many(m, 1.0, 50.0, 0.1, SeedSpec(9), 2)
    assert np.array_equal(a.values, b.values)
    assert np.array_equal(a.values, c[0].values)
    assert not np.array_equal(c[0].values, c[1].values)


def test_boundary_policies():
    m = make_model("power_general", eta=2.5, lam=4, boundary="error", barriers=(1.0, 3.0))
    with pytest.raises(BoundaryError) as err:
        integrate(m, 2.0, 1e3, seed=1)
    assert err.value.state is not None
    m = make_model("power_general", eta=2.5, lam=4, boundary=("reflect", "absorb"), barriers=(1.0, 3.0))
    s = integrate_grid(m, 2.0, 1e3, 0.5, seed=1)
    assert s.values[-1] == 3.0 and "absorbed_at" in s.meta
    assert s.values.min() >= 1.0
    m = make_model("power_general", eta=2.5, lam=4, barriers=(1.0, 3.0))
    s = integrate_grid(m, 2.0, 200.0, 0.01, seed=2)
    assert s.values.min() >= 1.0 and s.values.max() <= 3.0


def test_population_reflecting_override():
    m = make_model("population", sigma1=0.2, sigma2=0.2, h=5, boundary="reflect")
    assert (m.lower.barrier, m.upper.barrier) == (0.005, 0.995)
    s = integrate_grid(m, 0.5, 50.0, 0.01, seed=3)
    assert s.values.min() >= 0.005 and s.values.max() <= 0.995


def test_blow_up_reports_state():
    m = custom_model("explode", lambda y: y * y, lambda y: 0.0, domain=(0.0, math.inf))
    with pytest.raises(IntegrationError) as err:
        integrate(m, 1.0, 2.0, seed=1)
    assert err.value.time is not None and abs(err.value.time - 1.0) < 0.01


def _fp_cdf(model, lo, hi, grid):
    """Stationary CDF p ~ exp(int 2a/b^2) / b^2 by quadrature."""
    ref = 0.5 * (lo + hi)
    def logp(y):
        i, _ = quad.quad(lambda u: 2 * model.drift(u) / model.diffusion(u) ** 2, ref, y, limit=200)
        return i - 2 * math.log(model.diffusion(y))
    dens = np.exp([logp(y) for y in grid])
    cdf = np.concatenate(([0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))))
    return cdf / cdf[-1]


def test_population_stationary_beta():
    m = make_model("population", sigma1=0.2, sigma2=0.2, h=5.0)
    # the quadrature oracle for the stationary law is a Beta(sigma1/h, sigma2/h) density
    grid = np.linspace(0.05, 0.95, 400)
    fp = _fp_cdf(m, 0.05, 0.95, grid)
    beta = stats.beta(0.04, 0.04)
    ref = (beta.cdf(grid) - beta.cdf(0.05)) / (beta.cdf(0.95) - beta.cdf(0.05))
    assert np.max(np.abs(fp - ref)) < 1e-4
    s = integrate_grid(m, 0.5, 2e4, 0.1, StepControl(kappa=0.1), SeedSpec(2))
    # a tenth of the mass lies within 1e-16 of x = 1 and rounds to 1.0, so compare
    # the CDFs on a grid that stays clear of both edges
    g = np.concatenate((np.geomspace(1e-12, 0.5, 200), 1 - np.geomspace(1e-12, 0.5, 200)))
    emp = np.searchsorted(np.sort(s.values), g, side="right") / s.values.size
    assert np.max(np.abs(emp - beta.cdf(g))) < 0.03


def test_population_unimodal_phase():
    m = make_model("population", sigma1=16.0, sigma2=16.0, h=5.0)
    s = integrate_grid(m, 0.5, 2e3, 0.01, StepControl(kappa=0.1), SeedSpec(2))
    assert stats.kstest(s.values, stats.beta(3.2, 3.2).cdf).statistic < 0.02


def test_population_absorbing_without_noise_source():
    m = make_model("population", sigma1=0.0, sigma2=0.0, h=5.0)
    s = integrate_grid(m, 0.003, 20.0, 0.1, seed=4)
    assert s.values[-1] in (0.0, 1.0)


def test_herding_y_stationary_law():
    m = make_model("herding_y", sigma1=1.0, sigma2=1.5, h=1.0)
    # y = x/(1-x) with x ~ Beta(sigma1/h, sigma2/h)
    s = integrate_grid(m, 1.0, 2e4, 0.1, StepControl(kappa=0.1), SeedSpec(5))
    x = s.values / (1 + s.values)
    assert stats.kstest(x, stats.beta(1.0, 1.5).cdf).statistic < 0.03


def test_power_general_stationary_law():
    m = make_model("power_general", eta=2.5, lam=4.0)
    s = integrate_grid(m, 1.5, 2e3, 0.01, StepControl(kappa=0.1), SeedSpec(6))
    cdf = lambda y: (1 - y**-3.0) / (1 - 1e4**-3.0)
    assert stats.kstest(s.values, cdf).statistic < 0.02


def test_herding_y_tau_stationary_law():
    m = make_model("herding_y_tau", eps1=2.0, eps2=2.0, alpha=0.0, y_min=1e-3, y_max=1e4)
    s = integrate_grid(m, 1.0, 2e3, 0.01, StepControl(kappa=0.1), SeedSpec(6))
    # density y / (2 (1 + y)^4) has CDF 1 - (1 + 3y) / (1 + y)^3
    cdf = lambda y: 1 - (1 + 3 * y) / (1 + y) ** 3
    assert stats.kstest(s.values, cdf).statistic < 0.03


def test_adaptive_agrees_with_fixed_tiny_steps():
    m = make_model("power_general", eta=2.5, lam=4.0, y_max=50.0)
    adaptive = integrate_grid(m, 1.5, 4e2, 0.01, StepControl(kappa=0.1), SeedSpec(7)).values
    fixed = integrate_grid(m, 1.5, 4e2, 0.01, StepControl(kappa=1.0, dt_max=2e-5, dt_min=2e-5), SeedSpec(8)).values
    assert stats.ks_2samp(adaptive, fixed).statistic < 0.02

"""Bass adoption dynamics and its agent-based counterpart.

The deterministic model is ``dX/dt = (N - X)(sigma + (h/N) X)`` with ``X(0) = 0``.
The microscopic model is the herding chain in unidirectional mode with extensive
coupling, so the ABM side reuses :mod:`herdsim.kirman` unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError
from .kirman import KirmanParams, simulate_grid
from .series import EventPath, SeedSpec, UniformSeries, resample

__all__ = [
    "BassParams",
    "bass_rhs",
    "bass_ode_solve",
    "bass_closed_form",
    "inflection_time",
    "adoption_rate_series",
    "abm_params",
    "deviation",
    "convergence_experiment",
]


@dataclass(frozen=True)
class BassParams:
    n_potential: int
    sigma: float
    h: float

    def __post_init__(self):
        if int(self.n_potential) != self.n_potential or self.n_potential < 1:
            raise ArgumentError("n_potential must be a positive integer")
        if self.sigma < 0 or self.h < 0 or not self.sigma + self.h > 0:
            raise ArgumentError("need sigma >= 0, h >= 0 and sigma + h > 0")


def bass_rhs(params: BassParams, x):
    n = params.n_potential
    return (n - x) * (params.sigma + params.h / n * x)


def bass_ode_solve(params: BassParams, t_grid, max_step: float = 0.01) -> UniformSeries:
    """Classical RK4 solution on an equally spaced grid starting at 0.

    Each grid interval is split into the fewest equal substeps not longer than
    ``max_step``.
    """
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size < 2 or t[0] != 0.0:
        raise ArgumentError("t_grid must be a 1-d array of at least two times starting at 0")
    dt = t[1] - t[0]
    if not dt > 0 or np.max(np.abs(np.diff(t) - dt)) > 1e-9 * max(dt, 1.0):
        raise ArgumentError("t_grid must be ascending and equally spaced")
    if not max_step > 0:
        raise ArgumentError("max_step must be positive")
    sub = max(1, math.ceil(dt / max_step - 1e-12))
    hstep = dt / sub
    out = np.empty(t.size)
    x = 0.0
    out[0] = x
    for i in range(1, t.size):
        for _ in range(sub):
            k1 = bass_rhs(params, x)
            k2 = bass_rhs(params, x + 0.5 * hstep * k1)
            k3 = bass_rhs(params, x + 0.5 * hstep * k2)
            k4 = bass_rhs(params, x + hstep * k3)
            x += hstep / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[i] = x
    return UniformSeries(0.0, float(dt), out, {"model": "bass_ode", "rk4_step": hstep,
                                              "n_potential": params.n_potential, "sigma": params.sigma, "h": params.h})


def bass_closed_form(params: BassParams, t):
    """``X(t) = N (1 - e^{-(s+h)t}) / (1 + (h/s) e^{-(s+h)t})`` (``N(1-e^{-st})`` when ``h = 0``)."""
    t = np.asarray(t, dtype=float)
    n, s, h = params.n_potential, params.sigma, params.h
    if s == 0:
        return np.zeros_like(t)
    e = np.exp(-(s + h) * t)
    return n * (1 - e) / (1 + (h / s) * e)


def inflection_time(params: BassParams) -> float:
    """Time of peak adoption rate, ``ln(h/sigma)/(sigma + h)``; 0 when ``h <= sigma``."""
    s, h = params.sigma, params.h
    if s == 0:
        return math.inf
    return max(0.0, math.log(h / s) / (s + h)) if h > 0 else 0.0


def adoption_rate_series(path, tau: float) -> UniformSeries:
    """``Delta X / tau`` over consecutive windows of width ``tau``.

    A uniform series must have ``tau`` as an integer multiple of its step; an
    event path is first sampled (hold) on a ``tau`` grid.
    """
    if not tau > 0:
        raise ArgumentError("tau must be positive")
    if isinstance(path, EventPath):
        if path.t_end - path.times[0] < tau:
            raise ArgumentError("tau exceeds the path horizon")
        grid = resample(path, tau)
    elif isinstance(path, UniformSeries):
        span = path.dt * (len(path) - 1)
        if tau > span * (1 + 1e-12):
            raise ArgumentError("tau exceeds the series horizon")
        ratio = tau / path.dt
        k = int(round(ratio))
        if k < 1 or abs(ratio - k) > 1e-9 * ratio:
            raise ArgumentError("tau must be a whole multiple of the series step")
        grid = UniformSeries(path.t0, tau, path.values[::k], path.meta)
    else:
        raise ArgumentError("path must be a UniformSeries or EventPath")
    v = grid.values
    return UniformSeries(grid.t0, tau, np.diff(v) / tau, {**grid.meta, "observable": "adoption_rate", "tau": tau})


def abm_params(params: BassParams) -> KirmanParams:
    """The unidirectional, extensive herding chain equivalent to ``params``."""
    return KirmanParams(params.n_potential, params.sigma, 0.0, params.h, coupling="extensive", unidirectional=True)


def deviation(params: BassParams, tau: float, horizon: float, seed) -> float:
    """Normalized max deviation ``max|r_abm - r_ode| / max r_ode`` of one ABM run."""
    abm, _ = simulate_grid(abm_params(params), 0, horizon, tau, seed)
    r_abm = adoption_rate_series(abm, tau).values
    r_ode = adoption_rate_series(bass_ode_solve(params, abm.times), tau).values
    return float(np.max(np.abs(r_abm - r_ode)) / np.max(r_ode))


def convergence_experiment(settings, sigma: float, h: float, horizon: float, seed: SeedSpec, realizations: int = 21):
    """Median deviation for each ``(N, tau)`` in ``settings``.

    Returns a list of dicts with ``n``, ``tau``, ``median`` and the per-seed values.
    Realization ``i`` of every setting uses stream ``seed.realization(i)``.
    """
    out = []
    for n, tau in settings:
        p = BassParams(int(n), sigma, h)
        devs = [deviation(p, tau, horizon, seed.realization(i)) for i in range(realizations)]
        out.append({"n": int(n), "tau": float(tau), "median": float(np.median(devs)), "deviations": devs})
    return out

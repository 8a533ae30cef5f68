"""Two-state herding model of N agents simulated as a continuous-time Markov chain.

State ``X`` counts agents in the tracked state. With herding coefficient
``g = h`` (global coupling) or ``g = h/N`` (extensive coupling) the jump rates are

    up(X)   = (N - X) * (sigma1 + g * X)
    down(X) = X * (sigma2 + g * (N - X))

Optional inter-event-time feedback ``tau(y) = y**-alpha`` with ``y = X/(N-X)``
multiplies ``sigma2`` and ``g`` by ``y**alpha``. At ``X = N`` the ratio is
regularized to ``y = N`` (as if one agent remained) so every rate stays finite.
Unidirectional mode forces ``down = 0`` and describes product adoption.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba as nb
import numpy as np

from .errors import ArgumentError, DomainError, SingularityError
from .series import EventPath, SeedSpec, UniformSeries, as_generator

__all__ = [
    "KirmanParams",
    "MarketMap",
    "transition_rates",
    "continuum_rates",
    "step_probabilities",
    "stationary_distribution",
    "simulate",
    "simulate_grid",
    "simulate_fixed_step",
    "simulate_many",
    "absolute_return",
    "price_and_return",
    "mood_flip",
]

COUPLINGS = ("global", "extensive")


@dataclass(frozen=True)
class KirmanParams:
    """Parameters of the herding chain.

    Parameters
    ----------
    n_agents : int
        Population size ``N >= 2``.
    sigma1, sigma2 : float
        Idiosyncratic switching rates into and out of the tracked state.
    h : float
        Herding rate.
    coupling : {"global", "extensive"}
        ``extensive`` replaces ``h`` by ``h/N``.
    feedback_alpha : float
        Exponent of the ``tau(y) = y**-alpha`` activity feedback; 0 disables it.
    unidirectional : bool
        Forbid transitions out of the tracked state (adoption dynamics).
    """

    n_agents: int
    sigma1: float
    sigma2: float
    h: float
    coupling: str = "global"
    feedback_alpha: float = 0.0
    unidirectional: bool = False

    def __post_init__(self):
        if int(self.n_agents) != self.n_agents or self.n_agents < 2:
            raise ArgumentError(f"n_agents must be an integer >= 2, got {self.n_agents!r}")
        for name in ("sigma1", "sigma2", "h", "feedback_alpha"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ArgumentError(f"{name} must be finite and non-negative, got {v!r}")
        if self.coupling not in COUPLINGS:
            raise ArgumentError(f"coupling must be one of {COUPLINGS}, got {self.coupling!r}")
        if not self.sigma1 + self.h > 0:
            raise ArgumentError("sigma1 + h must be positive")
        object.__setattr__(self, "n_agents", int(self.n_agents))

    @property
    def herding(self) -> float:
        """Effective pairwise herding coefficient ``g``."""
        return self.h / self.n_agents if self.coupling == "extensive" else self.h

    def as_dict(self):
        return {
            "n_agents": self.n_agents,
            "sigma1": self.sigma1,
            "sigma2": self.sigma2,
            "h": self.h,
            "coupling": self.coupling,
            "feedback_alpha": self.feedback_alpha,
            "unidirectional": self.unidirectional,
        }


@nb.njit(cache=True, nogil=True)
def _rates(n, s1, s2, g, alpha, uni, x):
    up = (n - x) * (s1 + g * x)
    if uni:
        return up, 0.0
    if alpha > 0.0:
        f = (x / max(n - x, 1)) ** alpha
        up = (n - x) * (s1 + g * f * x)
        down = x * f * (s2 + g * (n - x))
    else:
        down = x * (s2 + g * (n - x))
    return up, down


def _check_state(params, x):
    if int(x) != x or not 0 <= x <= params.n_agents:
        raise ArgumentError(f"state must be an integer in [0, {params.n_agents}], got {x!r}")
    return int(x)


def _kernel_args(p: KirmanParams):
    return (p.n_agents, float(p.sigma1), float(p.sigma2), float(p.herding), float(p.feedback_alpha), bool(p.unidirectional))


def transition_rates(params: KirmanParams, x: int) -> tuple[float, float]:
    """Jump rates ``(up, down)`` out of state ``x``."""
    x = _check_state(params, x)
    up, down = _rates(*_kernel_args(params), x)
    return float(up), float(down)


def continuum_rates(params: KirmanParams, x: float) -> tuple[float, float]:
    """Per-unit-time rates ``pi_plus, pi_minus`` in fraction units ``x = X/N``.

    They satisfy ``rate(X -> X +- 1) = N**2 * pi(x)`` exactly.
    """
    n = params.n_agents
    if not 0.0 <= x <= 1.0:
        raise ArgumentError(f"fraction must lie in [0, 1], got {x!r}")
    g = params.herding
    f = 1.0
    if params.feedback_alpha > 0:
        f = (x / max(1.0 - x, 1.0 / n)) ** params.feedback_alpha
    pp = (1.0 - x) * (params.sigma1 / n + g * f * x)
    if params.unidirectional:
        return pp, 0.0
    pm = x * f * (params.sigma2 / n + g * (1.0 - x))
    return pp, pm


def step_probabilities(params: KirmanParams, x: int, dt: float) -> tuple[float, float]:
    """One-step probabilities ``rate * dt`` of the fixed-step scheme."""
    up, down = transition_rates(params, x)
    return up * dt, down * dt


def max_fixed_step(params: KirmanParams) -> float:
    """Largest ``dt`` for which ``p_up + p_down <= 1`` in every state."""
    tot = max(sum(transition_rates(params, x)) for x in range(params.n_agents + 1))
    return math.inf if tot == 0 else 1.0 / tot


def stationary_distribution(params: KirmanParams) -> np.ndarray:
    """Exact stationary law of the birth-death chain, ``pi(X) ~ prod up(k-1)/down(k)``."""
    if params.unidirectional:
        raise ArgumentError("the unidirectional chain has no interior stationary law")
    n = params.n_agents
    logp = np.zeros(n + 1)
    for x in range(1, n + 1):
        up, _ = transition_rates(params, x - 1)
        _, down = transition_rates(params, x)
        if up == 0 or down == 0:
            raise ArgumentError("chain is reducible: a rate vanishes in the interior")
        logp[x] = logp[x - 1] + math.log(up) - math.log(down)
    p = np.exp(logp - logp.max())
    return p / p.sum()


@nb.njit(cache=True, nogil=True)
def _gillespie_events(rng, n, s1, s2, g, alpha, uni, x0, horizon, max_events):
    cap = 1024
    times = np.empty(cap)
    vals = np.empty(cap, np.int64)
    times[0] = 0.0
    vals[0] = x0
    m = 1
    t = 0.0
    x = x0
    while m < max_events:
        up, down = _rates(n, s1, s2, g, alpha, uni, x)
        tot = up + down
        if tot <= 0.0:
            break
        t += rng.standard_exponential() / tot
        if t >= horizon:
            break
        if rng.random() * tot < up:
            x += 1
        else:
            x -= 1
        if m == cap:
            cap *= 2
            nt = np.empty(cap)
            nv = np.empty(cap, np.int64)
            nt[:m] = times[:m]
            nv[:m] = vals[:m]
            times = nt
            vals = nv
        times[m] = t
        vals[m] = x
        m += 1
    return times[:m].copy(), vals[:m].copy(), m >= max_events


@nb.njit(cache=True, nogil=True)
def _gillespie_grid(rng, n, s1, s2, g, alpha, uni, x0, dt_out, n_out):
    out = np.empty(n_out, np.int64)
    occ = np.zeros(n + 1)
    t_end = dt_out * (n_out - 1)
    t = 0.0
    x = x0
    k = 0
    events = 0
    while k < n_out:
        up, down = _rates(n, s1, s2, g, alpha, uni, x)
        tot = up + down
        if tot <= 0.0:
            tn = np.inf
        else:
            tn = t + rng.standard_exponential() / tot
        while k < n_out and k * dt_out < tn:
            out[k] = x
            k += 1
        occ[x] += min(tn, t_end) - t
        if k >= n_out or tot <= 0.0:
            break
        if rng.random() * tot < up:
            x += 1
        else:
            x -= 1
        t = tn
        events += 1
    return out, occ, events


def _validate_run(params, x0, horizon):
    x0 = _check_state(params, x0)
    if not (horizon > 0 and math.isfinite(horizon)):
        raise ArgumentError(f"horizon must be positive and finite, got {horizon!r}")
    return x0


def simulate(params: KirmanParams, x0: int, horizon: float, seed, max_events: int = 50_000_000) -> EventPath:
    """Exact event-driven path of ``X`` on ``[0, horizon]``.

    Waiting times are exponential with the total rate; each event moves ``X`` by
    one unit up or down with probability proportional to its rate. A state with
    zero total rate (saturation) ends the dynamics early and the value holds to
    the horizon.
    """
    x0 = _validate_run(params, x0, horizon)
    rng = as_generator(seed)
    t, v, truncated = _gillespie_events(rng, *_kernel_args(params), x0, float(horizon), int(max_events))
    end = float(t[-1]) if truncated else float(horizon)
    meta = {"model": "kirman", **params.as_dict(), "events": int(t.size - 1)}
    if isinstance(seed, SeedSpec):
        meta["seed"] = seed.as_dict()
    if truncated:
        meta["truncated_at_max_events"] = True
    return EventPath(t, v, end=end, meta=meta)


def simulate_grid(params: KirmanParams, x0: int, horizon: float, dt_out: float, seed):
    """Sample-and-hold ``X`` on ``0, dt_out, ...`` without storing every event.

    Returns
    -------
    series : UniformSeries
        Values of ``X`` (not the fraction) at the grid times.
    occupation : ndarray
        Exact time spent in each state over the grid span.
    """
    x0 = _validate_run(params, x0, horizon)
    if not dt_out > 0:
        raise ArgumentError(f"dt_out must be positive, got {dt_out!r}")
    n_out = int(math.floor(horizon / dt_out * (1 + 1e-12))) + 1
    if n_out < 2:
        raise ArgumentError("horizon must cover at least one output step")
    rng = as_generator(seed)
    out, occ, events = _gillespie_grid(rng, *_kernel_args(params), x0, float(dt_out), n_out)
    meta = {"model": "kirman", **params.as_dict(), "events": int(events)}
    if isinstance(seed, SeedSpec):
        meta["seed"] = seed.as_dict()
    return UniformSeries(0.0, float(dt_out), out.astype(float), meta), occ


@nb.njit(cache=True)
def _fixed_step(rng, n, s1, s2, g, alpha, uni, x0, dt, n_steps):
    out = np.empty(n_steps + 1, np.int64)
    out[0] = x0
    x = x0
    for i in range(n_steps):
        up, down = _rates(n, s1, s2, g, alpha, uni, x)
        u = rng.random()
        if u < up * dt:
            x += 1
        elif u < (up + down) * dt:
            x -= 1
        out[i + 1] = x
    return out


def simulate_fixed_step(params: KirmanParams, x0: int, n_steps: int, dt: float, seed) -> UniformSeries:
    """Discrete-time Bernoulli scheme with one-step probabilities ``rate * dt``.

    Raises :class:`ArgumentError` unless ``dt`` keeps every ``p_up + p_down <= 1``.
    """
    x0 = _check_state(params, x0)
    limit = max_fixed_step(params)
    if not 0 < dt <= limit:
        raise ArgumentError(f"dt must lie in (0, {limit:g}] so that probabilities stay <= 1, got {dt!r}")
    out = _fixed_step(as_generator(seed), *_kernel_args(params), x0, float(dt), int(n_steps))
    return UniformSeries(0.0, float(dt), out.astype(float), {"model": "kirman_fixed_step", **params.as_dict()})


def simulate_many(params: KirmanParams, x0: int, horizon: float, seed: SeedSpec, realizations: int,
                  dt_out: float | None = None, workers: int | None = None):
    """Independent realizations ``seed.realization(i)``, returned in index order."""
    if realizations < 1:
        raise ArgumentError("realizations must be >= 1")

    def run(i):
        s = seed.realization(seed.realization_index + i)
        if dt_out is None:
            return simulate(params, x0, horizon, s)
        return simulate_grid(params, x0, horizon, dt_out, s)[0]

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, range(realizations)))


@dataclass(frozen=True)
class MarketMap:
    """Mapping of the agent fraction to price and return.

    ``r0`` is the relative impact of noise traders, ``pf`` the fundamental price
    and ``window_T`` the return horizon.
    """

    r0: float = 1.0
    pf: float = 1.0
    window_T: float = 1.0

    def __post_init__(self):
        for name in ("r0", "pf", "window_T"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ArgumentError(f"{name} must be positive, got {v!r}")


def _ratio(x):
    x = np.asarray(x, dtype=float)
    if np.any(x == 1.0):
        raise SingularityError("x = 1 (all agents in the tracked state) makes x/(1-x) diverge")
    if np.any((x < 0) | (x > 1)) or np.any(np.isnan(x)):
        raise DomainError("fractions must lie in [0, 1)")
    return x / (1.0 - x)


def absolute_return(xpath: UniformSeries) -> UniformSeries:
    """``y = x/(1-x)`` sample by sample."""
    return xpath.with_values(_ratio(xpath.values), observable="absolute_return")


def price_and_return(xpath: UniformSeries, market: MarketMap, mood: UniformSeries | None = None):
    """Clearing price ``P = pf * exp(r0 * y * xi)`` and log return over ``window_T``.

    ``mood`` defaults to ``xi = 1``. The return series starts at ``t0 + window_T``,
    which must be a whole number of sampling steps.
    """
    y = _ratio(xpath.values)
    if mood is None:
        xi = np.ones_like(y)
    else:
        if len(mood) != len(xpath) or abs(mood.dt - xpath.dt) > 1e-12 * xpath.dt or abs(mood.t0 - xpath.t0) > 1e-12 * max(1.0, abs(xpath.t0)):
            raise ArgumentError("mood series must share the grid of the fraction series")
        xi = mood.values
        if np.any(np.abs(xi) > 1):
            raise DomainError("mood values must lie in [-1, 1]")
    lag = market.window_T / xpath.dt
    k = int(round(lag))
    if k < 1 or abs(lag - k) > 1e-9 * max(1.0, lag):
        raise ArgumentError(f"window_T={market.window_T} is not a positive multiple of dt={xpath.dt}")
    if k >= len(xpath):
        raise ArgumentError("window_T exceeds the series span")
    logp = math.log(market.pf) + market.r0 * y * xi
    price = xpath.with_values(np.exp(logp), observable="price")
    ret = UniformSeries(xpath.t0 + k * xpath.dt, xpath.dt, logp[k:] - logp[:-k], {**xpath.meta, "observable": "return"})
    return price, ret


def mood_flip(n: int, dt: float, rate: float, seed, xi0: float = 1.0) -> UniformSeries:
    """Two-state +-1 Markov mood sampled exactly on a grid of ``n`` points.

    Between samples the sign flips with probability ``(1 - exp(-2 rate dt)) / 2``.
    """
    if n < 1 or not dt > 0 or rate < 0:
        raise ArgumentError("need n >= 1, dt > 0 and rate >= 0")
    if xi0 not in (-1.0, 1.0):
        raise ArgumentError("xi0 must be +1 or -1")
    rng = as_generator(seed)
    p = 0.5 * (1.0 - math.exp(-2.0 * rate * dt))
    flips = rng.random(n - 1) < p
    parity = np.concatenate(([0], np.cumsum(flips) % 2))
    return UniformSeries(0.0, dt, xi0 * (1.0 - 2.0 * parity), {"observable": "mood", "flip_rate": rate})

"""Threshold bursts and the first-passage theory of their durations.

For ``dy = (eta - lambda/2) y^(2 eta - 1) dt + y^eta dW`` the Lamperti map
``z = 1 / ((eta - 1) y^(eta - 1))`` gives a Bessel process of index
``nu = (lambda - 2 eta + 1) / (2 (eta - 1))``. The map is decreasing, so a burst
of ``y`` above ``h_y`` is an excursion of ``z`` below ``h_z`` and its duration
is a first-passage time of the Bessel process.

With ``j_k`` the positive zeros of ``J_nu`` and ``c = t / (2 h_z^2)``:

* hitting density from ``z0 < h_z``:
  ``rho(t) = h_z^(nu-2) / z0^nu * sum_k j_k J_nu(z0 j_k / h_z) / J_{nu+1}(j_k) exp(-j_k^2 c)``
* duration density (the ``z0 -> h_z`` limit): ``p(t) = C1 sum_k j_k^2 exp(-j_k^2 c)``
* closed form, the sum replaced by an integral from ``j_1``:
  ``p(t) = C2 [h_z^2 j_1 exp(-j_1^2 c) / t + sqrt(pi/2) h_z^3 erfc(j_1 sqrt(c)) / t^(3/2)]``

``C1`` and ``C2`` normalize the densities on ``[t_min, inf)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, DomainError
from .series import UniformSeries
from .specfun import bessel_j, bessel_zeros, check_bessel_order, erfc

__all__ = [
    "Burst",
    "BurstSet",
    "BesselMap",
    "extract_bursts",
    "pool_bursts",
    "lamperti_threshold",
    "inverse_lamperti",
    "bessel_index",
    "hitting_density",
    "hitting_cdf",
    "burst_duration_pdf",
    "burst_duration_cdf",
    "DEFAULT_TERMS",
]

DEFAULT_TERMS = 200
_MAX_TERMS = 20000
_SQRT_PI = math.sqrt(math.pi)
# the passage density carries a factor exp(-(h - z0)^2 / 2t); beyond this it is below 1e-300
_UNDERFLOW = 690.0


# --- extraction ----------------------------------------------------------------------------------


@dataclass(frozen=True)
class Burst:
    start: float
    end: float
    peak: float
    size: float
    truncated: bool = False

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class BurstSet:
    """Bursts found above ``threshold``.

    Arrays are aligned per burst. ``truncated`` marks bursts cut by either end
    of the series; they are left out of :attr:`durations`.
    """

    threshold: float
    start: np.ndarray
    end: np.ndarray
    peak: np.ndarray
    size: np.ndarray
    truncated: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.start.size

    @property
    def durations(self) -> np.ndarray:
        return (self.end - self.start)[~self.truncated]

    @property
    def complete(self) -> int:
        return int((~self.truncated).sum())

    def bursts(self) -> list[Burst]:
        return [Burst(*row) for row in zip(self.start, self.end, self.peak, self.size, self.truncated.tolist())]


def extract_bursts(series: UniformSeries, threshold: float) -> BurstSet:
    """Maximal runs of samples strictly above ``threshold``.

    Crossing times are interpolated linearly between the bracketing samples.
    The size is the trapezoid area of ``value - threshold`` between the two
    crossings. Runs touching the first or last sample are flagged truncated
    and their open end is placed at that sample.
    """
    v = series.values
    n = v.size
    if n < 2:
        raise ArgumentError("burst extraction needs at least two samples")
    t0, dt = series.t0, series.dt
    h = float(threshold)
    above = v > h
    edge = np.diff(np.concatenate(([0], above.view(np.int8), [0])))
    first = np.flatnonzero(edge == 1)  # first index above
    last = np.flatnonzero(edge == -1) - 1  # last index above
    w = v - h
    # trapezoid between consecutive samples, used for run interiors
    cum = np.concatenate(([0.0], np.cumsum(0.5 * (w[1:] + w[:-1]) * dt)))
    trunc = (first == 0) | (last == n - 1)
    start = t0 + first * dt
    end = t0 + last * dt
    lead = first > 0
    i = first[lead]
    frac = w[i] / (v[i] - v[i - 1])
    start[lead] -= frac * dt
    lead_area = np.zeros(first.size)
    lead_area[lead] = 0.5 * frac * dt * w[i]
    tail = last < n - 1
    j = last[tail]
    frac = w[j] / (v[j] - v[j + 1])
    end[tail] += frac * dt
    tail_area = np.zeros(first.size)
    tail_area[tail] = 0.5 * frac * dt * w[j]
    size = lead_area + (cum[last] - cum[first]) + tail_area
    peak = _run_max(v, first, last) if first.size else np.empty(0)
    meta = {**series.meta, "threshold": h, "dt": dt}
    return BurstSet(h, start, end, peak, size, trunc, meta)


def _run_max(v, first, last):
    # maximum over each [first, last] run; runs are disjoint and ordered
    mask = np.full(v.size, -np.inf)
    inside = np.zeros(v.size + 1, np.int64)
    np.add.at(inside, first, 1)
    np.add.at(inside, last + 1, -1)
    sel = np.cumsum(inside[:-1]) > 0
    mask[sel] = v[sel]
    return np.maximum.reduceat(mask, first)


def pool_bursts(sets) -> BurstSet:
    """Concatenate bursts from independent realizations sharing one threshold."""
    sets = list(sets)
    if not sets:
        raise ArgumentError("nothing to pool")
    h = sets[0].threshold
    if any(s.threshold != h for s in sets):
        raise ArgumentError("all burst sets must share the threshold")
    cat = lambda name: np.concatenate([getattr(s, name) for s in sets])
    return BurstSet(h, cat("start"), cat("end"), cat("peak"), cat("size"), cat("truncated"),
                    {"realizations": len(sets), "threshold": h})


# --- Lamperti and Bessel maps --------------------------------------------------------------------


def lamperti_threshold(eta: float, h_y: float) -> float:
    """``h_z = 1 / ((eta - 1) h_y^(eta - 1))``; decreasing in ``h_y``."""
    if not eta > 1:
        raise DomainError(f"the Lamperti map needs eta > 1, got {eta!r}")
    if not h_y > 0:
        raise DomainError(f"threshold must be positive, got {h_y!r}")
    return 1.0 / ((eta - 1.0) * h_y ** (eta - 1.0))


def inverse_lamperti(eta: float, h_z: float) -> float:
    """Inverse of :func:`lamperti_threshold`."""
    if not eta > 1:
        raise DomainError(f"the Lamperti map needs eta > 1, got {eta!r}")
    if not h_z > 0:
        raise DomainError(f"threshold must be positive, got {h_z!r}")
    return ((eta - 1.0) * h_z) ** (-1.0 / (eta - 1.0))


def bessel_index(eta: float, lam: float) -> tuple[float, float]:
    """``(nu, dim)`` with ``nu = (lambda - 2 eta + 1) / (2 (eta - 1))`` and ``dim = 2 (nu + 1)``."""
    if not eta > 1:
        raise DomainError(f"the Bessel reduction needs eta > 1, got {eta!r}")
    nu = (lam - 2.0 * eta + 1.0) / (2.0 * (eta - 1.0))
    return nu, 2.0 * (nu + 1.0)


@dataclass(frozen=True)
class BesselMap:
    """Bessel-process description of threshold bursts of the power-law SDE."""

    eta: float
    lam: float
    h_y: float
    time_scale: float = 1.0

    def __post_init__(self):
        if not self.eta > 1:
            raise DomainError("BesselMap needs eta > 1")
        if not self.h_y > 0:
            raise DomainError("threshold must be positive")
        check_bessel_order(self.nu)

    @property
    def nu(self) -> float:
        return bessel_index(self.eta, self.lam)[0]

    @property
    def dim(self) -> float:
        return bessel_index(self.eta, self.lam)[1]

    @property
    def h_z(self) -> float:
        return lamperti_threshold(self.eta, self.h_y)

    @property
    def crossover(self) -> float:
        """Time scale ``2 h_z^2 / j_1^2`` separating the two regimes (model time)."""
        j1 = bessel_zeros(self.nu, 1)[0]
        return 2.0 * self.h_z**2 / j1**2

    @classmethod
    def direct(cls, nu: float, h_z: float) -> "BesselMap":
        """A map with given ``nu`` and ``h_z`` (``eta = 2`` chosen for concreteness)."""
        eta = 2.0
        lam = 2.0 * nu * (eta - 1.0) + 2.0 * eta - 1.0
        return cls(eta, lam, inverse_lamperti(eta, h_z))


# --- series machinery ----------------------------------------------------------------------------


def _scalar_or_array(fn, t):
    t = np.asarray(t, dtype=float)
    out = np.array([fn(float(v)) for v in t.ravel()]).reshape(t.shape)
    return float(out) if out.ndim == 0 else out


def _terms_needed(nu, c, coef_bound, log_lead, tol):
    """Smallest K whose tail bound is below ``tol`` times the leading term (compared in logs)."""
    k = 1
    while k < _MAX_TERMS:
        zk = bessel_zeros(nu, k)[-1]
        a = max(zk - math.pi, 1e-12)
        # sum_{j > K} x e^{-c x^2} <= (1/pi) int_{j_K - pi}^inf x e^{-c x^2} dx
        log_tail = math.log(coef_bound / (2.0 * math.pi * c)) - c * a * a
        if log_tail < math.log(tol) + log_lead:
            return k
        k = k + max(1, k // 4)
    raise ArgumentError("t is too small for the series to converge within the term budget")


def _check_hitting(nu, z0, h_z):
    nu = check_bessel_order(nu)
    if not h_z > 0:
        raise DomainError("h_z must be positive")
    if not 0 < z0 < h_z:
        raise DomainError(f"need 0 < z0 < h_z, got z0={z0!r}, h_z={h_z!r}")
    return nu


def hitting_density(nu: float, z0: float, h_z: float, t, terms: int | None = None):
    """First-passage density of a Bessel process of index ``nu`` from ``z0`` up to ``h_z``.

    With ``terms=None`` the number of terms is chosen so that a bound on the
    truncated tail is below ``1e-8`` of the leading term. Where the alternating
    sum cancels below the accuracy of its terms the density is reported as 0.
    """
    nu = _check_hitting(nu, z0, h_z)
    pref = h_z ** (nu - 2.0) / z0**nu

    def one(tt):
        if not tt > 0:
            raise ArgumentError("t must be positive")
        if terms is None and (h_z - z0) ** 2 / (2.0 * tt) > _UNDERFLOW:
            return 0.0
        c = tt / (2.0 * h_z * h_z)
        if terms is None:
            j1 = bessel_zeros(nu, 1)[0]
            lead = j1 * abs(float(bessel_j(nu, z0 * j1 / h_z)) / float(bessel_j(nu + 1.0, j1)))
            # |J_nu(z0 j/h)| / |J_{nu+1}(j)| <= sqrt(h / z0) asymptotically; doubled for safety
            k = _terms_needed(nu, c, 2.0 * math.sqrt(h_z / z0), math.log(lead) - c * j1 * j1, 1e-8)
        else:
            k = int(terms)
        j = bessel_zeros(nu, k)
        parts = j * bessel_j(nu, z0 * j / h_z) / bessel_j(nu + 1.0, j) * np.exp(-c * j * j)
        total = math.fsum(parts)
        # each part carries the relative error of the Bessel evaluations
        if abs(total) <= 1e-11 * np.sum(np.abs(parts)):
            return 0.0
        return max(pref * total, 0.0) if total > 0 else 0.0

    return _scalar_or_array(one, t)


def hitting_cdf(nu: float, z0: float, h_z: float, t, terms: int | None = None):
    """Probability that the passage happened by ``t``: ``1 - sum_k a_k (2 h^2 / j_k^2) e^{-j_k^2 c}``."""
    nu = _check_hitting(nu, z0, h_z)
    pref = h_z ** (nu - 2.0) / z0**nu

    def one(tt):
        if not tt > 0:
            return 0.0
        if terms is None and (h_z - z0) ** 2 / (2.0 * tt) > _UNDERFLOW:
            return 0.0
        c = tt / (2.0 * h_z * h_z)
        if terms is None:
            k = _terms_needed(nu, c, 2.0 * math.sqrt(h_z / z0), 0.0, 1e-10)
        else:
            k = int(terms)
        j = bessel_zeros(nu, k)
        parts = bessel_j(nu, z0 * j / h_z) / (j * bessel_j(nu + 1.0, j)) * np.exp(-c * j * j)
        surv = pref * 2.0 * h_z * h_z * math.fsum(parts)
        return min(1.0, max(0.0, 1.0 - surv))

    return _scalar_or_array(one, t)


# --- duration density ----------------------------------------------------------------------------


def _tail_start(nu, k):
    return bessel_zeros(nu, k)[-1] + 0.5 * math.pi


def _int_x2(a, c):
    # int_a^inf x^2 exp(-c x^2) dx
    return a * math.exp(-c * a * a) / (2.0 * c) + _SQRT_PI / (4.0 * c**1.5) * erfc(a * math.sqrt(c))


def _int_x0(a, c):
    # int_a^inf exp(-c x^2) dx
    return _SQRT_PI / (2.0 * math.sqrt(c)) * erfc(a * math.sqrt(c))


def _series_sums(nu, h_z, t, terms):
    """``sum_k j_k^2 e^{-j_k^2 c}`` and ``sum_k e^{-j_k^2 c}`` with an integral tail beyond ``terms``.

    Beyond the last explicit zero the spacing is ~pi, so the remaining sum is
    the midpoint-rule integral ``(1/pi) int_{j_K + pi/2}^inf``.
    """
    c = t / (2.0 * h_z * h_z)
    j = bessel_zeros(nu, terms)
    e = np.exp(-c * j * j)
    a = _tail_start(nu, terms)
    dens = math.fsum(j * j * e) + _int_x2(a, c) / math.pi
    surv = math.fsum(e) + _int_x0(a, c) / math.pi
    return dens, surv


def _closed_parts(nu, h_z, t):
    j1 = bessel_zeros(nu, 1)[0]
    c = t / (2.0 * h_z * h_z)
    dens = h_z**2 * j1 * math.exp(-c * j1 * j1) / t + math.sqrt(math.pi / 2.0) * h_z**3 * erfc(j1 * math.sqrt(c)) / t**1.5
    # survival int_t^inf of the bracket (derivative checked in the tests)
    surv = h_z**3 * math.sqrt(2.0 * math.pi / t) * erfc(j1 * math.sqrt(c))
    return dens, surv


def _check_mode(mode):
    if mode not in ("series", "closed_form"):
        raise ArgumentError(f"mode must be 'series' or 'closed_form', got {mode!r}")


def burst_duration_pdf(bmap: BesselMap, t, mode: str = "series", t_min: float = 1e-3, terms: int = DEFAULT_TERMS):
    """Burst-duration density normalized on ``[t_min, inf)`` (model time).

    ``series`` sums the first ``terms`` zeros exactly plus an integral tail and
    is exact up to that tail approximation; ``closed_form`` is the
    power-law-with-cutoff approximation.
    """
    _check_mode(mode)
    if not t_min > 0:
        raise ArgumentError("t_min must be positive")
    nu, h_z = bmap.nu, bmap.h_z
    if mode == "series":
        norm = 2.0 * h_z * h_z * _series_sums(nu, h_z, t_min, terms)[1]
    else:
        norm = _closed_parts(nu, h_z, t_min)[1]

    def one(tt):
        if tt < t_min:
            raise ArgumentError(f"t={tt!r} lies below t_min={t_min!r}")
        if mode == "series":
            return _series_sums(nu, h_z, tt, terms)[0] / norm
        return _closed_parts(nu, h_z, tt)[0] / norm

    return _scalar_or_array(one, t)


def burst_duration_cdf(bmap: BesselMap, t, mode: str = "series", t_min: float = 1e-3, terms: int = DEFAULT_TERMS):
    """Distribution function on ``[t_min, inf)`` matching :func:`burst_duration_pdf`."""
    _check_mode(mode)
    if not t_min > 0:
        raise ArgumentError("t_min must be positive")
    nu, h_z = bmap.nu, bmap.h_z
    if mode == "series":
        norm = _series_sums(nu, h_z, t_min, terms)[1]
    else:
        norm = _closed_parts(nu, h_z, t_min)[1]

    def one(tt):
        if tt <= t_min:
            return 0.0
        if mode == "series":
            return 1.0 - _series_sums(nu, h_z, tt, terms)[1] / norm
        return 1.0 - _closed_parts(nu, h_z, tt)[1] / norm

    return _scalar_or_array(one, t)

"""Ito SDE integration and the registry of macroscopic herding models.

Every registered model is a drift/diffusion pair ``dy = a(y) dt + b(y) dW``
evaluated inside one compiled dispatch kernel. Integration uses Euler-Maruyama
with the adaptive step

    dt = kappa**2 * min(l(y)/|a(y)|, l(y)**2/b(y)**2, dt_max),   dt >= dt_min

where ``l(y)`` is the model's natural length scale (``|y|`` for the power-law
family, the distance to the nearer edge for the population fraction).

Boundary policies
-----------------
``reflect``  mirror the state back inside the barrier.
``absorb``   stop at the barrier; the value holds until the horizon.
``error``    raise :class:`BoundaryError`.
``exact``    natural square-root boundary (e.g. ``x = 0`` of the population
             model). Within ``boundary_layer`` of it the SDE is linearized to
             ``du = (p + q u) dt + sqrt(r u) dW`` and advanced with that
             equation's exact noncentral chi-square transition, so the
             boundary mass of strongly bimodal laws is reproduced instead of
             being truncated by an artificial barrier.
``none``     unbounded end.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .errors import ArgumentError, BoundaryError, DomainError, IntegrationError, SingularityError
from .series import EventPath, SeedSpec, UniformSeries, as_generator
from .specfun import gammaln

__all__ = [
    "SdeModel",
    "StepControl",
    "MODELS",
    "make_model",
    "custom_model",
    "integrate",
    "integrate_grid",
    "integrate_many",
    "predict_beta",
    "qgaussian_pdf",
    "herding_exponents",
    "SIGMA_T2_DEFAULT",
]

SIGMA_T2_DEFAULT = 1.0 / 6.0 * 1e-5
"""Scaled-time factor (per second) converting model time to physical seconds."""

Y_MAX_DEFAULT = 1e4

POLICIES = {"reflect": 0, "absorb": 1, "error": 2, "exact": 3, "none": 4}
_KIND_LOWER, _KIND_UPPER, _KIND_INVERSE = 0, 1, 2

_ST_OK, _ST_ABSORBED, _ST_BOUNDARY, _ST_NONFINITE, _ST_MAXSTEPS = 0, 1, 2, 3, 4


@dataclass(frozen=True)
class StepControl:
    """Adaptive step settings.

    ``boundary_layer`` is the width of the zone next to an ``exact`` boundary in
    which the local exact transition replaces the Euler step.
    """

    kappa: float = 0.03
    dt_max: float = 0.1
    dt_min: float = 1e-15
    boundary_layer: float = 0.01

    def __post_init__(self):
        if not 0 < self.kappa <= 1:
            raise ArgumentError(f"kappa must lie in (0, 1], got {self.kappa!r}")
        if not 0 < self.dt_min <= self.dt_max:
            raise ArgumentError("need 0 < dt_min <= dt_max")
        if not 0 < self.boundary_layer < 0.5:
            raise ArgumentError("boundary_layer must lie in (0, 0.5)")


@dataclass(frozen=True)
class BoundarySpec:
    policy: str
    barrier: float
    linear: tuple = (0.0, 0.0, 0.0)  # (p, q, r) of the local square-root SDE, policy "exact" only
    kind: int = _KIND_LOWER

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ArgumentError(f"boundary policy must be one of {sorted(POLICIES)}, got {self.policy!r}")


@dataclass(frozen=True, eq=False)
class SdeModel:
    """A named drift/diffusion pair with its domain and boundary policies.

    Use :func:`make_model` for registry entries and :func:`custom_model` for
    user-supplied coefficient functions. ``time_scale`` maps model time to
    physical time through ``t_model = time_scale * t_physical``.
    """

    name: str
    params: dict
    domain: tuple
    lower: BoundarySpec
    upper: BoundarySpec
    time_scale: float = 1.0
    model_id: int = -1
    param_vector: np.ndarray = field(default=None, repr=False)
    _coeffs: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not self.time_scale > 0:
            raise ArgumentError("time_scale must be positive")
        lo, hi = self.domain
        if not lo < hi:
            raise ArgumentError("domain must be a non-empty open interval")
        if not (lo <= self.lower.barrier < self.upper.barrier <= hi):
            raise ArgumentError(
                f"barriers [{self.lower.barrier}, {self.upper.barrier}] must lie within the domain ({lo}, {hi})"
            )

    def coefficients(self, y):
        """``(a(y), b(y))`` evaluated elementwise."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        out = np.array([_python_coeffs(self, v)[:2] for v in y])
        return out[:, 0], out[:, 1]

    def drift(self, y):
        a, _ = self.coefficients(y)
        return a if np.ndim(y) else float(a[0])

    def diffusion(self, y):
        _, b = self.coefficients(y)
        return b if np.ndim(y) else float(b[0])

    def describe(self) -> dict:
        return {
            "model": self.name,
            **self.params,
            "domain": list(self.domain),
            "boundary": [self.lower.policy, self.upper.policy],
            "barriers": [self.lower.barrier, self.upper.barrier],
            "time_scale": self.time_scale,
        }


# --- registry coefficients -----------------------------------------------------------------------


@nb.njit(cache=True, nogil=True)
def _registry_coeffs(mid, p, y):
    """Return drift, diffusion and length scale for model ``mid``."""
    if mid == 0:  # population fraction
        s1, s2, h = p[0], p[1], p[2]
        v = y * (1.0 - y)
        return s1 * (1.0 - y) - s2 * y, math.sqrt(2.0 * h * max(v, 0.0)), min(y, 1.0 - y)
    if mid == 1:  # power_general
        eta, lam = p[0], p[1]
        return (eta - 0.5 * lam) * y ** (2.0 * eta - 1.0), y**eta, abs(y)
    if mid == 2:  # power_qgauss
        eta, lam = p[0], p[1]
        w = 1.0 + y * y
        return (eta - 0.5 * lam) * w ** (eta - 1.0) * y, w ** (0.5 * eta), math.sqrt(w)
    if mid == 3:  # power_expmin
        eta, lam, m, ymin = p[0], p[1], p[2], p[3]
        return (eta - 0.5 * lam + 0.5 * m * (ymin / y) ** m) * y ** (2.0 * eta - 1.0), y**eta, abs(y)
    if mid == 4:  # cev
        eta, mu = p[0], p[1]
        return mu * y, y**eta, abs(y)
    if mid == 5:  # return_two_region
        eta, lam, eps = p[0], p[1], p[2]
        w = 1.0 + y * y
        den = eps * math.sqrt(w) + 1.0
        return (eta - 0.5 * lam) * w ** (eta - 1.0) * y / (den * den), w ** (0.5 * eta) / den, math.sqrt(w)
    if mid == 6:  # herding_y
        s1, s2, h = p[0], p[1], p[2]
        return (s1 - y * (s2 - 2.0 * h)) * (1.0 + y), math.sqrt(2.0 * h * y) * (1.0 + y), abs(y)
    if mid == 7:  # herding_y_tau, tau(y) = y**-alpha
        e1, e2, al = p[0], p[1], p[2]
        f = y**al
        return (e1 + y * (2.0 - e2) * f) * (1.0 + y), math.sqrt(2.0 * y * f) * (1.0 + y), abs(y)
    if mid == 8:  # herding_asym
        e2, al = p[0], p[1]
        return (2.0 - e2) * y ** (2.0 + al), math.sqrt(2.0) * y ** (0.5 * (3.0 + al)), abs(y)
    if mid == 9:  # herding_cev_lim
        e1, al = p[0], p[1]
        return e1 * y, math.sqrt(2.0) * y ** (0.5 * (3.0 + al)), abs(y)
    return math.nan, math.nan, math.nan


def _python_coeffs(model, y):
    if model._coeffs is not None:
        return model._coeffs(y)
    return _registry_coeffs(model.model_id, model.param_vector, float(y))


# --- kernel --------------------------------------------------------------------------------------


def _make_kernel(coeffs, cache):
    @nb.njit(cache=cache, nogil=True)
    def local_u(kind, barrier, y):
        if kind == 0:
            return y - barrier
        if kind == 1:
            return barrier - y
        return 1.0 / y

    @nb.njit(cache=cache, nogil=True)
    def from_u(kind, barrier, u):
        if kind == 0:
            return barrier + u
        if kind == 1:
            return barrier - u
        return 1.0 / max(u, 1e-300)

    @nb.njit(cache=cache, nogil=True)
    def exact_step(rng, u, dt, p, q, r):
        # exact transition of du = (p + q u) dt + sqrt(r u) dW
        k = -q
        if abs(k * dt) < 1e-8:
            c = 0.25 * r * dt
            decay = 1.0 - k * dt
        else:
            decay = math.exp(-k * dt)
            c = 0.25 * r * (1.0 - decay) / k
        shape = 2.0 * p / r
        lam = u * decay / c
        n = rng.poisson(0.5 * lam) if lam > 0.0 else 0
        shape += n
        if shape <= 0.0:
            return 0.0
        return 2.0 * c * rng.standard_gamma(shape)

    @nb.njit(cache=cache, nogil=True)
    def kernel(rng, mid, par, y0, t_end, kappa, dt_min, dt_max, ends, layer, dt_out, n_out, max_steps, average):
        k2 = kappa * kappa
        record_grid = dt_out > 0.0
        if record_grid:
            times = np.empty(n_out)
            vals = np.empty(n_out)
            times[0] = 0.0
            vals[0] = y0
            cap = n_out
        else:
            cap = 4096
            times = np.empty(cap)
            vals = np.empty(cap)
            times[0] = 0.0
            vals[0] = y0
        m = 1
        t = 0.0
        tc = 0.0  # Kahan compensation: the elapsed time is t - tc
        y = y0
        acc = 0.0
        steps = 0
        status = 0
        # step cap inside the exact boundary layers
        dtc = np.empty(2)
        for e in range(2):
            dtc[e] = dt_max
            if ends[e, 0] == 3.0:
                pp, rr = ends[e, 2], ends[e, 4]
                if rr > 0.0:
                    dtc[e] = min(dtc[e], layer / (4.0 * rr))
                if pp > 0.0:
                    dtc[e] = min(dtc[e], layer / (4.0 * pp))
        while True:
            if record_grid:
                if m >= n_out:
                    break
                t_next = m * dt_out
            else:
                t_next = t_end
            if t >= t_end:
                break
            rem = (t_next - t) + tc
            if steps >= max_steps:
                status = 4
                break
            # which regime
            zone = -1
            for e in range(2):
                if ends[e, 0] == 3.0:
                    u = local_u(int(ends[e, 5]), ends[e, 1], y)
                    if u < layer:
                        zone = e
                        break
            if zone >= 0:
                dt = min(dtc[zone], rem)
                kind = int(ends[zone, 5])
                u = local_u(kind, ends[zone, 1], y)
                un = exact_step(rng, max(u, 0.0), dt, ends[zone, 2], ends[zone, 3], ends[zone, 4])
                yn = from_u(kind, ends[zone, 1], un)
            else:
                a, b, l = coeffs(mid, par, y)
                dt = dt_max
                if a != 0.0:
                    dt = min(dt, l / abs(a))
                if b != 0.0:
                    dt = min(dt, l * l / (b * b))
                dt = max(k2 * dt, dt_min)
                dt = min(dt, rem)
                yn = y + a * dt + b * math.sqrt(dt) * rng.standard_normal()
            steps += 1
            if not math.isfinite(yn):
                status = 3
                t += dt
                y = yn
                break
            # boundaries
            hit = False
            for e in range(2):
                pol = ends[e, 0]
                bar = ends[e, 1]
                outside = yn < bar if e == 0 else yn > bar
                if not outside:
                    continue
                if pol == 0.0:
                    yn = 2.0 * bar - yn
                    if (e == 0 and yn > ends[1, 1]) or (e == 1 and yn < ends[0, 1]):
                        yn = bar
                elif pol == 1.0:
                    yn = bar
                    hit = True
                    status = 1
                elif pol == 2.0:
                    status = 2
                    hit = True
                elif pol == 3.0:
                    # overshoot through a natural boundary from the Euler zone
                    yn = 2.0 * bar - yn
            if status == 2:
                t += dt
                y = yn
                break
            if average:
                acc += 0.5 * (y + yn) * dt
            if dt == rem:
                t = t_next
                tc = 0.0
            else:
                dk = dt - tc
                tn = t + dk
                tc = (tn - t) - dk
                t = tn
            y = yn
            if record_grid:
                if t == t_next:
                    times[m] = t
                    if average:
                        # trapezoid mean over the output interval
                        vals[m] = acc / dt_out
                        acc = 0.0
                    else:
                        vals[m] = y
                    m += 1
            elif t == times[m - 1]:
                # the step was below the resolution of t; keep the newest state
                vals[m - 1] = y
            else:
                if m == cap:
                    cap *= 2
                    nt = np.empty(cap)
                    nv = np.empty(cap)
                    nt[:m] = times[:m]
                    nv[:m] = vals[:m]
                    times = nt
                    vals = nv
                times[m] = t
                vals[m] = y
                m += 1
            if hit:
                break
        if status == 1 and record_grid:
            while m < n_out:
                times[m] = m * dt_out
                vals[m] = y
                m += 1
        return times[:m].copy(), vals[:m].copy(), status, t, y, steps

    return kernel


_REGISTRY_KERNEL = _make_kernel(_registry_coeffs, cache=True)


# --- registry ------------------------------------------------------------------------------------


def _need(params, name, cond=None, msg=None, default=None):
    if name not in params:
        if default is None:
            raise ArgumentError(f"missing model parameter {name!r}")
        return float(default)
    v = float(params[name])
    if not math.isfinite(v):
        raise ArgumentError(f"parameter {name!r} must be finite")
    if cond is not None and not cond(v):
        raise ArgumentError(msg or f"invalid value {name}={v!r}")
    return v


def _pos(v):
    return v > 0


def _nonneg(v):
    return v >= 0


def _exact(barrier, p, q, r, kind):
    return BoundarySpec("exact", barrier, (p, q, r), kind)


def _population(prm):
    s1 = _need(prm, "sigma1", _nonneg)
    s2 = _need(prm, "sigma2", _nonneg)
    h = _need(prm, "h", _pos, "h must be positive")
    lower = _exact(0.0, s1, -(s1 + s2), 2 * h, _KIND_LOWER)
    upper = _exact(1.0, s2, -(s1 + s2), 2 * h, _KIND_UPPER)
    return 0, [s1, s2, h], (0.0, 1.0), lower, upper, {"sigma1": s1, "sigma2": s2, "h": h}


def _herding_y(prm):
    s1 = _need(prm, "sigma1", _nonneg)
    s2 = _need(prm, "sigma2", _nonneg)
    h = _need(prm, "h", _pos, "h must be positive")
    lower = _exact(0.0, s1, s1 - s2 + 2 * h, 2 * h, _KIND_LOWER)
    upper = _exact(math.inf, s2, s2 - s1 + 2 * h, 2 * h, _KIND_INVERSE)
    return 6, [s1, s2, h], (0.0, math.inf), lower, upper, {"sigma1": s1, "sigma2": s2, "h": h}


def _eta_lam(prm):
    eta = _need(prm, "eta")
    lam = _need(prm, "lambda")
    return eta, lam


def _reflect_pair(prm, y_min_default):
    y_min = _need(prm, "y_min", _pos, "y_min must be positive", default=y_min_default)
    y_max = _need(prm, "y_max", _pos, "y_max must be positive", default=Y_MAX_DEFAULT)
    if not y_min < y_max:
        raise ArgumentError("need y_min < y_max")
    return BoundarySpec("reflect", y_min), BoundarySpec("reflect", y_max), y_min, y_max


def _power_general(prm):
    eta, lam = _eta_lam(prm)
    lo, hi, y_min, y_max = _reflect_pair(prm, 1.0)
    return 1, [eta, lam], (0.0, math.inf), lo, hi, {"eta": eta, "lambda": lam, "y_min": y_min, "y_max": y_max}


def _symmetric(mid, extra=()):
    def build(prm):
        eta, lam = _eta_lam(prm)
        y_max = _need(prm, "y_max", _pos, default=Y_MAX_DEFAULT)
        vals = [eta, lam]
        info = {"eta": eta, "lambda": lam, "y_max": y_max}
        for name, default, cond in extra:
            v = _need(prm, name, cond, default=default)
            vals.append(v)
            info[name] = v
        lo, hi = BoundarySpec("reflect", -y_max), BoundarySpec("reflect", y_max)
        return mid, vals, (-math.inf, math.inf), lo, hi, info

    return build


def _power_expmin(prm):
    eta, lam = _eta_lam(prm)
    m = _need(prm, "m", _pos, default=2.0)
    ymin_par = _need(prm, "y_min", _pos, default=1.0)
    floor = _need(prm, "y_floor", _pos, default=1e-3 * ymin_par)
    y_max = _need(prm, "y_max", _pos, default=Y_MAX_DEFAULT)
    info = {"eta": eta, "lambda": lam, "m": m, "y_min": ymin_par, "y_floor": floor, "y_max": y_max}
    return 3, [eta, lam, m, ymin_par], (0.0, math.inf), BoundarySpec("reflect", floor), BoundarySpec("reflect", y_max), info


def _cev(prm):
    eta = _need(prm, "eta", lambda v: v != 1, "cev requires eta != 1")
    ymin_par = _need(prm, "y_min", _pos, default=1.0)
    mu = float(prm["mu"]) if "mu" in prm else (eta - 1.0) * ymin_par ** (2.0 * (eta - 1.0))
    floor = _need(prm, "y_floor", _pos, default=1e-3 * ymin_par)
    y_max = _need(prm, "y_max", _pos, default=Y_MAX_DEFAULT)
    info = {"eta": eta, "mu": mu, "y_min": ymin_par, "y_floor": floor, "y_max": y_max}
    return 4, [eta, mu], (0.0, math.inf), BoundarySpec("reflect", floor), BoundarySpec("reflect", y_max), info


def _herding_y_tau(prm):
    e1 = _need(prm, "eps1", _nonneg)
    e2 = _need(prm, "eps2")
    al = _need(prm, "alpha", _nonneg)
    # with eps1 = 0 the density ~ y**(-1-alpha) is not normalizable at 0
    lo, hi, y_min, y_max = _reflect_pair(prm, 1e-3 if e1 > 0 else 1.0)
    return 7, [e1, e2, al], (0.0, math.inf), lo, hi, {"eps1": e1, "eps2": e2, "alpha": al, "y_min": y_min, "y_max": y_max}


def _herding_asym(prm):
    e2 = _need(prm, "eps2")
    al = _need(prm, "alpha", _nonneg)
    lo, hi, y_min, y_max = _reflect_pair(prm, 1.0)
    return 8, [e2, al], (0.0, math.inf), lo, hi, {"eps2": e2, "alpha": al, "y_min": y_min, "y_max": y_max}


def _herding_cev_lim(prm):
    e1 = _need(prm, "eps1", _pos, "eps1 must be positive")
    al = _need(prm, "alpha", _nonneg)
    lo, hi, y_min, y_max = _reflect_pair(prm, 1e-3)
    return 9, [e1, al], (0.0, math.inf), lo, hi, {"eps1": e1, "alpha": al, "y_min": y_min, "y_max": y_max}


MODELS = {
    "population": _population,
    "power_general": _power_general,
    "power_qgauss": _symmetric(2),
    "power_expmin": _power_expmin,
    "cev": _cev,
    "return_two_region": _symmetric(5, (("eps", 0.1, _nonneg),)),
    "herding_y": _herding_y,
    "herding_y_tau": _herding_y_tau,
    "herding_asym": _herding_asym,
    "herding_cev_lim": _herding_cev_lim,
}
"""Registered model builders keyed by name."""


def make_model(name: str, boundary: str | tuple | None = None, barriers: tuple | None = None,
               time_scale: float = 1.0, **params) -> SdeModel:
    """Build a registry model.

    Parameters
    ----------
    name : str
        One of :data:`MODELS`.
    boundary : str or (str, str), optional
        Override the policy at both ends or per end.
    barriers : (float, float), optional
        Override barrier positions (ignored by ``exact`` ends, which sit on the domain edge).
    time_scale : float
        Factor ``sigma_t**2`` with ``t_model = time_scale * t_seconds``.
    **params
        Model parameters, e.g. ``eta=2.5, lambda=4`` (``lambda`` may be given as ``lam``).
    """
    if name not in MODELS:
        raise ArgumentError(f"unknown model {name!r}; choose from {sorted(MODELS)}")
    if "lam" in params:
        params["lambda"] = params.pop("lam")
    mid, vec, domain, lower, upper, info = MODELS[name](params)
    known = set(info) | {"mu"}
    unknown = set(params) - known
    if unknown:
        raise ArgumentError(f"unknown parameter(s) for {name}: {sorted(unknown)}")
    lower, upper = _override(lower, upper, domain, boundary, barriers)
    return SdeModel(name, info, domain, lower, upper, float(time_scale), mid, np.array(vec, dtype=float))


def _inset(spec, is_lower):
    """Default barrier when a natural (``exact``) edge is replaced by another policy."""
    edge = spec.barrier
    if not math.isfinite(edge):
        return Y_MAX_DEFAULT
    return edge + 0.005 if is_lower else edge - 0.005


def _override(lower, upper, domain, boundary, barriers):
    pols = (None, None)
    if boundary is not None:
        pols = (boundary, boundary) if isinstance(boundary, str) else tuple(boundary)
    bars = (None, None) if barriers is None else tuple(float(v) for v in barriers)
    out = []
    for is_lower, spec, pol, bar in ((True, lower, pols[0], bars[0]), (False, upper, pols[1], bars[1])):
        pol = pol or spec.policy
        if pol == "exact":
            if spec.policy != "exact":
                raise ArgumentError("the 'exact' policy is only available on natural square-root boundaries")
            out.append(spec)
        elif pol == "none":
            out.append(BoundarySpec("none", domain[0] if is_lower else domain[1]))
        else:
            if bar is None:
                bar = _inset(spec, is_lower) if spec.policy == "exact" else spec.barrier
            out.append(BoundarySpec(pol, bar))
    return tuple(out)


_CUSTOM_KERNELS: dict = {}


def custom_model(name: str, drift, diffusion, domain=(-math.inf, math.inf), boundary=("none", "none"),
                 barriers=None, scale=None, time_scale: float = 1.0) -> SdeModel:
    """Model from user coefficient functions of one float argument.

    The functions are compiled with numba, so they must be numba-compatible.
    ``scale`` is the step-control length scale ``l(y)``; it defaults to
    ``max(|y|, 1)``.
    """
    a_fn = nb.njit(drift)
    b_fn = nb.njit(diffusion)
    l_fn = nb.njit(scale) if scale is not None else nb.njit(lambda y: max(abs(y), 1.0))

    @nb.njit(nogil=True)
    def coeffs(mid, p, y):
        return a_fn(y), b_fn(y), l_fn(y)

    pols = (boundary, boundary) if isinstance(boundary, str) else tuple(boundary)
    if "exact" in pols:
        raise ArgumentError("custom models support reflect, absorb, error and none")
    bars = barriers if barriers is not None else domain
    lower = BoundarySpec(pols[0], float(bars[0]))
    upper = BoundarySpec(pols[1], float(bars[1]))

    def py(y):
        return coeffs(0, np.zeros(1), float(y))

    model = SdeModel(name, {}, tuple(domain), lower, upper, float(time_scale), -1, np.zeros(1), py)
    _CUSTOM_KERNELS[id(model)] = (_make_kernel(coeffs, cache=False), model)
    return model


def _kernel_for(model):
    if model.model_id >= 0:
        return _REGISTRY_KERNEL
    return _CUSTOM_KERNELS[id(model)][0]


def _ends(model):
    ends = np.zeros((2, 6))
    for e, spec in enumerate((model.lower, model.upper)):
        ends[e, 0] = POLICIES[spec.policy]
        ends[e, 1] = spec.barrier
        ends[e, 2:5] = spec.linear
        ends[e, 5] = spec.kind
    # unbounded ends never trigger
    if model.lower.policy == "none":
        ends[0, 1] = -math.inf
    if model.upper.policy == "none":
        ends[1, 1] = math.inf
    return ends


def _check_start(model, y0):
    lo, hi = model.domain
    if not (lo < y0 < hi):
        raise DomainError(f"y0={y0!r} must lie strictly inside the domain ({lo}, {hi})")
    if y0 < model.lower.barrier or y0 > model.upper.barrier:
        raise DomainError(f"y0={y0!r} lies outside the barriers [{model.lower.barrier}, {model.upper.barrier}]")


def _run(model, y0, horizon, ctl, seed, dt_out, max_steps, average=False):
    y0 = float(y0)
    _check_start(model, y0)
    if not (horizon > 0 and math.isfinite(horizon)):
        raise ArgumentError(f"horizon must be positive and finite, got {horizon!r}")
    ctl = ctl or StepControl()
    n_out = 0
    if dt_out is not None:
        if not dt_out > 0:
            raise ArgumentError(f"dt_out must be positive, got {dt_out!r}")
        n_out = int(math.floor(horizon / dt_out * (1 + 1e-12))) + 1
        if n_out < 2:
            raise ArgumentError("horizon must cover at least one output step")
        horizon = (n_out - 1) * dt_out
    rng = as_generator(seed)
    kernel = _kernel_for(model)
    t, v, status, t_fail, y_fail, steps = kernel(
        rng, model.model_id, model.param_vector, y0, float(horizon), ctl.kappa, ctl.dt_min, ctl.dt_max,
        _ends(model), ctl.boundary_layer, float(dt_out or 0.0), n_out, int(max_steps), bool(average),
    )
    if status == _ST_NONFINITE:
        raise IntegrationError(f"{model.name}: state became non-finite", state=float(y_fail), time=float(t_fail))
    if status == _ST_BOUNDARY:
        raise BoundaryError(f"{model.name}: barrier crossed", state=float(y_fail), time=float(t_fail))
    if status == _ST_MAXSTEPS:
        raise IntegrationError(f"{model.name}: step budget of {max_steps} exhausted", state=float(y_fail), time=float(t_fail))
    meta = {**model.describe(), "steps": int(steps), "kappa": ctl.kappa, "dt_max": ctl.dt_max, "dt_min": ctl.dt_min,
            "boundary_layer": ctl.boundary_layer}
    if status == _ST_ABSORBED:
        meta["absorbed_at"] = float(t_fail)
    if isinstance(seed, SeedSpec):
        meta["seed"] = seed.as_dict()
    return t, v, float(horizon), meta


def integrate(model: SdeModel, y0: float, horizon: float, ctl: StepControl | None = None, seed=0,
              dt_out: float | None = None, max_steps: int = 2_000_000_000) -> EventPath:
    """Integrate ``model`` from ``y0`` over ``[0, horizon]`` in model time.

    Without ``dt_out`` every accepted step is returned. With ``dt_out`` steps
    are shortened so that they land on ``k * dt_out`` and only those points are
    stored. Absorption holds the final value until the horizon.

    Raises
    ------
    IntegrationError
        The state became NaN or infinite; ``state`` and ``time`` are attached.
    BoundaryError
        A barrier with policy ``error`` was crossed.
    """
    t, v, horizon, meta = _run(model, y0, horizon, ctl, seed, dt_out, max_steps)
    return EventPath(t, v, end=max(horizon, float(t[-1])), meta=meta)


def integrate_grid(model: SdeModel, y0: float, horizon: float, dt_out: float, ctl: StepControl | None = None,
                   seed=0, max_steps: int = 2_000_000_000, sampling: str = "point") -> UniformSeries:
    """Like :func:`integrate` with ``dt_out`` but returns a :class:`UniformSeries`.

    ``sampling="point"`` stores the state at ``k * dt_out``. ``sampling="mean"``
    stores the time average over each output interval, labelled at the
    interval end, so the series starts at ``dt_out``. Means act as a low-pass
    filter and keep spectral power above the output Nyquist frequency from
    folding back into the estimate.
    """
    if sampling not in ("point", "mean"):
        raise ArgumentError(f"sampling must be 'point' or 'mean', got {sampling!r}")
    average = sampling == "mean"
    _, v, _, meta = _run(model, y0, horizon, ctl, seed, dt_out, max_steps, average)
    meta["sampling"] = sampling
    if average:
        return UniformSeries(float(dt_out), float(dt_out), v[1:], meta)
    return UniformSeries(0.0, float(dt_out), v, meta)


def integrate_many(model: SdeModel, y0: float, horizon: float, dt_out: float, seed: SeedSpec, realizations: int,
                   ctl: StepControl | None = None, workers: int | None = None, sampling: str = "point"):
    """Independent grid realizations with streams ``seed.realization(index + i)``, in index order."""
    if realizations < 1:
        raise ArgumentError("realizations must be >= 1")

    def run(i):
        return integrate_grid(model, y0, horizon, dt_out, ctl, seed.realization(seed.realization_index + i), sampling=sampling)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, range(realizations)))


def to_physical(series: UniformSeries, time_scale: float) -> UniformSeries:
    """Rescale a model-time series to physical time, ``t = t_model / time_scale``."""
    if not time_scale > 0:
        raise ArgumentError("time_scale must be positive")
    return UniformSeries(series.t0 / time_scale, series.dt / time_scale, series.values,
                         {**series.meta, "time_unit": "physical"})


# --- closed-form theory --------------------------------------------------------------------------


def predict_beta(lam: float, eta: float) -> float:
    """Spectral exponent ``beta = 1 + (lambda - 3) / (2 (eta - 1))`` of the power-law SDE class."""
    if eta == 1:
        raise SingularityError("beta is defined only for eta != 1")
    return 1.0 + (lam - 3.0) / (2.0 * (eta - 1.0))


def qgaussian_pdf(lam: float, y):
    """Stationary q-Gaussian density ``Gamma(lam/2) / (sqrt(pi) Gamma(lam/2 - 1/2)) (1 + y^2)^(-lam/2)``."""
    if not lam > 1:
        raise DomainError(f"the q-Gaussian is normalizable only for lambda > 1, got {lam!r}")
    logc = gammaln(0.5 * lam) - 0.5 * math.log(math.pi) - gammaln(0.5 * lam - 0.5)
    y = np.asarray(y, dtype=float)
    out = np.exp(logc - 0.5 * lam * np.log1p(y * y))
    return float(out) if out.ndim == 0 else out


def herding_exponents(eps2: float, alpha: float) -> dict:
    """Large-``y`` exponents of the activity-feedback herding model.

    Returns ``eta = (3 + alpha)/2``, ``lambda = eps2 + alpha + 1``, the density
    tail exponent (equal to ``lambda``) and
    ``beta = 1 + (eps2 + alpha - 2)/(1 + alpha)``. With ``eps2 = 2`` these reduce
    to the linear-drift values ``3 + alpha`` and ``1 + alpha/(1 + alpha)``.
    """
    if not alpha >= 0:
        raise ArgumentError(f"alpha must be non-negative, got {alpha!r}")
    lam = eps2 + alpha + 1.0
    return {
        "eta": (3.0 + alpha) / 2.0,
        "lambda": lam,
        "pdf_exponent": lam,
        "beta": 1.0 + (eps2 + alpha - 2.0) / (1.0 + alpha),
    }

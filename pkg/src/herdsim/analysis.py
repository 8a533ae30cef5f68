"""Measurement side: log-binned densities, spectra, power-law fits and MF-DFA."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .errors import ArgumentError, DomainError
from .series import EventPath, UniformSeries

__all__ = [
    "LogHistogram",
    "Spectrum",
    "FluctuationSurface",
    "ExponentReport",
    "estimate_pdf",
    "pool_histograms",
    "estimate_psd",
    "fit_powerlaw",
    "mfdfa",
    "dfa",
    "hurst_spectrum",
    "default_q_grid",
    "default_s_grid",
]


@dataclass(frozen=True)
class LogHistogram:
    """Histogram on geometric bins; ``density = count / (total * width)``."""

    edges: np.ndarray
    density: np.ndarray
    counts: np.ndarray
    total: float

    @property
    def centers(self) -> np.ndarray:
        return np.sqrt(self.edges[1:] * self.edges[:-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    def xy(self):
        return self.centers, self.density


@dataclass(frozen=True)
class Spectrum:
    """One-sided power spectral density (f = 0 excluded)."""

    freqs: np.ndarray
    power: np.ndarray
    n_segments: int
    meta: dict = field(default_factory=dict)

    def xy(self):
        return self.freqs, self.power

    def log_binned(self, bins_per_decade: int = 10) -> "Spectrum":
        """Average the power inside geometric frequency bins (centres are geometric means)."""
        if bins_per_decade < 1:
            raise ArgumentError("bins_per_decade must be >= 1")
        f, p = self.freqs, self.power
        nb = max(1, math.ceil(math.log10(f[-1] / f[0]) * bins_per_decade))
        edges = np.geomspace(f[0], f[-1] * (1 + 1e-12), nb + 1)
        idx = np.searchsorted(edges, f, side="right") - 1
        cnt = np.bincount(idx, minlength=nb)
        keep = cnt > 0
        pw = np.bincount(idx, weights=p, minlength=nb)[keep] / cnt[keep]
        fc = np.exp(np.bincount(idx, weights=np.log(f), minlength=nb)[keep] / cnt[keep])
        return Spectrum(fc, pw, self.n_segments, {**self.meta, "log_binned": bins_per_decade})


@dataclass(frozen=True)
class ExponentReport:
    """Result of a log-log least-squares fit. ``exponent`` follows the fit's sign convention."""

    exponent: float
    window: tuple
    residual_rms: float
    n_points: int
    intercept: float = 0.0
    label: str = ""

    def as_dict(self):
        return {
            "label": self.label,
            "exponent": self.exponent,
            "window": list(self.window),
            "residual_rms": self.residual_rms,
            "n_points": self.n_points,
            "intercept": self.intercept,
        }


@dataclass(frozen=True)
class FluctuationSurface:
    q: np.ndarray
    s: np.ndarray
    F: np.ndarray  # shape (len(q), len(s))
    m: int
    zero_segments: int = 0


# --- densities -----------------------------------------------------------------------------------


def _values(data):
    if isinstance(data, UniformSeries):
        return data.values
    if isinstance(data, (list, tuple)) and data and isinstance(data[0], UniformSeries):
        return np.concatenate([s.values for s in data])
    return np.asarray(data, dtype=float).ravel()


def _dwell(path: EventPath):
    # each state is held until the next event; the last one until the path end
    return np.diff(np.append(path.times, path.t_end))


def _weighted(data):
    if isinstance(data, EventPath):
        return data.values, _dwell(data)
    if isinstance(data, (list, tuple)) and data and isinstance(data[0], EventPath):
        return np.concatenate([p.values for p in data]), np.concatenate([_dwell(p) for p in data])
    return _values(data), None


def estimate_pdf(series, bins_per_decade: int = 10, bounds: tuple | None = None) -> LogHistogram:
    """Density estimate on geometric bins spanning ``[min, max]`` (or ``bounds``).

    ``series`` may be a :class:`UniformSeries`, a list of them (pooled) or an
    array. An :class:`EventPath` (or a list of them) gives the occupation-time
    density: each state is weighted by how long it is held, and ``counts`` and
    ``total`` are times rather than sample counts. With ``bounds`` the samples
    outside are dropped before normalization.
    """
    if int(bins_per_decade) != bins_per_decade or bins_per_decade < 4:
        raise ArgumentError("bins_per_decade must be an integer >= 4")
    v, w = _weighted(series)
    if v.size == 0:
        raise DomainError("no samples")
    if bounds is not None:
        lo, hi = bounds
        if not 0 < lo < hi:
            raise ArgumentError("bounds must satisfy 0 < lo < hi")
        inside = (v >= lo) & (v <= hi)
        v = v[inside]
        w = None if w is None else w[inside]
        if v.size == 0:
            raise DomainError("no samples inside bounds")
    else:
        if np.any(~(v > 0)):
            raise DomainError("log-binned densities need strictly positive values")
        lo, hi = float(v.min()), float(v.max())
    if hi == lo:
        hi = lo * (1 + 1e-9)
    nb = max(1, math.ceil(math.log10(hi / lo) * bins_per_decade - 1e-9))
    edges = np.geomspace(lo, hi, nb + 1)
    edges[0], edges[-1] = lo, hi
    counts, _ = np.histogram(v, bins=edges, weights=w)
    total = counts.sum()
    if w is None:
        total = int(total)
    elif not total > 0:
        raise DomainError("zero total occupation time")
    density = counts / (total * np.diff(edges))
    return LogHistogram(edges, density, counts, total)


def pool_histograms(hists) -> LogHistogram:
    """Sum histograms built on identical edges and renormalize.

    Lets long event paths be reduced one at a time with a common ``bounds``.
    """
    hists = list(hists)
    if not hists:
        raise ArgumentError("nothing to pool")
    edges = hists[0].edges
    if any(h.edges.shape != edges.shape or not np.array_equal(h.edges, edges) for h in hists):
        raise ArgumentError("histograms must share their bin edges")
    counts = np.sum([h.counts for h in hists], axis=0)
    total = sum(h.total for h in hists)
    if not total > 0:
        raise DomainError("pooled histogram is empty")
    return LogHistogram(edges, counts / (total * np.diff(edges)), counts, total)


# --- spectra -------------------------------------------------------------------------------------


def estimate_psd(series, segment_len: int) -> Spectrum:
    """Average Hann-windowed periodogram over non-overlapping segments and realizations.

    Each segment has its mean removed. Normalization is one-sided so that
    ``sum(S) * df`` approximates the variance. The zero-frequency bin is dropped.
    """
    if isinstance(series, UniformSeries):
        series = [series]
    if not series:
        raise ArgumentError("no series given")
    L = int(segment_len)
    if L < 8 or L & (L - 1):
        raise ArgumentError("segment_len must be a power of two >= 8")
    dt = series[0].dt
    acc = None
    nseg = 0
    for s in series:
        if abs(s.dt - dt) > 1e-9 * dt:
            raise ArgumentError("all series must share the same dt")
        if len(s) < L:
            raise ArgumentError(f"series of length {len(s)} is shorter than segment_len={L}")
        k = len(s) // L
        f, p = signal.welch(s.values[: k * L], fs=1.0 / dt, window="hann", nperseg=L, noverlap=0,
                            detrend="constant", scaling="density", return_onesided=True, average="mean")
        acc = p * k if acc is None else acc + p * k
        nseg += k
    power = acc / nseg
    meta = {"estimator": "welch", "window": "hann", "overlap": 0, "detrend": "constant", "segment_len": L,
            "dt": dt, "realizations": len(series)}
    return Spectrum(f[1:], power[1:], nseg, meta)


# --- fits ----------------------------------------------------------------------------------------


def _loglog_fit(x, y, window, min_points, label):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    lo, hi = window
    if not 0 < lo < hi:
        raise ArgumentError("fit window must satisfy 0 < lo < hi")
    sel = (x >= lo) & (x <= hi) & (y > 0) & np.isfinite(y)
    n = int(sel.sum())
    if n < min_points:
        raise ArgumentError(f"only {n} usable points in window [{lo:g}, {hi:g}], need {min_points}")
    lx, ly = np.log10(x[sel]), np.log10(y[sel])
    A = np.vstack([lx, np.ones_like(lx)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - (slope * lx + icpt)
    return float(slope), float(icpt), float(np.sqrt(np.mean(resid**2))), n


def fit_powerlaw(xy, window, label: str = "") -> ExponentReport:
    """Least-squares slope of ``log10 y`` against ``log10 x`` in ``window``; exponent = -slope.

    ``xy`` is a :class:`LogHistogram`, a :class:`Spectrum` or an ``(x, y)`` pair.
    At least five points with positive ordinate must fall inside the window.
    """
    x, y = xy.xy() if hasattr(xy, "xy") else xy
    slope, icpt, rms, n = _loglog_fit(x, y, window, 5, label)
    return ExponentReport(-slope, (float(window[0]), float(window[1])), rms, n, icpt, label)


# --- MF-DFA --------------------------------------------------------------------------------------


def default_q_grid() -> np.ndarray:
    return np.array([-10, -8, -6, -4, -2, -1, -0.5, 0, 0.5, 1, 2, 4, 6, 8, 10], dtype=float)


def default_s_grid(length: int, m: int = 1, points: int = 20) -> np.ndarray:
    """Log-spaced segment sizes from 16 to ``length / 8`` (integers, unique)."""
    lo = max(16, 2 * (m + 2))
    hi = length // 8
    if hi < lo:
        raise ArgumentError(f"series of length {length} is too short for the default segment grid")
    return np.unique(np.round(np.geomspace(lo, hi, points)).astype(int))


def _segments(profile, s):
    n = profile.size
    ns = n // s
    fwd = profile[: ns * s].reshape(ns, s)
    bwd = profile[n - ns * s:].reshape(ns, s)[::-1]
    return np.vstack([fwd, bwd])


def _segment_variances(profile, s, m):
    seg = _segments(profile, s)
    i = np.arange(s, dtype=float)
    V = np.vander((i - i.mean()) / s, m + 1)
    Q, _ = np.linalg.qr(V)
    resid = seg - (seg @ Q) @ Q.T
    return np.mean(resid**2, axis=1)


def _check_mfdfa(n, s_grid, m):
    s_grid = np.asarray(s_grid, dtype=int)
    if m < 0:
        raise ArgumentError("detrend order must be >= 0")
    if s_grid.size == 0 or np.any(s_grid < 2 * (m + 2)):
        raise ArgumentError(f"segment sizes must be >= 2(m+2) = {2 * (m + 2)}")
    if n < 4 * s_grid.max():
        raise ArgumentError(f"series length {n} must be at least 4 * max(s) = {4 * s_grid.max()}")
    return s_grid


def mfdfa(series, q_grid=None, s_grid=None, m: int = 1) -> FluctuationSurface:
    """Multifractal detrended fluctuation analysis.

    The profile is the cumulative sum of the mean-removed series. It is cut into
    ``N_s = floor(N/s)`` segments from the start and ``N_s`` from the end; each
    segment's variance around a degree-``m`` polynomial fit gives ``F2``. Then

        F_q(s) = [ mean(F2 ** (q/2)) ] ** (1/q),   F_0(s) = exp( mean(ln F2) / 2 ).

    Segments with ``F2 = 0`` are left out of the ``q <= 0`` averages and counted in
    ``zero_segments``.
    """
    x = series.values if isinstance(series, UniformSeries) else np.asarray(series, dtype=float)
    q = default_q_grid() if q_grid is None else np.asarray(q_grid, dtype=float)
    s_grid = default_s_grid(x.size, m) if s_grid is None else s_grid
    s_grid = _check_mfdfa(x.size, s_grid, m)
    profile = np.cumsum(x - x.mean())
    # detrending residue of an exactly polynomial segment is round-off, not signal
    tol = 1e-24 * float(np.mean(profile**2))
    F = np.empty((q.size, s_grid.size))
    zeros = 0
    for j, s in enumerate(s_grid):
        f2 = _segment_variances(profile, int(s), m)
        pos = f2 > tol
        nz = int((~pos).sum())
        zeros += nz
        for i, qq in enumerate(q):
            if qq == 0:
                F[i, j] = math.exp(0.5 * np.mean(np.log(f2[pos])))
            elif qq < 0:
                F[i, j] = np.mean(f2[pos] ** (0.5 * qq)) ** (1.0 / qq)
            else:
                F[i, j] = np.mean(f2 ** (0.5 * qq)) ** (1.0 / qq)
    if zeros:
        warnings.warn(f"{zeros} zero-variance segments excluded from q <= 0 averages", RuntimeWarning, stacklevel=2)
    return FluctuationSurface(q, s_grid, F, m, zeros)


def dfa(series, s_grid, m: int = 1) -> np.ndarray:
    """Classical detrended fluctuation function ``F(s)`` over both-end segmentation.

    Straightforward per-segment ``numpy.polyfit`` implementation, kept separate
    from :func:`mfdfa` as an independent reference.
    """
    x = series.values if isinstance(series, UniformSeries) else np.asarray(series, dtype=float)
    s_grid = _check_mfdfa(x.size, s_grid, m)
    y = np.cumsum(x - x.mean())
    n = y.size
    out = np.empty(s_grid.size)
    for j, s in enumerate(s_grid):
        ns = n // s
        idx = np.arange(1, s + 1, dtype=float)
        acc = 0.0
        starts = [k * s for k in range(ns)] + [n - (k + 1) * s for k in range(ns)]
        for a in starts:
            seg = y[a:a + s]
            coef = np.polyfit(idx, seg, m)
            acc += np.mean((seg - np.polyval(coef, idx)) ** 2)
        out[j] = math.sqrt(acc / (2 * ns))
    return out


def hurst_spectrum(surface: FluctuationSurface, fit_window) -> list[ExponentReport]:
    """Generalized Hurst exponents: slope of ``log F_q(s)`` against ``log s`` per ``q``."""
    lo, hi = fit_window
    sel = (surface.s >= lo) & (surface.s <= hi)
    if sel.sum() < 4:
        raise ArgumentError("fit window must contain at least four segment sizes")
    out = []
    for i, q in enumerate(surface.q):
        slope, icpt, rms, n = _loglog_fit(surface.s, surface.F[i], fit_window, 4, f"h(q={q:g})")
        out.append(ExponentReport(slope, (float(lo), float(hi)), rms, n, icpt, f"h(q={q:g})"))
    return out

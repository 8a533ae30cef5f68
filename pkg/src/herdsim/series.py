"""Series containers, resampling, seeded random streams and CSV interchange.

Random-stream contract
----------------------
A :class:`SeedSpec` ``(master_seed, realization_index)`` maps to
``numpy.random.Generator(Philox(SeedSequence(master_seed, spawn_key=(index,))))``.
Philox is counter-based and ``SeedSequence`` spawn keys give statistically
independent streams per index, so realizations never share state. The jitted
simulators draw from the same Generator object (numba re-implements NumPy's
exponential/normal ziggurat samplers), which makes output bit-reproducible
for a given build.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ArgumentError, DegenerateInputError, ParseError

__all__ = [
    "UniformSeries",
    "EventPath",
    "SeedSpec",
    "resample",
    "moving_average",
    "normalize",
    "write_series_csv",
    "read_series_csv",
    "read_path_csv",
]


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    realization_index: int = 0

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise ArgumentError("master_seed must be a 64-bit unsigned integer")
        if int(self.realization_index) < 0:
            raise ArgumentError("realization_index must be non-negative")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.master_seed), spawn_key=(int(self.realization_index),))
        return np.random.Generator(np.random.Philox(ss))

    def realization(self, index: int) -> "SeedSpec":
        return SeedSpec(self.master_seed, index)

    def as_dict(self):
        return {"master_seed": int(self.master_seed), "realization_index": int(self.realization_index)}


def as_generator(seed) -> np.random.Generator:
    """Accept a SeedSpec, an int or an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, SeedSpec):
        return seed.generator()
    return SeedSpec(int(seed)).generator()


@dataclass(frozen=True)
class UniformSeries:
    """Equally spaced samples ``values[k]`` at ``t0 + k * dt``."""

    t0: float
    dt: float
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or vals.size == 0:
            raise ArgumentError("series values must be a non-empty 1-d array")
        if not self.dt > 0:
            raise ArgumentError(f"dt must be positive, got {self.dt!r}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "meta", dict(self.meta))

    def __len__(self):
        return self.values.size

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.values.size)

    def with_values(self, values, **meta) -> "UniformSeries":
        return replace(self, values=np.asarray(values, dtype=float), meta={**self.meta, **meta})


@dataclass(frozen=True)
class EventPath:
    """Piecewise-constant path: the value holds from ``times[i]`` until ``times[i+1]``.

    The final time may be a bare horizon marker (``end``) after which the
    path is undefined.
    """

    times: np.ndarray
    values: np.ndarray
    end: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values)
        if t.ndim != 1 or t.shape != v.shape or t.size == 0:
            raise ArgumentError("times and values must be equal-length non-empty 1-d arrays")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise ArgumentError("event times must be strictly increasing")
        if self.end is not None and self.end < t[-1]:
            raise ArgumentError("end precedes the last event")
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "meta", dict(self.meta))

    def __len__(self):
        return self.times.size

    @property
    def t_end(self) -> float:
        return float(self.times[-1] if self.end is None else self.end)

    def occupation(self, minlength=0) -> np.ndarray:
        """Total time spent in each integer state up to ``t_end``."""
        hold = np.diff(np.append(self.times, self.t_end))
        return np.bincount(np.asarray(self.values, dtype=np.int64), weights=hold, minlength=minlength)


def resample(path: EventPath, dt: float) -> UniformSeries:
    """Sample-and-hold onto the grid ``t0 + k*dt``; the last partial interval is dropped."""
    if not dt > 0:
        raise ArgumentError(f"dt must be positive, got {dt!r}")
    t0 = float(path.times[0])
    span = path.t_end - t0
    if span < 2 * dt * (1 - 1e-12):
        raise ArgumentError(f"path spans {span:g}, needs at least 2*dt = {2 * dt:g}")
    n = int(math.floor(span / dt * (1 + 1e-12))) + 1
    grid = t0 + dt * np.arange(n)
    idx = np.searchsorted(path.times, grid * (1 + 1e-13) + 1e-300, side="right") - 1
    return UniformSeries(t0, dt, np.asarray(path.values, dtype=float)[idx], dict(path.meta))


def moving_average(series: UniformSeries, window: int) -> UniformSeries:
    """Causal mean over the trailing ``window`` samples (length shrinks by window-1)."""
    window = int(window)
    n = len(series)
    if window < 1 or window > n:
        raise ArgumentError(f"window must be in [1, {n}], got {window}")
    if window == 1:
        return series
    c = np.cumsum(np.concatenate(([0.0], series.values)))
    avg = (c[window:] - c[:-window]) / window
    return UniformSeries(
        series.t0 + (window - 1) * series.dt, series.dt, avg, {**series.meta, "ma_window": window}
    )


def normalize(series: UniformSeries) -> UniformSeries:
    """Divide by the mean absolute value; the factor is kept in ``meta['scale']``."""
    scale = float(np.mean(np.abs(series.values)))
    if not scale > 0:
        raise DegenerateInputError("cannot normalize a series whose values are all zero")
    return series.with_values(series.values / scale, scale=scale)


def _fmt(x):
    return repr(float(x))


def write_series_csv(series: UniformSeries, path, sidecar=True):
    """Write ``t,value`` rows with round-trip float precision plus a JSON meta sidecar."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write("t,value\n")
        for t, v in zip(series.times, series.values):
            fh.write(f"{_fmt(t)},{_fmt(v)}\n")
    if sidecar:
        meta = {"t0": series.t0, "dt": series.dt, **series.meta}
        path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta, indent=2, default=_jsonable))
    return path


def _jsonable(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return str(obj)


def read_path_csv(path):
    """Parse an interchange CSV into ``(times, values)`` arrays."""
    path = Path(path)
    times, values = [], []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", line=1) from None
        if [h.strip() for h in header[:2]] != ["t", "value"]:
            raise ParseError(f"expected header 't,value', got {','.join(header)!r}", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < 2:
                raise ParseError("expected two columns", line=lineno)
            try:
                t, v = float(row[0]), float(row[1])
            except ValueError:
                raise ParseError(f"non-numeric field in {row!r}", line=lineno) from None
            if not (math.isfinite(t) and not math.isnan(v)):
                raise ParseError(f"non-finite value in {row!r}", line=lineno)
            times.append(t)
            values.append(v)
    if len(times) < 2:
        raise ParseError("need at least two data rows", line=len(times) + 1)
    t = np.array(times)
    if not np.all(np.diff(t) > 0):
        bad = int(np.argmin(np.diff(t) > 0)) + 3
        raise ParseError("times must be strictly increasing", line=bad)
    meta = {}
    side = path.with_suffix(path.suffix + ".json")
    if side.exists():
        meta = json.loads(side.read_text())
    return t, np.array(values), meta


def read_series_csv(path, rel_jitter=1e-6):
    """Read an interchange CSV as a :class:`UniformSeries`.

    Spacing jitter up to ``rel_jitter`` (relative) is absorbed silently. Larger
    inconsistencies are re-gridded by sample-and-hold at the median spacing and
    flagged in ``meta['regrid_warning']``.
    """
    t, v, meta = read_path_csv(path)
    steps = np.diff(t)
    dt = float(np.median(steps))
    meta = {k: val for k, val in meta.items() if k not in ("t0", "dt")}
    meta["source"] = str(path)
    if np.max(np.abs(steps - dt)) <= rel_jitter * dt:
        return UniformSeries(float(t[0]), dt, v, meta)
    meta["regrid_warning"] = f"non-uniform spacing (max deviation {np.max(np.abs(steps - dt)):g}); re-gridded"
    regridded = resample(EventPath(t, v, end=float(t[-1]) + dt), dt)
    return regridded.with_values(regridded.values, **meta)

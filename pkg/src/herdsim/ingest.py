"""Empirical-data ingestion: interchange CSV files to a pooled set of realizations."""

from __future__ import annotations

import warnings

from .errors import ArgumentError
from .series import UniformSeries, moving_average, normalize, read_series_csv

__all__ = ["RegridWarning", "ingest_empirical"]


class RegridWarning(UserWarning):
    """A file's spacing was too irregular to accept as is and was re-gridded."""


def ingest_empirical(paths, ma_window: int = 1, normalize_series: bool = False,
                     rel_jitter: float = 1e-6) -> list[UniformSeries]:
    """Read each file as one realization of the same process.

    Every file is smoothed by a trailing moving average of ``ma_window``
    samples and then, if ``normalize_series`` is set, divided by its mean
    absolute value. Order follows ``paths``.

    Raises
    ------
    ParseError
        A malformed row; the message carries the line number.
    """
    paths = list(paths)
    if not paths:
        raise ArgumentError("no input files")
    if int(ma_window) != ma_window or ma_window < 1:
        raise ArgumentError(f"ma_window must be a positive integer, got {ma_window!r}")
    out = []
    for p in paths:
        s = read_series_csv(p, rel_jitter=rel_jitter)
        if "regrid_warning" in s.meta:
            warnings.warn(f"{p}: {s.meta['regrid_warning']}", RegridWarning, stacklevel=2)
        s = moving_average(s, int(ma_window))
        if normalize_series:
            s = normalize(s)
        out.append(s)
    return out

"""Command-line entry point.

Every leaf command takes ``--config FILE`` (TOML; flags given on the command
line win) and ``--out DIR``. Outputs are staged in a scratch directory and
moved into place only after the command succeeds, together with a JSON
manifest that records the resolved arguments, seed, package versions and the
SHA-256 of every input and output. ``herdsim replay MANIFEST`` re-runs a
manifest and compares hashes.

Exit status: 0 success, 1 a recipe check failed or a replay hash differed,
2 argument or domain error, 3 numerical failure, 4 I/O or parse error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import shutil
import sys
import tempfile
import warnings
from pathlib import Path

import numpy as np

from . import __version__, bass, bursts, recipes
from .analysis import estimate_pdf, estimate_psd, fit_powerlaw, hurst_spectrum, mfdfa
from .errors import ArgumentError, DomainError, HerdsimError, IntegrationError, ParseError
from .ingest import RegridWarning, ingest_empirical
from .kirman import KirmanParams, simulate_grid, simulate_many
from .sde import MODELS, StepControl, herding_exponents, integrate_many, make_model, predict_beta, qgaussian_pdf
from .series import SeedSpec, read_series_csv, write_series_csv

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("herdsim")

EXIT_OK, EXIT_CHECK, EXIT_ARGS, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3, 4


class CommandError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


# --- output staging and manifests ----------------------------------------------------------------


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _finite(obj):
    # strict JSON has no Infinity/NaN literals
    if isinstance(obj, (float, np.floating)) and not np.isfinite(obj):
        return str(float(obj))
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _finite(obj.tolist())
    return obj


def _dumps(obj) -> str:
    return json.dumps(_finite(obj), indent=2, sort_keys=True, default=_json_default, allow_nan=False) + "\n"


class Outputs:
    """Files written into a scratch directory and published together on success."""

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)
        self.stage = Path(tempfile.mkdtemp(prefix="herdsim-stage-"))
        self.names: list[str] = []

    def path(self, name: str) -> Path:
        self.names.append(name)
        return self.stage / name

    def series(self, name: str, series):
        write_series_csv(series, self.path(name))
        self.names.append(name + ".json")

    def table(self, name: str, header, columns):
        cols = [np.asarray(c) for c in columns]
        with self.path(name).open("w", newline="") as fh:
            fh.write(",".join(header) + "\n")
            for row in zip(*cols):
                fh.write(",".join(_cell(v) for v in row) + "\n")

    def json(self, name: str, obj):
        self.path(name).write_text(_dumps(obj))

    def publish(self, manifest_name: str, manifest: dict):
        outputs = [{"path": n, "sha256": _sha256(self.stage / n)} for n in self.names]
        manifest = {**manifest, "outputs": outputs}
        (self.stage / manifest_name).write_text(_dumps(manifest))
        self.out_dir.mkdir(parents=True, exist_ok=True)
        for n in self.names + [manifest_name]:
            shutil.move(self.stage / n, self.out_dir / n)
        self.discard()
        return manifest

    def discard(self):
        shutil.rmtree(self.stage, ignore_errors=True)


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _versions():
    import numba
    import scipy

    return {"herdsim": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__}


# --- config files --------------------------------------------------------------------------------


def _config_tokens(path, command: list[str], parser_for_cmd) -> list[str]:
    """Turn a TOML file into option tokens for ``command``.

    Top-level keys apply to every command; a table named after the command
    (``[simulate.sde]`` or ``[ingest]``) adds to or replaces them. Booleans
    become bare flags, lists repeat values, and the ``param`` table becomes
    repeated ``--param key=value``.
    """
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise CommandError(f"cannot read config {path}: {exc}", EXIT_IO) from None
    except tomllib.TOMLDecodeError as exc:
        raise CommandError(f"config {path}: {exc}", EXIT_IO) from None
    flat = {k: v for k, v in data.items() if not isinstance(v, dict) or k == "param"}
    node = data
    for word in command:
        node = node.get(word, {}) if isinstance(node, dict) else {}
    if isinstance(node, dict):
        flat.update({k: v for k, v in node.items() if not isinstance(v, dict) or k == "param"})
    known = {a.dest: a for a in parser_for_cmd._actions}
    tokens: list[str] = []
    positional: list[str] = []
    for key, val in flat.items():
        dest = key.replace("-", "_")
        act = known.get(dest)
        if act is None:
            raise CommandError(f"config {path}: unknown key {key!r} for '{' '.join(command)}'", EXIT_ARGS)
        if not act.option_strings:
            positional += [str(v) for v in (val if isinstance(val, list) else [val])]
            continue
        flag = act.option_strings[-1]
        if dest == "param":
            if not isinstance(val, dict):
                raise CommandError(f"config {path}: 'param' must be a table", EXIT_ARGS)
            for k, v in val.items():
                tokens += [flag, f"{k}={v}"]
        elif isinstance(val, bool):
            if val:
                tokens.append(flag)
        elif isinstance(val, list):
            tokens += [flag] + [str(v) for v in val]
        else:
            tokens += [flag, str(val)]
    return tokens, positional


# --- shared option groups ------------------------------------------------------------------------


def _common(p, seeded=False):
    p.add_argument("--config", help="TOML file of default option values")
    p.add_argument("--out", default=".", help="output directory (default: current)")
    if seeded:
        p.add_argument("--seed", type=int, default=0, help="master seed")
        p.add_argument("--realizations", type=int, default=1, help="independent runs, streams 0..R-1")
        p.add_argument("--workers", type=int, default=None, help="worker threads for realizations")


def _pair(text):
    k, sep, v = text.partition("=")
    if not sep or not k:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    try:
        return k, float(v)
    except ValueError:
        raise argparse.ArgumentTypeError(f"value of {k!r} must be a number, got {v!r}") from None


def _toml_pair(text):
    k, sep, v = text.partition("=")
    if not sep or not k:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    try:
        return k, tomllib.loads(f"v = {v}")["v"]
    except tomllib.TOMLDecodeError:
        return k, v


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="herdsim", description="Herding models, their SDE limits and the statistics comparing them.")
    top.add_argument("--version", action="version", version=f"herdsim {__version__}")
    top.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    groups = top.add_subparsers(dest="group", required=True, metavar="COMMAND")

    sim = groups.add_parser("simulate", help="generate time series").add_subparsers(dest="sub", required=True)
    p = sim.add_parser("kirman", help="herding agent chain, exact event times sampled on a grid")
    _common(p, seeded=True)
    p.add_argument("--n-agents", type=int, required=True)
    p.add_argument("--sigma1", type=float, required=True)
    p.add_argument("--sigma2", type=float, required=True)
    p.add_argument("--h", type=float, required=True)
    p.add_argument("--coupling", choices=["global", "extensive"], default="global")
    p.add_argument("--feedback-alpha", type=float, default=0.0)
    p.add_argument("--x0", type=int, required=True, help="initial number of agents in the tracked state")
    p.add_argument("--horizon", type=float, required=True)
    p.add_argument("--dt", type=float, required=True, help="output grid step")
    p.add_argument("--fraction", action="store_true", help="write x = X/N instead of X")

    p = sim.add_parser("sde", help="adaptive-step SDE integration on a grid")
    _common(p, seeded=True)
    p.add_argument("--model", choices=sorted(MODELS), required=True)
    p.add_argument("--param", type=_pair, action="append", default=[], metavar="KEY=VALUE",
                   help="model parameter, repeatable (e.g. eta=2.5)")
    p.add_argument("--y0", type=float, required=True)
    p.add_argument("--horizon", type=float, required=True)
    p.add_argument("--dt", type=float, required=True, help="output grid step")
    p.add_argument("--sampling", choices=["point", "mean"], default="point")
    p.add_argument("--kappa", type=float, default=StepControl.kappa)
    p.add_argument("--dt-max", type=float, default=StepControl.dt_max)
    p.add_argument("--boundary", choices=["reflect", "absorb", "error", "exact", "none"], default=None)
    p.add_argument("--time-scale", type=float, default=1.0)

    p = sim.add_parser("bass", help="adoption chain against the Bass equation")
    _common(p, seeded=True)
    p.add_argument("--n-potential", type=int, required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--h", type=float, required=True)
    p.add_argument("--tau", type=float, required=True, help="adoption-rate window")
    p.add_argument("--horizon", type=float, required=True)

    ana = groups.add_parser("analyze", help="statistics of CSV series").add_subparsers(dest="sub", required=True)
    p = ana.add_parser("pdf", help="log-binned density, inputs pooled")
    _common(p)
    p.add_argument("inputs", nargs="*")
    p.add_argument("--bins-per-decade", type=int, default=10)
    p.add_argument("--bounds", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--abs", action="store_true", help="use absolute values")
    p.add_argument("--fit", type=float, nargs=2, metavar=("LO", "HI"), help="power-law fit window")

    p = ana.add_parser("psd", help="Welch spectrum averaged over inputs")
    _common(p)
    p.add_argument("inputs", nargs="*")
    p.add_argument("--segment", type=int, required=True, help="segment length, a power of two")
    p.add_argument("--log-bins", type=int, default=0, help="bins per decade (0: raw spectrum)")
    p.add_argument("--fit", type=float, nargs=2, metavar=("LO", "HI"))

    p = ana.add_parser("mfdfa", help="generalized Hurst exponents of one series")
    _common(p)
    p.add_argument("inputs", nargs="*")
    p.add_argument("--q", type=float, nargs="+", default=[-4, -3, -2, -1, 0, 1, 2, 3, 4])
    p.add_argument("--s-min", type=int, default=16)
    p.add_argument("--s-max", type=int, default=None, help="default: length / 8")
    p.add_argument("--s-points", type=int, default=20)
    p.add_argument("--order", type=int, default=1, help="detrending polynomial order")
    p.add_argument("--fit", type=float, nargs=2, metavar=("LO", "HI"), required=True)

    p = ana.add_parser("fit", help="power-law fit of a two-column CSV")
    _common(p)
    p.add_argument("inputs", nargs="*")
    p.add_argument("--window", type=float, nargs=2, metavar=("LO", "HI"), required=True)

    p = ana.add_parser("bursts", help="threshold bursts, inputs pooled")
    _common(p)
    p.add_argument("inputs", nargs="*")
    p.add_argument("--threshold", type=float, required=True)
    p.add_argument("--eta", type=float, help="compare durations with the first-passage law of this eta")
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--h-y", type=float, default=None, help="threshold in model units (default: --threshold)")
    p.add_argument("--t-min", type=float, default=None, help="shortest duration kept, model time")
    p.add_argument("--time-scale", type=float, default=1.0, help="model time per series time unit")

    th = groups.add_parser("theory", help="closed-form predictions").add_subparsers(dest="sub", required=True)
    p = th.add_parser("exponents", help="density and spectral exponents of the activity-feedback model")
    _common(p)
    p.add_argument("--eps2", type=float, required=True)
    p.add_argument("--alpha", type=float, required=True)

    p = th.add_parser("beta", help="spectral exponent of the power-law SDE")
    _common(p)
    p.add_argument("--eta", type=float, required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)

    p = th.add_parser("qgaussian", help="q-Gaussian stationary density on a grid")
    _common(p)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--y-max", type=float, default=10.0)
    p.add_argument("--points", type=int, default=201)

    p = th.add_parser("burst-pdf", help="burst-duration density on a log grid")
    _common(p)
    p.add_argument("--eta", type=float, required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--h-y", type=float, required=True)
    p.add_argument("--t-min", type=float, required=True)
    p.add_argument("--t-max", type=float, required=True)
    p.add_argument("--points", type=int, default=100)
    p.add_argument("--mode", choices=["series", "closed_form"], default="series")

    p = groups.add_parser("ingest", help="moving average and normalization of empirical CSV files")
    _common(p)
    p.add_argument("inputs", nargs="*")
    p.add_argument("--ma-window", type=int, default=1)
    p.add_argument("--normalize", action="store_true")

    p = groups.add_parser("recipe", help="run a bundled or custom reproduction recipe")
    _common(p)
    p.add_argument("inputs", nargs="*", metavar="RECIPE", help=f"one of {', '.join(recipes.available())} or a path")
    p.add_argument("--set", type=_toml_pair, action="append", default=[], metavar="KEY=VALUE",
                   help="override a recipe parameter (TOML literal)")
    p.add_argument("--list", action="store_true", help="list bundled recipes and exit")

    p = groups.add_parser("replay", help="re-run a manifest and compare output hashes")
    p.add_argument("manifest")
    p.add_argument("--out", default=None, help="where to re-run (default: a temporary directory)")
    return top


# --- commands ------------------------------------------------------------------------------------


def _need_inputs(ns, count=None):
    if not ns.inputs:
        raise CommandError("no input files given", EXIT_ARGS)
    if count is not None and len(ns.inputs) != count:
        raise CommandError(f"expected {count} input file(s), got {len(ns.inputs)}", EXIT_ARGS)
    return [Path(p) for p in ns.inputs]


def _read_all(paths):
    return [read_series_csv(p) for p in paths]


def _stem(i, n):
    return f"_{i:03d}" if n > 1 else ""


def cmd_simulate_kirman(ns, out: Outputs):
    kp = KirmanParams(ns.n_agents, ns.sigma1, ns.sigma2, ns.h, ns.coupling, ns.feedback_alpha)
    if not 0 <= ns.x0 <= ns.n_agents:
        raise ArgumentError(f"x0 must lie in [0, {ns.n_agents}]")
    _check_runs(ns)
    runs = simulate_many(kp, ns.x0, ns.horizon, SeedSpec(ns.seed), ns.realizations, ns.dt, ns.workers)
    for i, s in enumerate(runs):
        if ns.fraction:
            s = s.with_values(s.values / ns.n_agents, observable="fraction")
        out.series(f"kirman{_stem(i, len(runs))}.csv", s)
    return {"realizations": len(runs)}


def _check_runs(ns):
    if ns.realizations < 1:
        raise ArgumentError("realizations must be >= 1")
    if not (ns.horizon > 0 and ns.dt > 0):
        raise ArgumentError("horizon and dt must be positive")


def cmd_simulate_sde(ns, out: Outputs):
    model = make_model(ns.model, boundary=ns.boundary, time_scale=ns.time_scale, **dict(ns.param))
    ctl = StepControl(kappa=ns.kappa, dt_max=ns.dt_max)
    _check_runs(ns)
    if not (model.domain[0] < ns.y0 < model.domain[1]):
        raise DomainError(f"y0={ns.y0} must lie inside the domain {model.domain}")
    runs = integrate_many(model, ns.y0, ns.horizon, ns.dt, SeedSpec(ns.seed), ns.realizations, ctl, ns.workers,
                          sampling=ns.sampling)
    for i, s in enumerate(runs):
        out.series(f"sde{_stem(i, len(runs))}.csv", s)
    return {"realizations": len(runs), "model": model.describe()}


def cmd_simulate_bass(ns, out: Outputs):
    p = bass.BassParams(ns.n_potential, ns.sigma, ns.h)
    if ns.realizations < 1 or not (ns.tau > 0 and ns.horizon >= ns.tau):
        raise ArgumentError("need realizations >= 1, tau > 0 and horizon >= tau")
    seed = SeedSpec(ns.seed)
    devs = []
    for i in range(ns.realizations):
        abm, _ = simulate_grid(bass.abm_params(p), 0, ns.horizon, ns.tau, seed.realization(i))
        rate = bass.adoption_rate_series(abm, ns.tau)
        out.series(f"bass_abm{_stem(i, ns.realizations)}.csv", rate)
        ode = bass.adoption_rate_series(bass.bass_ode_solve(p, abm.times), ns.tau)
        devs.append(float(np.max(np.abs(rate.values - ode.values)) / np.max(ode.values)))
    out.series("bass_ode.csv", ode)
    summary = {"deviations": devs, "median_deviation": float(np.median(devs)),
               "inflection_time": bass.inflection_time(p)}
    out.json("bass_summary.json", summary)
    return summary


def cmd_analyze_pdf(ns, out: Outputs):
    data = _read_all(_need_inputs(ns))
    values = np.concatenate([s.values for s in data])
    if ns.abs:
        values = np.abs(values)
    hist = estimate_pdf(values, ns.bins_per_decade, tuple(ns.bounds) if ns.bounds else None)
    out.table("pdf.csv", ["x", "density", "count"], [hist.centers, hist.density, hist.counts])
    res = {"samples": int(hist.total), "bins": int(hist.counts.size)}
    if ns.fit:
        res["fit"] = fit_powerlaw(hist, tuple(ns.fit), "pdf").as_dict()
    out.json("pdf_fit.json", res)
    return res


def cmd_analyze_psd(ns, out: Outputs):
    spec = estimate_psd(_read_all(_need_inputs(ns)), ns.segment)
    if ns.log_bins:
        spec = spec.log_binned(ns.log_bins)
    out.table("psd.csv", ["f", "power"], [spec.freqs, spec.power])
    res = {"segments": spec.n_segments, "meta": spec.meta}
    if ns.fit:
        res["fit"] = fit_powerlaw(spec, tuple(ns.fit), "psd").as_dict()
    out.json("psd_fit.json", res)
    return res


def cmd_analyze_mfdfa(ns, out: Outputs):
    (series,) = _read_all(_need_inputs(ns, 1))
    s_max = ns.s_max or len(series) // 8
    if not 0 < ns.s_min < s_max:
        raise ArgumentError("need 0 < s-min < s-max")
    s_grid = np.unique(np.geomspace(ns.s_min, s_max, ns.s_points).astype(int))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        surf = mfdfa(series, np.array(ns.q, dtype=float), s_grid, ns.order)
    reps = hurst_spectrum(surf, tuple(ns.fit))
    out.table("fluctuation.csv", ["s"] + [f"F_q={q:g}" for q in surf.q], [surf.s] + list(surf.F))
    res = {"q": surf.q.tolist(), "h": [r.exponent for r in reps], "fits": [r.as_dict() for r in reps],
           "zero_segments": surf.zero_segments, "warnings": [str(w.message) for w in caught]}
    out.json("hurst.json", res)
    return {k: res[k] for k in ("q", "h")}


def _read_xy(path):
    try:
        raw = np.genfromtxt(path, delimiter=",", names=True, invalid_raise=True)
    except ValueError as exc:
        raise ParseError(str(exc)) from None
    names = raw.dtype.names or ()
    if len(names) < 2:
        raise ParseError("expected a header and at least two columns", line=1)
    raw = np.atleast_1d(raw)
    return np.asarray(raw[names[0]], float), np.asarray(raw[names[1]], float)


def cmd_analyze_fit(ns, out: Outputs):
    (path,) = _need_inputs(ns, 1)
    rep = fit_powerlaw(_read_xy(path), tuple(ns.window), path.stem)
    out.json("fit.json", rep.as_dict())
    return rep.as_dict()


def analyze_bursts(series_list, threshold, eta=None, lam=None, h_y=None, t_min=None, time_scale=1.0):
    """Pooled burst extraction and optional comparison with the duration law.

    Returns ``(BurstSet, summary)``. Durations are multiplied by ``time_scale``
    before they meet the theory, which lives in model time.
    """
    sets = [bursts.extract_bursts(s, threshold) for s in series_list]
    pooled = bursts.pool_bursts(sets)
    d = pooled.durations
    summary = {"bursts": len(pooled), "complete": pooled.complete, "per_series": [len(b) for b in sets],
               "mean_duration": float(d.mean()) if d.size else None,
               "mean_size": float(pooled.size[~pooled.truncated].mean()) if d.size else None}
    if eta is not None:
        if lam is None or t_min is None:
            raise ArgumentError("the duration law needs --eta, --lambda and --t-min together")
        bmap = bursts.BesselMap(eta, lam, h_y if h_y is not None else threshold)
        summary["theory"] = recipes.burst_duration_stats(d * time_scale, bmap, t_min)
    return pooled, summary


def cmd_analyze_bursts(ns, out: Outputs):
    data = _read_all(_need_inputs(ns))
    pooled, summary = analyze_bursts(data, ns.threshold, ns.eta, ns.lam, ns.h_y, ns.t_min, ns.time_scale)
    out.table("bursts.csv", ["start", "end", "duration", "peak", "size", "truncated"],
              [pooled.start, pooled.end, pooled.end - pooled.start, pooled.peak, pooled.size, pooled.truncated])
    out.json("bursts_summary.json", summary)
    return summary


def cmd_theory_exponents(ns, out):
    return herding_exponents(ns.eps2, ns.alpha)


def cmd_theory_beta(ns, out):
    return {"eta": ns.eta, "lambda": ns.lam, "beta": predict_beta(ns.lam, ns.eta)}


def cmd_theory_qgaussian(ns, out: Outputs):
    if ns.points < 2 or not ns.y_max > 0:
        raise ArgumentError("need points >= 2 and y-max > 0")
    y = np.linspace(-ns.y_max, ns.y_max, ns.points)
    out.table("qgaussian.csv", ["y", "density"], [y, qgaussian_pdf(ns.lam, y)])
    return {"lambda": ns.lam, "points": ns.points}


def cmd_theory_burst_pdf(ns, out: Outputs):
    bmap = bursts.BesselMap(ns.eta, ns.lam, ns.h_y)
    if not 0 < ns.t_min < ns.t_max or ns.points < 2:
        raise ArgumentError("need 0 < t-min < t-max and points >= 2")
    t = np.geomspace(ns.t_min, ns.t_max, ns.points)
    out.table("burst_pdf.csv", ["t", "density"], [t, bursts.burst_duration_pdf(bmap, t, ns.mode, ns.t_min)])
    return {"nu": bmap.nu, "h_z": bmap.h_z, "crossover": bmap.crossover, "mode": ns.mode}


def cmd_ingest(ns, out: Outputs):
    paths = _need_inputs(ns)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RegridWarning)
        series = ingest_empirical(paths, ns.ma_window, ns.normalize)
    for i, s in enumerate(series):
        out.series(f"ingested{_stem(i, len(series))}.csv", s)
    return {"files": len(series), "warnings": [str(w.message) for w in caught if issubclass(w.category, RegridWarning)]}


def cmd_recipe(ns, out: Outputs):
    if ns.list:
        print("\n".join(recipes.available()))
        return {"recipes": recipes.available()}
    (name,) = ns.inputs if len(ns.inputs) == 1 else (None,)
    if name is None:
        raise CommandError("give exactly one recipe name or path", EXIT_ARGS)
    report = recipes.run_recipe(name, dict(ns.set))
    for key, (x, y) in report.pop("curves").items():
        fname = "curve_" + "".join(c if c.isalnum() or c in "-_." else "_" for c in key) + ".csv"
        out.table(fname, ["x", "y"], [x, y])
    report["checks"] = [c.as_dict() for c in report["checks"]]
    report["passed"] = all(c["passed"] for c in report["checks"])
    out.json(f"{report['recipe']}_report.json", report)
    for c in report["checks"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'} [{c['criterion']}] {c['name']}: {c['value']:.4g} (target {c['target']})")
    return {"passed": report["passed"], "checks": len(report["checks"])}


COMMANDS = {
    ("simulate", "kirman"): cmd_simulate_kirman,
    ("simulate", "sde"): cmd_simulate_sde,
    ("simulate", "bass"): cmd_simulate_bass,
    ("analyze", "pdf"): cmd_analyze_pdf,
    ("analyze", "psd"): cmd_analyze_psd,
    ("analyze", "mfdfa"): cmd_analyze_mfdfa,
    ("analyze", "fit"): cmd_analyze_fit,
    ("analyze", "bursts"): cmd_analyze_bursts,
    ("theory", "exponents"): cmd_theory_exponents,
    ("theory", "beta"): cmd_theory_beta,
    ("theory", "qgaussian"): cmd_theory_qgaussian,
    ("theory", "burst-pdf"): cmd_theory_burst_pdf,
    ("ingest",): cmd_ingest,
    ("recipe",): cmd_recipe,
}


# --- driver --------------------------------------------------------------------------------------


def _split(argv, words):
    """Index just past the command words; only flag-only global options may precede them."""
    return argv.index(words[0]) + len(words)


def _command_words(ns) -> tuple:
    return (ns.group,) if getattr(ns, "sub", None) is None else (ns.group, ns.sub)


def _find_config(argv):
    for i, a in enumerate(argv):
        if a == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if a.startswith("--config="):
            return a.split("=", 1)[1]
    return None


def _drop_option(argv, name):
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
        elif a == name:
            skip = True
        elif not a.startswith(name + "="):
            out.append(a)
    return out


def _words_in(parser, argv):
    """Command words of ``argv`` found by walking the subparser tree."""
    words, p = [], parser
    for a in argv:
        subs = [x for x in p._actions if isinstance(x, argparse._SubParsersAction)]
        if not subs:
            break
        if a in subs[0].choices:
            words.append(a)
            p = subs[0].choices[a]
    return words, p


def _resolve(argv):
    """Parse ``argv``, folding in ``--config`` so explicit flags win."""
    parser = build_parser()
    cfg = _find_config(argv)
    if cfg is None:
        return parser.parse_args(argv), list(argv)
    words, leaf = _words_in(parser, argv)
    if not words or any(isinstance(x, argparse._SubParsersAction) for x in leaf._actions):
        return parser.parse_args(argv), list(argv)  # let argparse report the incomplete command
    tokens, positional = _config_tokens(cfg, words, leaf)
    at = _split(argv, words)
    tail = _drop_option(argv[at:], "--config")
    resolved = list(argv[:at]) + tokens + tail
    ns = parser.parse_args(resolved)
    if positional and not getattr(ns, "inputs", None):
        # inputs from the file apply only when none are given on the command line
        resolved += positional
        ns = parser.parse_args(resolved)
    ns.config_file = str(cfg)
    return ns, resolved


def _manifest(ns, argv, words, result):
    params = {k: v for k, v in vars(ns).items() if k not in ("out", "config", "config_file", "verbose")}
    inputs = [{"path": str(Path(p).resolve()), "sha256": _sha256(p)} for p in getattr(ns, "inputs", None) or []
              if Path(p).is_file()]
    man = {"command": list(words), "argv": argv, "params": params, "seed": getattr(ns, "seed", None),
           "versions": _versions(), "inputs": inputs, "result": result}
    if getattr(ns, "config_file", None):
        man["config"] = {"path": ns.config_file, "sha256": _sha256(ns.config_file)}
    return man


def _replay(ns) -> int:
    try:
        man = json.loads(Path(ns.manifest).read_text())
        argv, expected = man["argv"], {o["path"]: o["sha256"] for o in man["outputs"]}
    except (OSError, ValueError, KeyError) as exc:
        raise CommandError(f"cannot load manifest {ns.manifest}: {exc}", EXIT_IO) from None
    target = ns.out or tempfile.mkdtemp(prefix="herdsim-replay-")
    words = man["command"]
    at = _split(argv, words)
    cmd = argv[:at] + ["--out", str(target)] + _drop_option(argv[at:], "--out")
    code = run(cmd)
    if code != EXIT_OK:
        return code
    bad = [p for p, h in expected.items() if not (Path(target) / p).is_file() or _sha256(Path(target) / p) != h]
    print(_dumps({"replayed_into": str(target), "outputs": len(expected), "mismatched": bad}), end="")
    return EXIT_CHECK if bad else EXIT_OK


def run(argv=None) -> int:
    """Run one command and return its exit status."""
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        ns, resolved = _resolve(argv)
    except CommandError as exc:
        print(f"herdsim: error: {exc}", file=sys.stderr)
        return exc.code
    except SystemExit as exc:  # argparse: usage errors exit with 2, --help with 0
        return int(exc.code or 0)
    if ns.verbose:
        logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s", stream=sys.stderr)
    out = None
    try:
        if ns.group == "replay":
            return _replay(ns)
        words = _command_words(ns)
        out = Outputs(ns.out)
        result = COMMANDS[words](ns, out)
        manifest = _manifest(ns, resolved, words, result)
        out.publish("-".join(words) + ".manifest.json", manifest)
        out = None
        if words[0] != "recipe":
            print(_dumps(result), end="")
        return EXIT_CHECK if words[0] == "recipe" and result.get("passed") is False else EXIT_OK
    except CommandError as exc:
        code, msg = exc.code, str(exc)
    except (ArgumentError, DomainError) as exc:
        code, msg = EXIT_ARGS, str(exc)
    except (IntegrationError, ArithmeticError) as exc:
        code, msg = EXIT_NUMERIC, str(exc)
    except (ParseError, OSError) as exc:
        code, msg = EXIT_IO, str(exc)
    except HerdsimError as exc:
        code, msg = EXIT_NUMERIC, str(exc)
    finally:
        if out is not None:
            out.discard()
    print(f"herdsim: error: {msg}", file=sys.stderr)
    return code


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()

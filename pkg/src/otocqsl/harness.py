"""Command-line driver: single runs, parameter sweeps, Haar checks and kernel export.

Exit codes: 0 success, 2 configuration error, 3 numerical invariant violation.
"""
import argparse
import csv
import json
import logging
import subprocess
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .bath import bath_kernel, fmt, nonstationary_kernel, stationary_kernel
from .exact_dynamics import OtocSeries, exact_average_otoc, exact_otoc_at, haar_otoc_statistics
from .params import ChainParams, ParameterError, TimeGrid, MAX_SITES
from .redfield import BoundSeries, qsl_bounds, timescales

log = logging.getLogger(__name__)

SERIES_HEADER = [
    "t", "Jt", "otoc_exact", "otoc_redfield", "bound_liouville", "bound_state_direct",
    "bound_state_relaxed", "rate_exact", "rate_liouville", "rate_state", "threshold",
]
SWEEP_HEADER = [
    "param", "value", "min_otoc", "argmin_t", "bound_liouville_end", "bound_state_direct_end",
    "bound_state_relaxed_end", "max_gap",
]
SCRAMBLING_THRESHOLD = 0.5
SWEEPABLE = ("g", "J", "N")
OTOC_SOURCES = ("exact", "redfield", "both")


class ConfigError(ValueError):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class InvariantViolation(RuntimeError):
    """A computed series broke an analytic invariant."""


@dataclass
class ExperimentConfig:
    params: dict = field(default_factory=dict)
    sweep: Optional[dict] = None
    otoc_source: str = "both"
    haar_check: Optional[dict] = None
    output_dir: str = "out"
    window_end: float = 1.2
    workers: int = 1

    def __post_init__(self):
        try:
            self.chain = ChainParams.from_dict(self.params)
        except ParameterError as exc:
            raise ConfigError(f"params.{exc.field}", str(exc)) from None
        except TypeError as exc:
            raise ConfigError("params", str(exc)) from None
        if self.otoc_source not in OTOC_SOURCES:
            raise ConfigError("otoc_source", f"must be one of {OTOC_SOURCES}")
        if self.sweep is not None:
            name = self.sweep.get("param")
            values = self.sweep.get("values")
            if name not in SWEEPABLE:
                raise ConfigError("sweep.param", f"must be one of {SWEEPABLE}")
            if not values:
                raise ConfigError("sweep.values", "must be a non-empty list")
            for v in values:
                self.params_for(name, v)
        if self.haar_check is not None:
            n = self.haar_check.get("n_samples", 0)
            if int(n) != n or n < 2:
                raise ConfigError("haar_check.n_samples", "must be an integer >= 2")
            if not self.haar_check.get("times"):
                raise ConfigError("haar_check.times", "must be a non-empty list")
        if not self.window_end > 0:
            raise ConfigError("window_end", "must be positive")
        if int(self.workers) != self.workers or self.workers < 1:
            raise ConfigError("workers", "must be a positive integer")

    def params_for(self, name: str, value) -> ChainParams:
        """ChainParams with one field swept; dt/t_max defaults follow a swept J."""
        data = dict(self.params)
        if name == "N":
            if int(value) != value or not 2 <= value <= MAX_SITES:
                raise ConfigError("sweep.values", f"N={value} outside [2, {MAX_SITES}]")
            value = int(value)
        data[name] = value
        try:
            return ChainParams.from_dict(data)
        except ParameterError as exc:
            raise ConfigError(f"sweep.values ({exc.field})", str(exc)) from None

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError("config", f"{path} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config", "top level must be an object")
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown config key")
        return cls(**data)

    def to_dict(self) -> dict:
        return {
            "params": self.chain.to_dict(),
            "sweep": self.sweep,
            "otoc_source": self.otoc_source,
            "haar_check": self.haar_check,
            "output_dir": str(self.output_dir),
            "window_end": self.window_end,
            "workers": self.workers,
        }


@dataclass
class RunArtifacts:
    series_csv: Path
    meta_json: Path
    sweep_csv: Optional[Path] = None
    series: Optional[BoundSeries] = None
    meta: Optional[dict] = None


def version_string() -> str:
    try:
        rev = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"], capture_output=True, text=True, check=True,
            cwd=Path(__file__).resolve().parent, timeout=5,
        ).stdout.strip()
    except (OSError, subprocess.SubprocessError):
        rev = ""
    return f"{__version__}+g{rev}" if rev else __version__


def min_otoc_window(series: OtocSeries, window_end: float, J: float = 1.0):
    """(min, argmin t) of the OTOC over J t <= window_end; first occurrence wins ties."""
    t = series.grid.points
    mask = J * t <= window_end + 1e-12
    if not mask.any():
        raise ValueError("empty window")
    values = np.asarray(series.otoc)[mask]
    i = int(np.argmin(values))
    return float(values[i]), float(t[mask][i])


def first_local_minimum(series: OtocSeries) -> Optional[float]:
    """Time of the first interior local minimum of the OTOC, for exploring revival windows."""
    v = np.asarray(series.otoc)
    for i in range(1, len(v) - 1):
        if v[i] < v[i - 1] and v[i] <= v[i + 1]:
            return float(series.grid.points[i])
    return None


def compute_run(params: ChainParams, otoc_source: str = "both"):
    """Full pipeline for one parameter point: kernel, Redfield, bounds, rates."""
    grid = TimeGrid.from_params(params)
    kernel = bath_kernel(params, grid)
    series = qsl_bounds(params, kernel, grid, compute_exact=otoc_source in ("exact", "both"))
    scales = timescales(params, kernel)
    scales["gamma_at_zero"] = [float(kernel.value(0, 0).real), float(kernel.value(0, 0).imag)]
    return series, scales


def check_series(series: BoundSeries):
    """Return (fatal violations, ordering report) for a bound series."""
    fatal = []
    bounds = {
        "bound_liouville": series.bound_liouville,
        "bound_state_direct": series.bound_state_direct,
        "bound_state_relaxed": series.bound_state_relaxed,
    }
    for name, b in bounds.items():
        if b[0] != 1.0 or np.any(b > 1.0):
            fatal.append(f"{name} exceeds 1")
        if np.any(np.diff(b) > 0):
            fatal.append(f"{name} increases in time")
    if series.otoc_exact is not None:
        o = series.otoc_exact
        if abs(o[0] - 1.0) > 1e-10:
            fatal.append(f"otoc_exact(0) = {o[0]!r} != 1")
        if np.any(o < SCRAMBLING_THRESHOLD - 1e-10) or np.any(o > 1.0 + 1e-10):
            fatal.append("otoc_exact leaves [0.5, 1]")
    states = series.diagnostics.get("redfield_states")
    if states is not None:
        tr = np.abs(np.trace(states, axis1=1, axis2=2) - 1).max()
        herm = np.abs(states - np.conj(np.swapaxes(states, 1, 2))).max()
        if tr > 1e-8:
            fatal.append(f"Redfield trace error {tr:.2e}")
        if herm > 1e-10:
            fatal.append(f"Redfield Hermiticity error {herm:.2e}")
    L, S, R = series.bound_liouville, series.bound_state_direct, series.bound_state_relaxed
    ordering = {
        "liouville_ge_state_direct": bool(np.all(L >= S)),
        "liouville_ge_state_direct_violations": int(np.sum(L < S)),
        "state_direct_ge_state_relaxed": bool(np.all(S >= R)),
        "state_direct_ge_state_relaxed_violations": int(np.sum(S < R)),
    }
    return fatal, ordering


def _nan_if_none(x, n):
    return np.full(n, np.nan) if x is None else x


def write_series_csv(path, series: BoundSeries, J: float):
    n = len(series.grid)
    t = series.grid.points
    cols = [
        t, J * t,
        _nan_if_none(series.otoc_exact, n), series.otoc_redfield,
        series.bound_liouville, series.bound_state_direct, series.bound_state_relaxed,
        _nan_if_none(series.rate_exact, n), series.rate_liouville, series.rate_state,
        np.full(n, SCRAMBLING_THRESHOLD),
    ]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SERIES_HEADER)
        for row in zip(*cols):
            writer.writerow([fmt(x) for x in row])


def _finite_or_none(x):
    return None if x is None or not np.isfinite(x) else float(x)


def _json_ready(scales):
    return {k: (_finite_or_none(v) if isinstance(v, float) else v) for k, v in scales.items()}


def haar_report(params: ChainParams, n_samples: int, times, seed: int) -> dict:
    est = haar_otoc_statistics(params, times, n_samples, seed)
    exact = exact_otoc_at(params, est.times)
    z = np.abs(est.estimate - exact) / est.stderr
    return {
        "n_samples": n_samples,
        "times": est.times.tolist(),
        "estimate": est.estimate.tolist(),
        "stderr": est.stderr.tolist(),
        "exact": exact.tolist(),
        "z_scores": z.tolist(),
        "imag_mean": est.imag_mean.tolist(),
        "all_z_below_4": bool(np.all(z < 4)),
    }


def run_experiment(config: ExperimentConfig, series_name: str = "series.csv") -> RunArtifacts:
    params = config.chain
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    series, scales = compute_run(params, config.otoc_source)
    fatal, ordering = check_series(series)
    series_csv = out / series_name
    write_series_csv(series_csv, series, params.J)
    meta = {
        "version": version_string(),
        "seed": params.seed,
        "config": config.to_dict(),
        "timescales": _json_ready(scales),
        "hierarchy_ok": scales["hierarchy_ok"],
        "ordering": ordering,
        "fitted_rate": _finite_or_none(series.fitted_rate),
        "flags": series.flags,
        "violations": fatal,
    }
    if series.otoc_exact is not None:
        m, tm = min_otoc_window(OtocSeries(series.grid, series.otoc_exact, None), config.window_end, params.J)
        meta["min_otoc"] = {"value": m, "t": tm, "window_end_Jt": config.window_end}
    if config.haar_check:
        meta["haar_check"] = haar_report(params, int(config.haar_check["n_samples"]),
                                         config.haar_check["times"], params.seed)
    if not ordering["liouville_ge_state_direct"] or not ordering["state_direct_ge_state_relaxed"]:
        log.warning("bound ordering not satisfied on this run: %s", ordering)
    meta_json = out / "meta.json"
    meta_json.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if fatal:
        raise InvariantViolation("; ".join(fatal))
    return RunArtifacts(series_csv=series_csv, meta_json=meta_json, series=series, meta=meta)


def _sweep_point(args):
    params, otoc_source = args
    return compute_run(params, otoc_source)


def run_sweep(config: ExperimentConfig) -> RunArtifacts:
    if config.sweep is None:
        raise ConfigError("sweep", "missing")
    name, values = config.sweep["param"], list(config.sweep["values"])
    if name == "N":
        values = [int(v) for v in values]
    points = [config.params_for(name, v) for v in values]
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(p, config.otoc_source) for p in points]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_sweep_point, jobs))
    else:
        results = [_sweep_point(j) for j in jobs]

    rows, per_point, fatal_all = [], [], []
    for p, v, (series, scales) in zip(points, values, results):
        fatal, ordering = check_series(series)
        fatal_all += [f"{name}={v}: {msg}" for msg in fatal]
        tag = f"series_{name}_{v}.csv"
        write_series_csv(out / tag, series, p.J)
        mask = p.J * series.grid.points <= config.window_end + 1e-12
        end = int(np.nonzero(mask)[0][-1])
        if series.otoc_exact is not None:
            m, tm = min_otoc_window(OtocSeries(series.grid, series.otoc_exact, None), config.window_end, p.J)
            gap = float(np.max((series.otoc_exact - series.bound_liouville)[mask]))
        else:
            m = tm = gap = float("nan")
        rows.append([v, m, tm, series.bound_liouville[end], series.bound_state_direct[end],
                     series.bound_state_relaxed[end], gap])
        per_point.append({"value": v, "file": tag, "timescales": _json_ready(scales), "ordering": ordering})

    sweep_csv = out / f"sweep_{name}.csv"
    with open(sweep_csv, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SWEEP_HEADER)
        for r in rows:
            writer.writerow([name, str(r[0])] + [fmt(x) for x in r[1:]])
    meta = {
        "version": version_string(),
        "seed": config.chain.seed,
        "config": config.to_dict(),
        "points": per_point,
        "timescales": per_point[0]["timescales"],
        "hierarchy_ok": all(p["timescales"]["hierarchy_ok"] for p in per_point),
        "violations": fatal_all,
    }
    meta_json = out / "meta.json"
    meta_json.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if fatal_all:
        raise InvariantViolation("; ".join(fatal_all))
    return RunArtifacts(series_csv=out / per_point[0]["file"], meta_json=meta_json,
                        sweep_csv=sweep_csv, meta=meta)


def export_kernel(config: ExperimentConfig, mode: str) -> Path:
    params = config.chain
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if mode == "numeric":
        kernel = stationary_kernel(params.with_(correlator_mode="numeric"))
    elif mode == "analytic_afm":
        if params.model_sign != "antiferro":
            log.info("analytic_afm kernel is defined for the antiferromagnetic chain; switching model_sign")
        kernel = stationary_kernel(params.with_(model_sign="antiferro", correlator_mode="analytic_afm"))
    elif mode == "nonstationary":
        kernel = nonstationary_kernel(params.with_(correlator_mode="numeric", bath_mode="nonstationary"))
    else:
        raise ConfigError("mode", f"unknown kernel mode {mode!r}")
    path = out / f"kernel_{mode}.csv"
    kernel.to_csv(path)
    return path


def write_haar_csv(path, report):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "estimate", "stderr", "exact", "z_score", "imag_mean"])
        for row in zip(report["times"], report["estimate"], report["stderr"], report["exact"],
                       report["z_scores"], report["imag_mean"]):
            writer.writerow([fmt(x) for x in row])


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError("values", f"cannot parse {text!r} as a comma list of numbers") from None


def _load(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    data = cfg.to_dict()
    data["params"] = dict(cfg.params)
    if getattr(args, "out", None):
        data["output_dir"] = args.out
    if getattr(args, "seed", None) is not None:
        data["params"]["seed"] = args.seed
    return ExperimentConfig(**data)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="otocqsl", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=False):
        p.add_argument("--config", required=config_required, help="JSON experiment config")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="RNG seed (overrides config)")

    common(sub.add_parser("run", help="single run: exact OTOC, Redfield, bounds, rates"))
    p = sub.add_parser("sweep", help="sweep one parameter")
    common(p)
    p.add_argument("--param", required=True, choices=SWEEPABLE)
    p.add_argument("--values", required=True, help="comma separated values")
    p.add_argument("--workers", type=int, help="process pool size")
    p = sub.add_parser("haar-check", help="Monte Carlo Haar average against exp(-S2)")
    common(p)
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--times", required=True, help="comma separated times t")
    p = sub.add_parser("kernel", help="export a bath correlator as CSV")
    common(p)
    p.add_argument("--mode", required=True, choices=("numeric", "analytic_afm", "nonstationary"))
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = _load(args)
        if args.command == "run":
            art = run_experiment(config)
            print(art.series_csv)
        elif args.command == "sweep":
            data = config.to_dict()
            data["params"] = dict(config.params, seed=config.chain.seed)
            data["sweep"] = {"param": args.param, "values": _floats(args.values)}
            if args.workers:
                data["workers"] = args.workers
            art = run_sweep(ExperimentConfig(**data))
            print(art.sweep_csv)
        elif args.command == "haar-check":
            if args.samples < 2:
                raise ConfigError("samples", "must be at least 2")
            report = haar_report(config.chain, args.samples, _floats(args.times), config.chain.seed)
            out = Path(config.output_dir)
            out.mkdir(parents=True, exist_ok=True)
            write_haar_csv(out / "haar_check.csv", report)
            (out / "haar_check.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
            print(out / "haar_check.csv")
            if not report["all_z_below_4"]:
                log.error("Haar estimate deviates from exp(-S2) by 4 or more standard errors")
                return 3
        elif args.command == "kernel":
            print(export_kernel(config, args.mode))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except InvariantViolation as exc:
        print(f"numerical invariant violated: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())

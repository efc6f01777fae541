"""Command-line orchestration of the fitting pipeline.

Every subcommand reads one JSON config (keys overridable by ``--<key>``
flags), rebuilds what it needs from the inputs, writes its artifacts into
``output_dir`` and records a manifest that ``stfire rerun`` can replay.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import platform
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import pandas as pd
import scipy

from . import __version__, glm
from .basis import write_knots_csv
from .errors import InvalidInputError, StfireError
from .geom import load_window
from .ingest import Projector, ingest_fires, write_pattern_csv
from .quadrature import make_scheme, write_scheme_csv
from .raster import LandUseTable, horn_slope, read_ascii_grid, read_categories, write_ascii_grid
from .separable import combine, simulate_thinning
from .spatial_model import (fit_spatial, predict_intensity, raw_residual, select_backward,
                            smoothed_residuals)
from .temporal_model import (TemporalSeries, aggregate_daily, correlation_matrix, daily_counts,
                             fit_temporal, predict_temporal, write_series_csv)

log = logging.getLogger("stfire")

PATH_KEYS = ("fires", "window", "dem", "climate")


@dataclass
class RunConfig:
    fires: str | None = None
    window: str | None = None
    year: int | None = None
    projection: dict | None = None
    dem: str | None = None
    dem_unit: str = "m"
    covariates: list = field(default_factory=list)
    climate: str | None = None
    temporal_covariates: list | None = None
    aggregation: str = "max"
    dummy_grid: list = field(default_factory=lambda: [128, 128])
    spatial_knots: int = 30
    temporal_knots: int = 50
    spatial_lambda: float | None = None
    temporal_lambda: float | None = None
    bandwidth: float | None = None
    predict_grid: list | None = None
    seed: int = 0
    output_dir: str = "out"
    base_dir: str = "."

    @classmethod
    def from_dict(cls, d: dict, base_dir=".") -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidInputError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**{**d, "base_dir": str(d.get("base_dir", base_dir))})
        return cfg

    def path(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else Path(self.base_dir) / p

    @property
    def out(self) -> Path:
        return self.path(self.output_dir)

    def validate(self, needs=()) -> None:
        for key in needs:
            if getattr(self, key) is None:
                raise InvalidInputError(f"config key {key!r} is required for this command")
        for key in PATH_KEYS:
            v = getattr(self, key)
            if v is not None and not self.path(v).exists():
                raise InvalidInputError(f"{key}: file not found: {v}")
        for cov in self.covariates:
            for k in ("path", "categories"):
                if k in cov and not self.path(cov[k]).exists():
                    raise InvalidInputError(f"covariate {cov.get('name')}: file not found: {cov[k]}")
        for key in ("spatial_knots", "temporal_knots"):
            k = getattr(self, key)
            if k != 0 and k < 4:
                raise InvalidInputError(f"{key} must be 0 or at least 4")
        if self.dem_unit not in ("m", "km"):
            raise InvalidInputError("dem_unit must be 'm' or 'km'")


# ------------------------------------------------------------------ loaders

def _unit_scale(unit: str) -> float:
    return 0.001 if unit == "m" else 1.0


def load_covariates(cfg: RunConfig) -> dict:
    out = {}
    for entry in cfg.covariates:
        name, kind = entry["name"], entry.get("kind", "numeric")
        if kind == "categorical":
            cats = read_categories(cfg.path(entry["categories"]))
            if entry.get("merge_level1", True):
                cats = LandUseTable.from_categories(cats).labels
            out[name] = read_ascii_grid(cfg.path(entry["path"]), categories=cats)
        elif kind == "slope":
            dem = read_ascii_grid(cfg.path(entry["path"]))
            dem = dem.with_values(dem.values * _unit_scale(entry.get("dem_unit", cfg.dem_unit)))
            out[name] = horn_slope(dem)
        elif kind == "numeric":
            r = read_ascii_grid(cfg.path(entry["path"]))
            out[name] = r.with_values(r.values * float(entry.get("scale", 1.0)) + float(entry.get("offset", 0.0)))
        else:
            raise InvalidInputError(f"unknown covariate kind {kind!r}")
    return out


def baselines(cfg: RunConfig) -> dict:
    return {c["name"]: c["baseline"] for c in cfg.covariates if c.get("baseline")}


def load_pattern(cfg: RunConfig):
    cfg.validate(needs=("fires", "window", "projection"))
    window = load_window(cfg.path(cfg.window))
    return ingest_fires(cfg.path(cfg.fires), Projector.from_dict(cfg.projection), window, cfg.year)


def _year(cfg, pat) -> int:
    if cfg.year is not None:
        return int(cfg.year)
    with open(cfg.path(cfg.fires), newline="") as fh:
        row = next(csv.DictReader(fh))
    return int({k.lower(): v for k, v in row.items()}["acq_date"][:4])


def build_series(cfg: RunConfig, pat) -> TemporalSeries:
    days, counts = daily_counts(pat)
    covs, agg = {}, {}
    if cfg.climate is not None:
        table = pd.read_csv(cfg.path(cfg.climate))
        daily = aggregate_daily(table, how=cfg.aggregation, year=_year(cfg, pat), days=days)
        names = cfg.temporal_covariates if cfg.temporal_covariates is not None else list(daily.columns)
        for n in names:
            covs[n] = daily[n].to_numpy(dtype=float)
            agg[n] = cfg.aggregation
    return TemporalSeries(days, counts, covs, agg)


def spatial_model(cfg: RunConfig, pat):
    return fit_spatial(pat, load_covariates(cfg), knots=cfg.spatial_knots, ngrid=tuple(cfg.dummy_grid),
                       baseline=baselines(cfg), lam=cfg.spatial_lambda)


def temporal_model(cfg: RunConfig, pat):
    series = build_series(cfg, pat)
    return fit_temporal(series, cfg.temporal_covariates if cfg.climate else [],
                        knots=cfg.temporal_knots, lam=cfg.temporal_lambda)


# ------------------------------------------------------------------ writers

def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_table(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["term", "estimate", "std_error", "z_value", "p_value"])
        for name, b, s, z, p in rows:
            w.writerow([name, repr(b), repr(s), repr(z), repr(p)])


# ------------------------------------------------------------------ commands

def cmd_slope(cfg, out):
    cfg.validate(needs=("dem",))
    dem = read_ascii_grid(cfg.path(cfg.dem))
    dem = dem.with_values(dem.values * _unit_scale(cfg.dem_unit))
    write_ascii_grid(horn_slope(dem), out / "slope.asc")
    return ["slope.asc"]


def cmd_quadscheme(cfg, out):
    pat = load_pattern(cfg)
    write_scheme_csv(make_scheme(pat.x, pat.y, pat.window, tuple(cfg.dummy_grid)), out / "quadscheme.csv")
    return ["quadscheme.csv"]


def _spatial_summary(m) -> dict:
    d = m.fit.to_dict()
    d.pop("covariance")
    d.update({
        "n_events": m.pattern.n,
        "n_quadrature": len(m.scheme),
        "n_dummy": m.scheme.n_dummy,
        "window_area": m.scheme.window.area,
        "fitted_integral": m.integral(),
        "baselines": m.design.baselines,
        "levels": m.design.levels,
        "knots": 0 if m.basis is None else m.basis.k,
    })
    return d


def cmd_fit_spatial(cfg, out):
    m = spatial_model(cfg, load_pattern(cfg))
    write_json(_spatial_summary(m), out / "spatial_fit.json")
    write_table(m.coefficient_table(), out / "spatial_coefficients.csv")
    files = ["spatial_fit.json", "spatial_coefficients.csv"]
    if m.basis is not None:
        write_knots_csv(m.basis.knots, out / "spatial_knots.csv")
        files.append("spatial_knots.csv")
    return files


def cmd_fit_temporal(cfg, out):
    m = temporal_model(cfg, load_pattern(cfg))
    write_series_csv(m.series, out / "series.csv")
    d = m.fit.to_dict()
    d.pop("covariance")
    d["smooth_edf"] = m.smooth_edf
    d["table"] = [dict(zip(("term", "estimate", "std_error", "z_value", "p_value"), r))
                  for r in m.coefficient_table()]
    write_json(d, out / "temporal_fit.json")
    write_table(m.coefficient_table(), out / "temporal_coefficients.csv")
    corr, undefined = correlation_matrix(m.series)
    corr.to_csv(out / "correlations.csv", float_format="%.17g", lineterminator="\n")
    if undefined:
        log.warning("correlations undefined for zero-variance columns: %s", undefined)
    return ["series.csv", "temporal_fit.json", "temporal_coefficients.csv", "correlations.csv"]


def _separable(cfg):
    pat = load_pattern(cfg)
    sm = spatial_model(cfg, pat)
    tm = temporal_model(cfg, pat)
    return pat, sm, tm, combine(sm, tm, pat.n, interval=pat.interval)


def cmd_combine(cfg, out):
    pat, sm, tm, si = _separable(cfg)
    write_json({
        "n_events": pat.n,
        "norm": si.norm,
        "spatial_integral": si.spatial_integral,
        "temporal_sum": float(si.rates.sum()),
        "total": si.total,
        "interval": list(si.interval),
    }, out / "separable.json")
    return ["separable.json"]


def cmd_predict_spatial(cfg, out):
    m = spatial_model(cfg, load_pattern(cfg))
    grid = tuple(cfg.predict_grid) if cfg.predict_grid else None
    write_ascii_grid(predict_intensity(m, grid), out / "spatial_intensity.asc")
    return ["spatial_intensity.asc"]


def cmd_predict_temporal(cfg, out):
    m = temporal_model(cfg, load_pattern(cfg))
    rate = predict_temporal(m)
    pd.DataFrame({"day": m.series.day, "count": m.series.count, "fitted": rate}).to_csv(
        out / "temporal_intensity.csv", index=False, float_format="%.17g", lineterminator="\n")
    return ["temporal_intensity.csv"]


def cmd_residuals(cfg, out):
    m = spatial_model(cfg, load_pattern(cfg))
    rf = smoothed_residuals(m, cfg.bandwidth)
    write_ascii_grid(rf.grid, out / "residuals.asc")
    write_json({"bandwidth": rf.bandwidth, "raw_residual": raw_residual(m),
                "mean_abs_smoothed": rf.mean_abs()}, out / "residuals.json")
    return ["residuals.asc", "residuals.json"]


def cmd_simulate(cfg, out):
    pat, sm, tm, si = _separable(cfg)
    pred = predict_intensity(sm, tuple(2 * v for v in cfg.dummy_grid))
    smax = max(float(np.nanmax(pred.values)), float(sm.fit.fitted.max()))
    bound = 1.5 * smax * float(si.rates.max()) / si.norm
    rng = np.random.default_rng(cfg.seed)
    sim = simulate_thinning(si, pat.window, pat.interval, bound, rng)
    write_pattern_csv(sim, out / "simulated.csv", Projector.from_dict(cfg.projection), _year(cfg, pat))
    return ["simulated.csv"]


def cmd_select_backward(cfg, out):
    full, steps = select_backward(load_pattern(cfg), load_covariates(cfg), cfg.spatial_knots,
                                  tuple(cfg.dummy_grid), baselines(cfg), cfg.spatial_lambda)
    write_json({"steps": [asdict(s) for s in steps], "selected": steps[-1].terms}, out / "selection.json")
    return ["selection.json"]


COMMANDS = {
    "slope": cmd_slope,
    "quadscheme": cmd_quadscheme,
    "fit-spatial": cmd_fit_spatial,
    "fit-temporal": cmd_fit_temporal,
    "combine": cmd_combine,
    "predict-spatial": cmd_predict_spatial,
    "predict-temporal": cmd_predict_temporal,
    "residuals": cmd_residuals,
    "simulate": cmd_simulate,
    "select-backward": cmd_select_backward,
}


# ------------------------------------------------------------------ manifest

def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _inputs(cfg: RunConfig) -> dict:
    paths = [getattr(cfg, k) for k in PATH_KEYS if getattr(cfg, k) is not None]
    for cov in cfg.covariates:
        paths += [cov[k] for k in ("path", "categories") if k in cov]
    return {str(p): _sha256(cfg.path(p)) for p in sorted(set(paths)) if cfg.path(p).exists()}


def run(command: str, cfg: RunConfig) -> dict:
    """Execute one subcommand and write its manifest; returns the manifest."""
    if command not in COMMANDS:
        raise InvalidInputError(f"unknown command {command!r}")
    cfg.validate()
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    files = COMMANDS[command](cfg, out)
    resolved = asdict(cfg)
    resolved["base_dir"] = str(Path(cfg.base_dir).resolve())
    manifest = {
        "command": command,
        "config": resolved,
        "seed": cfg.seed,
        "inputs": _inputs(cfg),
        "outputs": {f: _sha256(out / f) for f in files},
        "versions": {
            "stfire": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "pandas": pd.__version__,
        },
    }
    write_json(manifest, out / f"{command}.manifest.json")
    return manifest


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _add_overrides(p: argparse.ArgumentParser) -> None:
    for f in fields(RunConfig):
        p.add_argument(f"--{f.name}", type=_parse_value, default=argparse.SUPPRESS,
                       help=f"override config key {f.name!r} (JSON value)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stfire", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=False, help="JSON config file")
        _add_overrides(p)
    p = sub.add_parser("rerun", help="replay a manifest")
    p.add_argument("manifest")
    _add_overrides(p)
    return parser


def load_config(path, overrides: dict) -> RunConfig:
    if path is None:
        data, base = {}, Path.cwd()
    else:
        path = Path(path)
        data = json.loads(path.read_text())
        base = path.parent
    data.update(overrides)
    return RunConfig.from_dict(data, base_dir=data.get("base_dir", base))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    keys = {f.name for f in fields(RunConfig)}
    overrides = {k: v for k, v in vars(args).items() if k in keys}
    try:
        if args.command == "rerun":
            manifest = json.loads(Path(args.manifest).read_text())
            cfg = RunConfig.from_dict({**manifest["config"], **overrides})
            run(manifest["command"], cfg)
        else:
            run(args.command, load_config(args.config, overrides))
    except (StfireError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

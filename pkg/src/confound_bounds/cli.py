"""Command-line front end: ``analyze``, ``simulate`` and ``oracle-check``.

Every flag may also come from a TOML file passed with ``--config`` (keys are the
flag names, with dashes or underscores); the command line wins. A
``manifest.json`` written by a previous run is accepted as a config too.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import platform
import shutil
import sys
import tempfile
from dataclasses import asdict
from importlib import metadata
from pathlib import Path

import numpy as np
import scipy

from .bounds import estimate_bounds
from .core import (
    MODELS,
    STREAM_BOOTSTRAP,
    ConfoundBoundsError,
    Dataset,
    SensitivityConfig,
    ValidationError,
    make_rng,
    validate_dataset,
)
from .inference import NoCrossing, estimate_epsilon0, multiplier_bootstrap_bands
from .nuisance import fit_cross_fitted
from .oracle import oracle_suite
from .simulation import DgpConfig, ReplicateFailure, oracle_truth, run_study

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_VALIDATION = 2
EXIT_ESTIMATION = 3

CURVE_FIELDS = ("model", "delta", "eps", "psi_l", "psi_u", "sigma_l", "sigma_u",
                "uniform_lower", "uniform_upper", "pointwise_lower", "pointwise_upper")
EPS0_FIELDS = ("model", "delta", "status", "estimate", "std_error", "ci_lower", "ci_upper")

# built-in defaults for flags that are not SensitivityConfig fields
_DEFAULTS = {
    "eps_grid": "0:0.2:21",
    "delta": "1",
    "model": "x",
    "format": "csv",
    "out_dir": ".",
    "n": "500",
    "reps": 200,
    "r": 0.05,
    "workers": 1,
    "instances": 100,
    "inject_offset": 0.0,
    "eps_points": 11,
}


# --- parsing helpers --------------------------------------------------------------------

def parse_grid(text: str) -> tuple:
    """``"start:end:count"`` to an evenly spaced tuple; a comma list is taken literally."""
    text = str(text).strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValidationError(f"grid must look like start:end:count, got {text!r}")
        start, end, count = float(parts[0]), float(parts[1]), int(parts[2])
        if count < 1:
            raise ValidationError(f"grid count must be positive, got {count}")
        return tuple(float(v) for v in np.linspace(start, end, count))
    return parse_floats(text)


def parse_floats(text) -> tuple:
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    try:
        return tuple(float(v) for v in str(text).split(",") if v.strip())
    except ValueError as exc:
        raise ValidationError(f"cannot parse number list {text!r}") from exc


def parse_names(text) -> list:
    if isinstance(text, (list, tuple)):
        return [str(v) for v in text]
    return [v.strip() for v in str(text).split(",") if v.strip()]


def fmt(value) -> str:
    if isinstance(value, str):
        return value
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    return "" if math.isnan(value) else "%.17g" % value


def read_csv_columns(path, needed: list) -> dict:
    """Columns of a headed CSV as float arrays; raises naming the first missing column."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration as exc:
            raise ValidationError(f"{path} is empty; a header row is required") from exc
        rows = list(reader)
    for name in needed:
        if name not in header:
            raise ValidationError(f"column {name!r} not found in {path} (have: {', '.join(header)})")
    out = {}
    for name in needed:
        j = header.index(name)
        values = np.empty(len(rows))
        for i, row in enumerate(rows):
            try:
                values[i] = float(row[j])
            except (ValueError, IndexError) as exc:
                raise ValidationError(f"column {name!r} row {i}: cannot read {row[j:j + 1]!r} as a number") from exc
        out[name] = values
    return out, header


def load_config_file(path) -> dict:
    path = Path(path)
    raw = path.read_bytes()
    if path.suffix == ".json":
        data = json.loads(raw)
        data = data.get("request", data)
    else:
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib

        data = tomllib.loads(raw.decode("utf-8"))
    return {str(k).replace("-", "_"): v for k, v in data.items()}


def merged(args: argparse.Namespace, keys) -> dict:
    """Command line over config file over built-in defaults."""
    cfg_file = load_config_file(args.config) if getattr(args, "config", None) else {}
    out = {}
    for key in keys:
        cli_value = getattr(args, key, None)
        if cli_value is not None:
            out[key] = cli_value
        elif key in cfg_file:
            out[key] = cfg_file[key]
        elif key in _DEFAULTS:
            out[key] = _DEFAULTS[key]
    return out


def sensitivity_config(req: dict, model: str) -> SensitivityConfig:
    fields = {"eps_grid": parse_grid(req["eps_grid"]), "delta_grid": parse_floats(req["delta"]), "model": model}
    for key, field_name, cast in (
        ("folds", "folds", int),
        ("alpha", "alpha", float),
        ("bootstrap", "bootstrap_reps", int),
        ("clip", "clip", float),
        ("learner", "learner", str),
        ("seed", "seed", int),
    ):
        if key in req:
            fields[field_name] = cast(req[key])
    return SensitivityConfig(**fields)


# --- output -------------------------------------------------------------------------------

def csv_text(fields, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(fields)
    for row in rows:
        writer.writerow([fmt(row[f]) for f in fields])
    return buf.getvalue()


def _json_value(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return None if math.isnan(value) else value
    return value


def json_text(obj) -> str:
    def clean(o):
        if isinstance(o, dict):
            return {k: clean(v) for k, v in o.items()}
        if isinstance(o, (list, tuple)):
            return [clean(v) for v in o]
        return _json_value(o)

    return json.dumps(clean(obj), indent=2, sort_keys=False, allow_nan=False) + "\n"


def table_text(fields, rows, form: str) -> str:
    if form == "json":
        return json_text([{f: row[f] for f in fields} for row in rows])
    return csv_text(fields, rows)


def write_outputs(out_dir, files: dict) -> None:
    """Write all files to a scratch directory, then move each into place with ``os.replace``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scratch = Path(tempfile.mkdtemp(prefix=".partial-", dir=out_dir))
    try:
        for name, text in files.items():
            (scratch / name).write_text(text, encoding="utf-8")
        for name in files:
            os.replace(scratch / name, out_dir / name)
    finally:
        shutil.rmtree(scratch, ignore_errors=True)


def versions() -> dict:
    try:
        own = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        own = "unknown"
    return {"package": own, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


# --- analyze ------------------------------------------------------------------------------

ANALYZE_KEYS = ("input", "outcome", "treatment", "covariates", "y_min", "y_max", "eps_grid", "delta", "model",
                "folds", "alpha", "bootstrap", "clip", "learner", "seed", "out_dir", "format")


def load_dataset(req: dict, folds: int) -> Dataset:
    if "input" not in req:
        raise ValidationError("--input is required")
    for key in ("outcome", "treatment"):
        if key not in req:
            raise ValidationError(f"--{key} is required")
    outcome, treatment = str(req["outcome"]), str(req["treatment"])
    with open(req["input"], newline="", encoding="utf-8") as fh:
        header = [h.strip() for h in next(csv.reader(fh), [])]
    if "covariates" in req:
        covs = parse_names(req["covariates"])
    else:
        covs = [h for h in header if h not in (outcome, treatment)]
    names = [outcome, treatment] + covs
    dup = sorted({c for c in names if names.count(c) > 1})
    if dup:
        raise ValidationError(f"column {dup[0]!r} is used more than once")
    if not covs:
        raise ValidationError("no covariate columns")
    cols, _ = read_csv_columns(req["input"], names)
    x = np.column_stack([cols[c] for c in covs])
    y_min = float(req["y_min"]) if "y_min" in req else None
    y_max = float(req["y_max"]) if "y_max" in req else None
    return validate_dataset(Dataset(x, cols[treatment], cols[outcome], y_min, y_max), folds)


def run_analysis(req: dict) -> dict:
    """All output files for an ``analyze`` request, as ``{name: text}``."""
    models = parse_names(req["model"])
    for m in models:
        if m not in MODELS:
            raise ValidationError(f"model must be one of {MODELS}, got {m!r}")
    form = req["format"]
    if form not in ("csv", "json"):
        raise ValidationError(f"format must be csv or json, got {form!r}")
    base_cfg = sensitivity_config(req, models[0])
    data = load_dataset(req, base_cfg.folds)
    fit = fit_cross_fitted(data, base_cfg)

    curve_rows, eps0_rows = [], []
    for mi, model in enumerate(models):
        cfg = base_cfg.replace(model=model)
        curve = estimate_bounds(data, fit, cfg)
        for dj, delta in enumerate(cfg.deltas):
            bands = multiplier_bootstrap_bands(
                data, fit, curve, cfg, make_rng(cfg.seed, STREAM_BOOTSTRAP, mi, dj), delta
            )
            for i, e in enumerate(cfg.eps):
                curve_rows.append({
                    "model": model, "delta": delta, "eps": e,
                    "psi_l": curve.psi_l[i, dj], "psi_u": curve.psi_u[i, dj],
                    "sigma_l": curve.sigma_l[i, dj], "sigma_u": curve.sigma_u[i, dj],
                    "uniform_lower": bands.uniform_lower[i], "uniform_upper": bands.uniform_upper[i],
                    "pointwise_lower": bands.pointwise_lower[i], "pointwise_upper": bands.pointwise_upper[i],
                })
            try:
                e0 = estimate_epsilon0(data, fit, cfg, delta)
                status = "ok" if math.isfinite(e0.std_error) else "no_standard_error"
                eps0_rows.append({"model": model, "delta": delta, "status": status, "estimate": e0.estimate,
                                  "std_error": e0.std_error, "ci_lower": e0.ci[0], "ci_upper": e0.ci[1]})
            except NoCrossing:
                eps0_rows.append({"model": model, "delta": delta, "status": "no_crossing", "estimate": math.nan,
                                  "std_error": math.nan, "ci_lower": math.nan, "ci_upper": math.nan})

    request = {k: req[k] for k in ANALYZE_KEYS if k in req and k != "out_dir"}
    manifest = {
        "command": "analyze",
        "request": request,
        "config": asdict(base_cfg) | {"model": models},
        "n": data.n,
        "y_range": [data.y_min, data.y_max],
        "input_sha256": sha256_file(req["input"]),
        "versions": versions(),
    }
    return {
        f"curves.{form}": table_text(CURVE_FIELDS, curve_rows, form),
        f"epsilon0.{form}": table_text(EPS0_FIELDS, eps0_rows, form),
        "manifest.json": json_text(manifest),
    }


def cmd_analyze(args) -> int:
    req = merged(args, ANALYZE_KEYS)
    files = run_analysis(req)
    write_outputs(req["out_dir"], files)
    print(f"wrote {', '.join(files)} to {req['out_dir']}")
    return EXIT_OK


# --- simulate -----------------------------------------------------------------------------

SIMULATE_KEYS = ("n", "reps", "r", "workers", "eps_grid", "delta", "model", "folds", "alpha", "bootstrap", "clip",
                 "learner", "seed", "out_dir", "format")
REPORT_FIELDS = ("n", "reps", "grid_size", "learner", "bias_pct_psi_l", "bias_pct_psi_u", "bias_pct_eps0",
                 "rootn_rmse_psi_l", "rootn_rmse_psi_u", "rootn_rmse_eps0", "coverage_pct_region",
                 "coverage_pct_eps0")


def run_simulation(req: dict) -> dict:
    form = req["format"]
    if form not in ("csv", "json"):
        raise ValidationError(f"format must be csv or json, got {form!r}")
    models = parse_names(req["model"])
    if len(models) != 1:
        raise ValidationError("simulate takes a single --model")
    cfg = sensitivity_config(req, models[0])
    reps = int(req["reps"])
    if reps < 1:
        raise ValidationError("--reps must be positive")
    sizes = [int(v) for v in parse_floats(req["n"])]
    truth = oracle_truth(float(req["r"]), cfg.eps_grid, cfg.delta_grid[0], cfg.model)
    rows = []
    for n in sizes:
        report, _ = run_study(DgpConfig(float(req["r"]), n, cfg.seed), cfg, reps,
                              workers=int(req["workers"]), truth=truth)
        rows.append(report.table_row())
        print("  ".join(f"{k}={fmt(v)}" for k, v in rows[-1].items()))
    request = {k: req[k] for k in SIMULATE_KEYS if k in req and k not in ("out_dir", "workers")}
    manifest = {
        "command": "simulate",
        "request": request,
        "config": asdict(cfg),
        "truth": {"eps0": truth.eps0, "psi0": truth.psi0},
        "versions": versions(),
    }
    return {f"report.{form}": table_text(REPORT_FIELDS, rows, form), "manifest.json": json_text(manifest)}


def cmd_simulate(args) -> int:
    req = merged(args, SIMULATE_KEYS)
    files = run_simulation(req)
    write_outputs(req["out_dir"], files)
    return EXIT_OK


# --- oracle-check -------------------------------------------------------------------------

def cmd_oracle_check(args) -> int:
    req = merged(args, ("instances", "seed", "inject_offset", "eps_points"))
    n = int(req["instances"])
    if n < 0:
        raise ValidationError("--instances must be nonnegative")
    results = oracle_suite(n, int(req.get("seed", 0)), float(req["inject_offset"]), int(req["eps_points"]))
    print(f"{'check':<10} {'status':<6} {'worst':>12} {'tolerance':>10} {'count':>6}")
    for c in results:
        print(f"{c.name:<10} {'pass' if c.passed else 'FAIL':<6} {c.worst:>12.3e} {c.tolerance:>10.0e} {c.count:>6}")
    failed = [c for c in results if not c.passed]
    if failed:
        first = failed[0]
        print(f"check {first.name!r} failed; first failing instance:", file=sys.stderr)
        print(first.failing, file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


# --- entry point --------------------------------------------------------------------------

def _shared(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML file (or a previous manifest.json) supplying any flag")
    p.add_argument("--eps-grid", dest="eps_grid", help='"start:end:count" or a comma list (default 0:0.2:21)')
    p.add_argument("--delta", help="comma list of delta values in [0, 1] (default 1)")
    p.add_argument("--model", help="x, xa, or x,xa (default x)")
    p.add_argument("--folds", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--bootstrap", type=int, help="multiplier bootstrap replicates")
    p.add_argument("--clip", type=float, help="propensity clip t")
    p.add_argument("--learner", help="logistic, knn, constant, or propensity-outcome pair such as logistic-knn")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--format", choices=("csv", "json"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="confound-bounds", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="bound curves, bands and eps_0 for a CSV")
    p.add_argument("--input")
    p.add_argument("--outcome")
    p.add_argument("--treatment")
    p.add_argument("--covariates", help="comma list (default: every other column)")
    p.add_argument("--y-min", dest="y_min", type=float)
    p.add_argument("--y-max", dest="y_max", type=float)
    _shared(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", help="Monte Carlo study under the binary-confounder design")
    p.add_argument("--n", help="comma list of sample sizes (default 500)")
    p.add_argument("--reps", type=int)
    p.add_argument("--r", type=float, help="treatment effect parameter (default 0.05)")
    p.add_argument("--workers", type=int)
    _shared(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("oracle-check", help="compare estimators' population bounds with brute-force oracles")
    p.add_argument("--config")
    p.add_argument("--instances", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--eps-points", dest="eps_points", type=int)
    p.add_argument("--inject-offset", dest="inject_offset", type=float, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_oracle_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ReplicateFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION
    except (ValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ConfoundBoundsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``rtrecession {generate,backtest,evaluate,date}``.

Settings come from a flat ``key = value`` file (``--config``), overridden by
``--set key=value`` and the named flags.  Path settings can also be given
through environment variables, which sit between the file and the flags.
Exit status is 0 on success, 1 on invalid input or configuration and 2 on
any other failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import backtest, cv, dating, metrics, synthgen
from .data_io import (available_vintages, format_month, load_announcements, load_labels,
                      load_vintage, parse_month, write_csv, write_labels)
from .errors import ValidationError
from .preprocess import HORIZONS

ENV_PATHS = {"data": "RTRECESSION_DATA", "out": "RTRECESSION_OUT", "labels": "RTRECESSION_LABELS"}


@dataclass(frozen=True)
class RunConfig:
    """Every setting with its default.  ``synth_*`` keys feed ``generate``."""

    data: str = "data"                  # vintage tree root
    out: str = "out"                    # output directory
    labels: str = ""                    # evaluation labels; default <data>/truth.csv
    forecasts: str = ""                 # evaluate input; default <out>/forecasts.csv
    period: str = "2006-11..2021-10"    # as-of months, "all" or "last:N"
    horizons: str = "0,1,3,6,12"
    models: str = "logit,wlogit,lasso,ridge,enet"
    strategy: str = "standard"          # standard | freeze
    label_source: str = "nber-vintage"  # nber-vintage | alternative
    tune_every: int = 1
    lambda_size: int = 1000
    enet_lambda_size: int = 200
    lambda_min: float = 1e-5
    lambda_max: float = 1e2
    enet_alphas: str = "0.25,0.5,0.75"
    block_len: int = cv.BLOCK_LEN
    block_step: int = cv.BLOCK_STEP
    train_fraction: str = "5/6"
    selection: str = "cost"             # cost | auprc | logloss
    cost_fn: str = "auto"               # "auto" uses the class weights
    cost_fp: str = "auto"
    knn_k: int = 5
    as_of: str = ""                     # date: vintage month; default latest
    date_track: int = 0                 # date: 1 dates every vintage and writes recognition.csv
    coincident: str = ",".join(dating.COINCIDENT)
    workers: int = 0                    # 0 means all available cores
    synth_seed: int = 42
    synth_months: int = 480
    synth_n_vintages: int = 60
    synth_lead: int = 12
    synth_n_noise: int = 15
    synth_n_duplicates: int = 0
    synth_revision_scale: float = 0.5


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _coerce(key: str, text: str):
    kind = _FIELDS[key].type
    text = text.strip()
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    return text


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines; every bad line or key is reported at once."""
    values, problems = {}, []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"{source}:{lineno}: expected key = value")
            continue
        key, val = (s.strip() for s in line.split("=", 1))
        _assign(values, key, val, f"{source}:{lineno}", problems)
    if problems:
        raise ValidationError("invalid configuration:\n  " + "\n  ".join(problems))
    return values


def _assign(values, key, val, where, problems):
    key = key.replace("-", "_")
    if key not in _FIELDS:
        problems.append(f"{where}: unknown key {key!r}")
        return
    try:
        values[key] = _coerce(key, val)
    except ValueError:
        problems.append(f"{where}: bad value {val!r} for {key}")


def resolve_config(file_text: str | None = None, overrides: dict | None = None,
                   env: dict | None = None, source: str = "<config>") -> RunConfig:
    """Merge defaults, file, environment (paths only) and flag overrides."""
    merged = parse_config_text(file_text, source) if file_text else {}
    env = os.environ if env is None else env
    for key, var in ENV_PATHS.items():
        if env.get(var):
            merged[key] = env[var]
    problems = []
    for key, val in (overrides or {}).items():
        _assign(merged, key, str(val), "flag", problems)
    if problems:
        raise ValidationError("invalid configuration:\n  " + "\n  ".join(problems))
    return RunConfig(**merged)


# ---------------------------------------------------------------------------
# interpreting settings


def _csv_list(text: str) -> list[str]:
    return [s.strip() for s in text.split(",") if s.strip()]


def models_of(cfg: RunConfig) -> list[str]:
    names = _csv_list(cfg.models)
    if not names:
        raise ValidationError("model list is empty")
    bad = [m for m in names if m not in cv.MODEL_NAMES]
    if bad:
        raise ValidationError(f"unknown model(s) {', '.join(bad)}; expected {', '.join(cv.MODEL_NAMES)}")
    return names


def horizons_of(cfg: RunConfig) -> list[int]:
    try:
        hs = [int(h) for h in _csv_list(cfg.horizons)]
    except ValueError:
        raise ValidationError(f"bad horizon list {cfg.horizons!r}") from None
    if not hs:
        raise ValidationError("horizon list is empty")
    bad = [h for h in hs if h not in HORIZONS]
    if bad:
        raise ValidationError(f"unsupported horizon(s) {bad}; expected a subset of {HORIZONS}")
    return hs


def period_of(cfg: RunConfig, root: Path) -> tuple[int, int]:
    text = cfg.period.strip()
    if text == "all" or text.startswith("last:"):
        months = available_vintages(root) if root.is_dir() else []
        if not months:
            raise ValidationError(f"no vintages under {root}")
        if text == "all":
            return months[0], months[-1]
        try:
            n = int(text[5:])
        except ValueError:
            raise ValidationError(f"bad period {text!r}") from None
        return months[-1] - n + 1, months[-1]
    try:
        lo, hi = text.split("..")
        return parse_month(lo), parse_month(hi)
    except ValueError:
        raise ValidationError(f"bad period {text!r}; use YYYY-MM..YYYY-MM, all or last:N") from None


def family_of(cfg: RunConfig, name: str) -> cv.ModelFamily:
    try:
        alphas = tuple(float(a) for a in _csv_list(cfg.enet_alphas))
    except ValueError:
        raise ValidationError(f"bad enet_alphas {cfg.enet_alphas!r}") from None
    return cv.default_family(name, cfg.lambda_size, cfg.enet_lambda_size, cfg.lambda_min,
                             cfg.lambda_max, alphas)


def costs_of(cfg: RunConfig) -> cv.CostSpec | None:
    if cfg.cost_fn == "auto" and cfg.cost_fp == "auto":
        return None
    if "auto" in (cfg.cost_fn, cfg.cost_fp):
        raise ValidationError("cost_fn and cost_fp must both be auto or both numbers")
    try:
        return cv.CostSpec(float(cfg.cost_fn), float(cfg.cost_fp))
    except ValueError as exc:
        raise ValidationError(str(exc)) from None


def train_fraction_of(cfg: RunConfig) -> float:
    try:
        return float(Fraction(cfg.train_fraction))
    except (ValueError, ZeroDivisionError):
        raise ValidationError(f"bad train_fraction {cfg.train_fraction!r}") from None


def scenario_of(cfg: RunConfig) -> synthgen.ScenarioSpec:
    return synthgen.ScenarioSpec(seed=cfg.synth_seed, months=cfg.synth_months,
                                 n_vintages=cfg.synth_n_vintages, lead=cfg.synth_lead,
                                 n_noise=cfg.synth_n_noise, n_duplicates=cfg.synth_n_duplicates,
                                 revision_scale=cfg.synth_revision_scale)


def _workers(cfg: RunConfig) -> int:
    return cfg.workers if cfg.workers > 0 else (os.cpu_count() or 1)


# ---------------------------------------------------------------------------
# commands


def cmd_generate(cfg: RunConfig) -> int:
    synthgen.generate(scenario_of(cfg), cfg.data)
    return 0


def _backtest_job(args):
    cfg, name, horizon, period = args
    return backtest.run_backtest(
        cfg.data, horizon, family_of(cfg, name), period, strategy=cfg.strategy,
        label_source=cfg.label_source, tune_every=cfg.tune_every, k=cfg.knn_k,
        costs=costs_of(cfg), block_len=cfg.block_len, step=cfg.block_step,
        train_fraction=train_fraction_of(cfg), criterion=cfg.selection,
        dating_ids=tuple(_csv_list(cfg.coincident)))


def cmd_backtest(cfg: RunConfig) -> int:
    names = models_of(cfg)
    hs = horizons_of(cfg)
    if cfg.strategy not in backtest.STRATEGIES:
        raise ValidationError(f"unknown strategy {cfg.strategy!r}")
    if cfg.label_source not in backtest.LABEL_SOURCES:
        raise ValidationError(f"unknown label_source {cfg.label_source!r}")
    if cfg.selection not in cv.CRITERIA:
        raise ValidationError(f"unknown selection {cfg.selection!r}; expected one of {cv.CRITERIA}")
    costs_of(cfg)
    train_fraction_of(cfg)
    root = Path(cfg.data)
    period = period_of(cfg, root)
    jobs = [(cfg, name, h, period) for name in names for h in hs]
    n = min(_workers(cfg), len(jobs))
    if n > 1:
        with ProcessPoolExecutor(n) as pool:
            results = list(pool.map(_backtest_job, jobs))
    else:
        results = [_backtest_job(j) for j in jobs]

    out = Path(cfg.out)
    records, fits, inclusion = [], [], []
    for (_, name, h, _), res in zip(jobs, results):
        records.extend(res.records)
        fits.extend(res.fits)
        if name in ("lasso", "enet"):
            inclusion.append((name, h, res.inclusion()))
    backtest.write_forecasts(out / "forecasts.csv", records)
    backtest.write_coefficients(out / "coefficients.csv", fits)
    rows = [(name, h, r.variable, r.lag, r.count, r.total, r.share, int(r.flagged))
            for name, h, table in inclusion for r in table.rows]
    write_csv(out / "inclusion.csv",
              ("model", "horizon", "variable", "lag", "count", "total", "share", "flagged"), rows)
    return 0


def read_forecasts(path) -> list[tuple[str, int, int, float, int]]:
    """(model, horizon, target, probability, call) rows of a forecasts file."""
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"forecasts file {path} not found")
    lines = path.read_text().splitlines()
    if not lines or lines[0] != ",".join(backtest.FORECAST_HEADER):
        raise ValidationError(f"{path}: unexpected header")
    out = []
    for i, line in enumerate(lines[1:], 2):
        parts = line.split(",")
        try:
            out.append((parts[3], int(parts[2]), parse_month(parts[1]), float(parts[4]), int(parts[6])))
        except (ValueError, IndexError):
            raise ValidationError(f"{path}:{i}: malformed forecast row") from None
    return out


def cmd_evaluate(cfg: RunConfig) -> int:
    fpath = Path(cfg.forecasts or Path(cfg.out) / "forecasts.csv")
    lpath = Path(cfg.labels or Path(cfg.data) / "truth.csv")
    truth = load_labels(lpath).as_dict()
    groups: dict[tuple[str, int], list] = {}
    for model, h, target, p, call in read_forecasts(fpath):
        if target not in truth:
            raise ValidationError(f"no label for target {format_month(target)} in {lpath}")
        groups.setdefault((model, h), []).append((truth[target], p, call))
    out = Path(cfg.out)
    rows = []
    for (model, h), g in groups.items():
        y, p, c = (np.array(v) for v in zip(*g))
        m = metrics.evaluate(y, p, c)
        rows.append([model, h, len(y)] + [m[k] for k in metrics.METRIC_COLUMNS])
        metrics.write_curve(out / f"roc_{model}_h{h}.csv", metrics.roc_curve(y, p))
        metrics.write_curve(out / f"pr_{model}_h{h}.csv", metrics.pr_curve(y, p))
    write_csv(out / "metrics.csv", ("model", "horizon", "n") + metrics.METRIC_COLUMNS, rows)
    return 0


def cmd_date(cfg: RunConfig) -> int:
    root = Path(cfg.data)
    if cfg.as_of:
        as_of = parse_month(cfg.as_of)
    else:
        months = available_vintages(root) if root.is_dir() else []
        if not months:
            raise ValidationError(f"no vintages under {root}")
        as_of = months[-1]
    snap = load_vintage(root, as_of)
    res = dating.date_vintage(snap, tuple(_csv_list(cfg.coincident)))
    out = Path(cfg.out)
    dating.write_turning_points(out / "turning_points.csv", res.points)
    dating.write_factor(out / "factor.csv", res.factor)
    write_labels(out / "indicator.csv", res.indicator)
    announced = snap.indicator.as_dict()
    common = [m for m in res.indicator.months.tolist() if m in announced]
    a = np.array([announced[m] for m in common], dtype=np.int64)
    b = res.indicator.as_dict()
    b = np.array([b[m] for m in common], dtype=np.int64)
    if len(common) and len(np.unique(a)) == 2 and len(np.unique(b)) == 2:
        phi = metrics.phi_coefficient(a, b)
    else:
        phi = float("nan")  # undefined when either series is constant
    write_csv(out / "phi.csv", ("as_of", "months", "phi", "explained"),
              [(format_month(as_of), len(common), phi, res.factor.explained)])
    if cfg.date_track:
        _write_recognition(cfg, root, out)
    return 0


def _write_recognition(cfg: RunConfig, root: Path, out: Path) -> None:
    """Recognition lag of every announced turning point across all vintages."""
    ids = tuple(_csv_list(cfg.coincident))
    detections = {m: dating.date_vintage(load_vintage(root, m), ids).points
                  for m in available_vintages(root)}
    # points older than the first vintage were never observed in real time
    reference = [(e.turning_point, e.type) for e in load_announcements(root / "announcements.csv").entries
                 if e.turning_point >= min(detections)]
    rows = []
    for month, kind, found in dating.recognition_lags(detections, reference):
        rows.append((format_month(month), kind, format_month(found) if found else "",
                     found - month if found else ""))
    write_csv(out / "recognition.csv", ("turning_point", "type", "recognized_as_of", "lag"), rows)


COMMANDS = {"generate": cmd_generate, "backtest": cmd_backtest, "evaluate": cmd_evaluate,
            "date": cmd_date}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rtrecession", description="Real-time recession forecasting.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key = value settings file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one setting (repeatable)")
        p.add_argument("--data", help="vintage tree root")
        p.add_argument("--out", help="output directory")
        if name == "backtest":
            p.add_argument("--models")
            p.add_argument("--horizons")
            p.add_argument("--period")
            p.add_argument("--strategy")
            p.add_argument("--label-source", dest="label_source")
            p.add_argument("--workers", type=int)
        if name == "evaluate":
            p.add_argument("--forecasts")
            p.add_argument("--labels")
        if name == "date":
            p.add_argument("--as-of", dest="as_of")
            p.add_argument("--track", dest="date_track", action="store_const", const=1,
                           help="date every vintage and write recognition.csv")
        if name == "generate":
            p.add_argument("--seed", dest="synth_seed", type=int)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = {}
        for item in args.set:
            if "=" not in item:
                raise ValidationError(f"--set expects KEY=VALUE, got {item!r}")
            k, v = item.split("=", 1)
            overrides[k.strip()] = v.strip()
        for key, val in vars(args).items():
            if key not in ("command", "config", "set") and val is not None:
                overrides[key] = val
        text = None
        if args.config:
            try:
                text = Path(args.config).read_text()
            except OSError as exc:
                raise ValidationError(f"cannot read config {args.config}: {exc.strerror}") from None
        cfg = resolve_config(text, overrides, source=args.config or "<config>")
        return COMMANDS[args.command](cfg)
    except ValidationError as exc:
        print(f"rtrecession {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"rtrecession {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

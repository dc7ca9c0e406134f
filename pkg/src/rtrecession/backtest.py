"""Expanding-window real-time backtests.

For every as-of month the vintage of that month is loaded, the design for the
horizon is built from it, hyperparameters are tuned by blocked CV, the model
is refit on all labelled rows and the probability for ``as_of + horizon`` is
recorded with the tuned cutpoint.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import cv, glm
from .data_io import (Announcement, AnnouncementLog, Series, format_month, load_announcements,
                      load_vintage, write_csv)
from .dating import COINCIDENT, date_vintage
from .errors import ValidationError, add_context
from .glm import ModelSpec, PenaltySpec
from .preprocess import Standardizer, build_raw_design, standardize_design

STRATEGIES = ("standard", "freeze")
LABEL_SOURCES = ("nber-vintage", "alternative")
INCLUSION_FLAG = 0.8


@dataclass(frozen=True)
class ForecastRecord:
    as_of: int
    target: int
    horizon: int
    model: str
    probability: float
    threshold: float
    call: int
    fit_as_of: int  # vintage of the coefficient snapshot used


@dataclass(frozen=True)
class FitSnapshot:
    fit_as_of: int
    model: str
    horizon: int
    penalty: PenaltySpec
    columns: tuple[tuple[str, int], ...]
    coefficients: np.ndarray
    standardizer: Standardizer
    threshold: float
    converged: bool
    n_train: int


@dataclass(frozen=True)
class InclusionRow:
    variable: str
    lag: int
    count: int
    total: int

    @property
    def share(self) -> float:
        return self.count / self.total

    @property
    def flagged(self) -> bool:
        return self.share >= INCLUSION_FLAG


@dataclass(frozen=True)
class InclusionTable:
    rows: tuple[InclusionRow, ...]

    def get(self, variable: str, lag: int) -> InclusionRow:
        for r in self.rows:
            if r.variable == variable and r.lag == lag:
                return r
        raise KeyError((variable, lag))


@dataclass
class BacktestResult:
    records: list[ForecastRecord] = field(default_factory=list)
    fits: list[FitSnapshot] = field(default_factory=list)

    def inclusion(self) -> InclusionTable:
        return inclusion_frequency(self.fits)


def inclusion_frequency(fits: Sequence[FitSnapshot]) -> InclusionTable:
    """Share of refits in which each (variable, lag) has a nonzero slope."""
    if not fits:
        raise ValidationError("inclusion frequency needs at least one coefficient snapshot")
    columns = fits[0].columns
    if any(f.columns != columns for f in fits):
        raise ValidationError("coefficient snapshots disagree on their columns")
    nz = np.sum([np.asarray(f.coefficients[1:]) != 0 for f in fits], axis=0)
    return InclusionTable(tuple(InclusionRow(v, lag, int(c), len(fits))
                                for (v, lag), c in zip(columns, nz)))


def relabel_history(labels: Series, event: Announcement) -> Series:
    """Rewrite history when a turning point is announced.

    A peak sets the months strictly between the peak and its announcement to
    1.  A trough keeps (peak, trough] at 1 and sets the months strictly
    between trough and announcement back to 0.
    """
    months = np.asarray(labels.months)
    vals = np.array(labels.values, dtype=np.int64)
    tp, ann = event.turning_point, event.announced
    idx = {int(m): i for i, m in enumerate(months)}
    if tp not in idx:
        raise ValidationError(f"{event.type} {format_month(tp)} outside the label range")
    if event.type == "peak":
        if vals[idx[tp]] == 1:
            raise ValidationError(f"peak {format_month(tp)} falls inside a recession")
        sel = (months > tp) & (months < ann)
        vals[sel] = 1
    elif event.type == "trough":
        if vals[idx[tp]] != 1:
            raise ValidationError(f"trough {format_month(tp)} announced outside a recession")
        sel = (months > tp) & (months < ann)
        vals[sel] = 0
    else:
        raise ValidationError(f"unknown event type {event.type!r}")
    return Series(months.copy(), vals)


def _freeze_key(log: AnnouncementLog, as_of: int) -> int | None:
    """Announcement month of the peak that currently freezes refits, if any."""
    known = log.known_at(as_of).sorted()
    if known and known[-1].type == "peak":
        return known[-1].announced
    return None


def _labels(snapshot, source: str, dating_ids) -> Series:
    if source == "nber-vintage":
        return snapshot.indicator
    return date_vintage(snapshot, dating_ids).indicator


def run_backtest(root, horizon: int, family: cv.ModelFamily, period: tuple[int, int], *,
                 strategy: str = "standard", label_source: str = "nber-vintage",
                 tune_every: int = 1, k: int = 5, costs: cv.CostSpec | None = None,
                 block_len: int = cv.BLOCK_LEN, step: int = cv.BLOCK_STEP,
                 train_fraction: float = cv.TRAIN_FRACTION, criterion: str = "cost",
                 dating_ids: Sequence[str] = COINCIDENT) -> BacktestResult:
    """Forecast ``as_of + horizon`` for every as-of month in ``period`` (inclusive).

    ``tune_every`` reruns the grid search every that many months; in between
    the last tuned penalty and cutpoint are reused while the coefficients are
    still refit monthly.  ``strategy="freeze"`` stops refitting after the
    refit that follows a peak announcement and resumes once the trough is
    announced; the announcement log is read from ``root/announcements.csv``.
    """
    if strategy not in STRATEGIES:
        raise ValidationError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    if label_source not in LABEL_SOURCES:
        raise ValidationError(f"unknown label source {label_source!r}; expected one of {LABEL_SOURCES}")
    if tune_every < 1:
        raise ValidationError("tune_every must be at least 1")
    first, last = period
    if last < first:
        raise ValidationError("empty backtest period")
    root = Path(root)
    log = load_announcements(root / "announcements.csv") if strategy == "freeze" else None

    result = BacktestResult()
    tuned: cv.TuneResult | None = None
    current: FitSnapshot | None = None
    frozen_on: int | None = None
    current_metas = None
    for i, as_of in enumerate(range(first, last + 1)):
        try:
            snap = load_vintage(root, as_of)
            labels = _labels(snap, label_source, dating_ids)
            key = _freeze_key(log, as_of) if log is not None else None
            if key is not None and current is not None and frozen_on == key:
                raw = build_raw_design(snap, horizon, current_metas, labels, k)
                if raw.columns != current.columns:
                    raise ValidationError("variable set changed while coefficients are frozen")
                oos = np.concatenate([[1.0], current.standardizer.apply(raw.oos_features)])
            else:
                raw = build_raw_design(snap, horizon, labels=labels, k=k)
                design = standardize_design(raw)
                if tuned is None or i % tune_every == 0:
                    tuned = cv.grid_search(design.X, design.y, family, costs, block_len=block_len,
                                           step=step, train_fraction=train_fraction,
                                           criterion=criterion)
                res = glm.fit(design.X, design.y, ModelSpec(family.name, tuned.best, family.weighted))
                current = FitSnapshot(as_of, family.name, horizon, tuned.best, raw.columns,
                                      res.coefficients, design.standardizer, tuned.threshold,
                                      res.converged, len(design.y))
                current_metas = snap.metas
                result.fits.append(current)
                frozen_on = key
                oos = design.oos_x
            p = float(glm.predict_proba(current.coefficients, oos[None, :])[0])
            thr = current.threshold
            result.records.append(ForecastRecord(as_of, as_of + horizon, horizon, family.name, p, thr,
                                                 int(p >= thr), current.fit_as_of))
        except (ValueError, RuntimeError, OSError) as exc:
            raise add_context(exc, f"as of {format_month(as_of)}, {family.name} h={horizon}")
    return result


FORECAST_HEADER = ("as_of", "target", "horizon", "model", "probability", "threshold", "call")


def write_forecasts(path, records: Sequence[ForecastRecord]) -> Path:
    return write_csv(path, FORECAST_HEADER,
                     [(format_month(r.as_of), format_month(r.target), r.horizon, r.model,
                       r.probability, r.threshold, r.call) for r in records])


def write_coefficients(path, fits: Sequence[FitSnapshot]) -> Path:
    rows = []
    for f in fits:
        names = [("intercept", 0)] + list(f.columns)
        rows.extend((f.model, f.horizon, format_month(f.fit_as_of), v, lag, float(b))
                    for (v, lag), b in zip(names, f.coefficients))
    return write_csv(path, ("model", "horizon", "fit_as_of", "variable", "lag", "value"), rows)


def write_inclusion(path, table: InclusionTable, model: str, horizon: int) -> Path:
    return write_csv(path, ("model", "horizon", "variable", "lag", "count", "total", "share", "flagged"),
                     [(model, horizon, r.variable, r.lag, r.count, r.total, r.share, int(r.flagged))
                      for r in table.rows])

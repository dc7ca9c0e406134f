"""From raw vintage series to a standardized, lag-aligned design matrix."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data_io import Series, VariableMeta, VintageSnapshot, format_month, write_csv
from .errors import DegenerateError, DomainError, InsufficientDataError, ValidationError

HORIZONS = (0, 1, 3, 6, 12)
_LAGS = {0: (2, 3, 6, 12), 1: (2, 5, 11), 3: (2, 3, 9), 6: (2, 6), 12: (2,)}


# ---------------------------------------------------------------------------
# stationarity transforms


def transform_series(values, transform: str) -> np.ndarray:
    """Apply a stationarity transform; all but ``none`` drop the first point.

    NaN gaps propagate into every difference that touches them.
    """
    x = np.asarray(values, dtype=float)
    if transform == "none":
        return x.copy()
    if len(x) < 2:
        raise InsufficientDataError("transform needs at least 2 observations")
    prev, cur = x[:-1], x[1:]
    if transform == "log-growth":
        if np.any(x[~np.isnan(x)] <= 0):
            raise DomainError("log-growth requires strictly positive values")
        return np.log(cur) - np.log(prev)
    if transform == "first-difference":
        return cur - prev
    if transform == "percent-change":
        if np.any(prev[~np.isnan(prev)] == 0):
            raise DomainError("percent-change with a zero base value")
        return (cur - prev) / prev
    raise ValidationError(f"unknown transform {transform!r}")


def aggregate_to_monthly(dates, values) -> tuple[np.ndarray, np.ndarray]:
    """Mean of all observations within each calendar month.

    Months without observations are simply absent from the output.
    """
    d = np.asarray(dates, dtype="datetime64[D]")
    v = np.asarray(values, dtype=float)
    months = d.astype("datetime64[M]").astype(np.int64) + 1970 * 12
    uniq, inv = np.unique(months, return_inverse=True)
    sums = np.bincount(inv, weights=v, minlength=len(uniq))
    counts = np.bincount(inv, minlength=len(uniq))
    return uniq, sums / counts


# ---------------------------------------------------------------------------
# natural cubic spline


def _thomas(lower, diag, upper, rhs):
    n = len(diag)
    c = np.zeros(n)
    d = np.zeros(n)
    c[0] = upper[0] / diag[0] if n > 1 else 0.0
    d[0] = rhs[0] / diag[0]
    for i in range(1, n):
        denom = diag[i] - lower[i] * c[i - 1]
        if i < n - 1:
            c[i] = upper[i] / denom
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom
    out = np.zeros(n)
    out[-1] = d[-1]
    for i in range(n - 2, -1, -1):
        out[i] = d[i] - c[i] * out[i + 1]
    return out


def natural_spline_moments(x, y) -> np.ndarray:
    """Second derivatives at the knots, zero at both ends."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    m = np.zeros(n)
    if n < 3:
        return m
    h = np.diff(x)
    slope = np.diff(y) / h
    rhs = 6.0 * (slope[1:] - slope[:-1])
    lower = np.concatenate([[0.0], h[1:-1]])
    upper = np.concatenate([h[1:-1], [0.0]])
    m[1:-1] = _thomas(lower, 2.0 * (h[:-1] + h[1:]), upper, rhs)
    return m


def eval_natural_spline(x, y, moments, at) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    at = np.asarray(at, dtype=float)
    if np.any(at < x[0]) or np.any(at > x[-1]):
        raise ValueError("no extrapolation beyond the knots")
    i = np.clip(np.searchsorted(x, at, side="right") - 1, 0, len(x) - 2)
    h = x[i + 1] - x[i]
    a = x[i + 1] - at
    b = at - x[i]
    mi, mj = moments[i], moments[i + 1]
    return (mi * a**3 + mj * b**3) / (6 * h) + (y[i] / h - mi * h / 6) * a + (y[i + 1] / h - mj * h / 6) * b


def spline_interpolate_quarterly(knot_months, knot_values, as_of: int) -> tuple[np.ndarray, np.ndarray]:
    """Monthly values on the natural cubic spline through all knots before ``as_of``.

    Returns every month from the first to the last knot inclusive.
    """
    km = np.asarray(knot_months, dtype=np.int64)
    kv = np.asarray(knot_values, dtype=float)
    keep = (km < as_of) & ~np.isnan(kv)
    km, kv = km[keep], kv[keep]
    if len(km) < 2:
        raise InsufficientDataError("spline interpolation needs at least 2 knots")
    months = np.arange(km[0], km[-1] + 1, dtype=np.int64)
    values = eval_natural_spline(km, kv, natural_spline_moments(km, kv), months)
    # knots are reproduced exactly, not up to rounding
    values[km - km[0]] = kv
    return months, values


# ---------------------------------------------------------------------------
# imputation and standardization


def knn_impute(matrix, k: int = 5) -> np.ndarray:
    """Fill NaN cells with the column mean over the k nearest rows.

    Distances are Euclidean over the columns observed in both rows, after
    z-scoring each column on its observed values.  Rows are assumed to be in
    month order; equal distances prefer the earlier row.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    X = np.array(matrix, dtype=float)
    miss = np.isnan(X)
    if not miss.any():
        return X
    for j in np.flatnonzero(miss.all(axis=0)):
        raise DegenerateError(f"column {j} has no observed values, cannot impute")
    if np.any(miss.all(axis=1)):
        raise DegenerateError(f"row {int(np.flatnonzero(miss.all(axis=1))[0])} has no observed values")
    mu = np.nanmean(X, axis=0)
    sd = np.nanstd(X, axis=0)
    sd[sd == 0] = 1.0
    Z = (X - mu) / sd
    obs = ~miss
    out = X.copy()
    for i in np.flatnonzero(miss.any(axis=1)):
        mutual = obs & obs[i]
        diff = np.where(mutual, Z - np.where(obs[i], Z[i], 0.0), 0.0)
        dist = np.sqrt((diff**2).sum(axis=1))
        dist[~mutual.any(axis=1)] = np.inf
        dist[i] = np.inf
        for j in np.flatnonzero(miss[i]):
            cand = np.flatnonzero(obs[:, j] & np.isfinite(dist))
            if len(cand) == 0:
                raise DegenerateError(f"no neighbour observes column {j} for row {i}")
            order = np.lexsort((cand, dist[cand]))
            out[i, j] = X[cand[order[:k]], j].mean()
    return out


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, rows) -> "Standardizer":
        """Training-row means and population standard deviations."""
        X = np.asarray(rows, dtype=float)
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        bad = np.flatnonzero(scale <= 1e-12 * np.maximum(1.0, np.abs(mean)))
        if len(bad):
            raise DegenerateError(f"zero-variance column(s) {bad.tolist()} in training rows")
        return cls(mean, scale)

    def apply(self, rows) -> np.ndarray:
        return (np.asarray(rows, dtype=float) - self.mean) / self.scale


def fit_standardizer(rows) -> Standardizer:
    return Standardizer.fit(rows)


def apply_standardizer(st: Standardizer, rows) -> np.ndarray:
    return st.apply(rows)


# ---------------------------------------------------------------------------
# lag structure and design


@dataclass(frozen=True)
class LagStructure:
    horizon: int
    lags: tuple[int, ...]

    @property
    def target_lags(self) -> tuple[int, ...]:
        """Offsets relative to the target month (``lag + horizon``)."""
        return tuple(lag + self.horizon for lag in self.lags)


def lag_spec(horizon: int) -> LagStructure:
    if horizon not in _LAGS:
        raise ValidationError(f"unsupported horizon {horizon}; expected one of {HORIZONS}")
    return LagStructure(horizon, _LAGS[horizon])


def monthly_series(meta: VariableMeta, s: Series, as_of: int) -> dict[int, float]:
    """Transformed series on a monthly grid, as a month -> value mapping."""
    if len(s) == 0:
        return {}
    if meta.frequency == "daily":
        tv = transform_series(s.values, meta.transform)
        dates = s.dates if meta.transform == "none" else s.dates[1:]
        months, values = aggregate_to_monthly(dates, tv)
    elif meta.frequency == "quarterly":
        tv = transform_series(s.values, meta.transform)
        km = s.months if meta.transform == "none" else s.months[1:]
        months, values = spline_interpolate_quarterly(km, tv, as_of)
    else:
        grid = np.arange(s.months[0], s.months[-1] + 1)
        dense = np.full(len(grid), np.nan)
        dense[s.months - grid[0]] = s.values
        tv = transform_series(dense, meta.transform)
        months = grid if meta.transform == "none" else grid[1:]
        values = tv
    return {int(m): float(v) for m, v in zip(months, values) if not np.isnan(v)}


@dataclass(frozen=True)
class RawDesign:
    """Lag-aligned, imputed but unstandardized features."""

    columns: tuple[tuple[str, int], ...]
    target_months: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    oos_target: int
    oos_features: np.ndarray


@dataclass(frozen=True)
class DesignMatrix:
    """Standardized design with a leading intercept column."""

    columns: tuple[tuple[str, int], ...]
    target_months: np.ndarray
    X: np.ndarray
    y: np.ndarray
    oos_target: int
    oos_x: np.ndarray
    standardizer: Standardizer
    raw: RawDesign

    @property
    def column_names(self) -> list[str]:
        return ["intercept"] + [f"{v}_lag{lag}" for v, lag in self.columns]


def build_raw_design(snapshot: VintageSnapshot, horizon: int,
                     metas: Sequence[VariableMeta] | None = None,
                     labels: Series | None = None, k: int = 5) -> RawDesign:
    ls = lag_spec(horizon)
    metas = tuple(metas) if metas is not None else snapshot.metas
    labels = labels if labels is not None else snapshot.indicator
    as_of = snapshot.as_of
    panel = [monthly_series(m, snapshot.series[m.id], as_of) for m in metas]
    starts = [min(p) for p in panel if p]
    if not starts:
        raise InsufficientDataError("snapshot has no usable observations")
    first = min(starts)
    label_map = dict(zip(labels.months.tolist(), labels.values.tolist()))

    columns = tuple((m.id, lag + horizon) for m in metas for lag in ls.lags)
    origins = np.arange(first + max(ls.lags), as_of + 1, dtype=np.int64)
    rows = np.full((len(origins), len(columns)), np.nan)
    for c, (p, lag) in enumerate((p, lag) for p in panel for lag in ls.lags):
        for r, origin in enumerate(origins):
            v = p.get(int(origin) - lag)
            if v is not None:
                rows[r, c] = v

    targets = origins + horizon
    is_oos = origins == as_of
    train = np.array([t < as_of and int(t) in label_map for t in targets]) & ~is_oos
    complete = ~np.isnan(rows).any(axis=1)
    ok = np.flatnonzero(train & complete)
    if len(ok) == 0:
        raise InsufficientDataError(f"no usable training rows at {format_month(as_of)}")
    train &= np.arange(len(origins)) >= ok[0]
    keep = train | is_oos
    filled = knn_impute(rows[keep], k)
    tr = train[keep]
    return RawDesign(
        columns=columns,
        target_months=targets[keep][tr],
        features=filled[tr],
        labels=np.array([label_map[int(t)] for t in targets[keep][tr]], dtype=np.int64),
        oos_target=int(as_of + horizon),
        oos_features=filled[~tr][0],
    )


def standardize_design(raw: RawDesign, standardizer: Standardizer | None = None) -> DesignMatrix:
    st = standardizer if standardizer is not None else Standardizer.fit(raw.features)
    X = np.column_stack([np.ones(len(raw.features)), st.apply(raw.features)])
    oos = np.concatenate([[1.0], st.apply(raw.oos_features)])
    return DesignMatrix(raw.columns, raw.target_months, X, raw.labels, raw.oos_target, oos, st, raw)


def build_design(snapshot: VintageSnapshot, horizon: int,
                 metas: Sequence[VariableMeta] | None = None,
                 labels: Series | None = None, k: int = 5) -> DesignMatrix:
    """Design for one vintage and horizon, plus its out-of-sample row.

    Row ``t`` pairs the label at target month ``t`` with features observed at
    ``t - horizon - lag`` for each lag of the horizon's lag structure.  The
    standardizer is fit on the training rows only.
    """
    return standardize_design(build_raw_design(snapshot, horizon, metas, labels, k))


def write_design(path, design: DesignMatrix) -> Path:
    header = ["target_month", "label"] + [f"{v}_lag{lag}" for v, lag in design.columns]
    rows = [[format_month(t), int(y)] + [float(x) for x in row[1:]]
            for t, y, row in zip(design.target_months, design.y, design.X)]
    return write_csv(path, header, rows)

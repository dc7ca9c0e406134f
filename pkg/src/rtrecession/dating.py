"""Alternative recession dating: first principal component of coincident
series, Bry-Boschan turning points on it, and the implied binary indicator.

Only the turning-point rules of Bry-Boschan are implemented (local extrema,
alternation, minimum phase and cycle, end trimming).  The smoothing stages of
the original procedure are skipped because the factor is already smooth.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .data_io import Series, VintageSnapshot, format_month, recession_spans, write_csv
from .errors import DegenerateError, InsufficientDataError, ValidationError
from .preprocess import aggregate_to_monthly, spline_interpolate_quarterly

# coincident series watched when dating US cycles: payrolls, industrial
# production, real income ex transfers, real manufacturing and trade sales
COINCIDENT = ("PAYEMS", "INDPRO", "W875RX1", "CMRMTSPL")


@dataclass(frozen=True)
class PrincipalComponent:
    scores: np.ndarray
    loadings: np.ndarray
    explained: float
    months: np.ndarray | None = None


def first_principal_component(matrix, months=None) -> PrincipalComponent:
    """Leading eigenvector of the correlation matrix of ``matrix``'s columns.

    The loading on the first column is made non-negative.
    """
    X = np.asarray(matrix, dtype=float)
    if X.ndim != 2 or X.shape[1] < 2 or X.shape[0] < 3:
        raise InsufficientDataError("PCA needs at least 3 rows and 2 columns")
    sd = X.std(axis=0)
    if np.any(sd <= 1e-12 * np.maximum(1.0, np.abs(X.mean(axis=0)))):
        raise DegenerateError("constant column in PCA input")
    Z = (X - X.mean(axis=0)) / sd
    R = Z.T @ Z / len(Z)
    vals, vecs = np.linalg.eigh(R)
    v = vecs[:, -1].copy()
    lead = np.flatnonzero(np.abs(v) > 1e-12)[0]
    if v[lead] < 0:
        v = -v
    v /= np.linalg.norm(v)
    return PrincipalComponent(Z @ v, v, float(vals[-1] / vals.sum()),
                              None if months is None else np.asarray(months))


@dataclass(frozen=True)
class TurningPointSet:
    points: tuple[tuple[int, str], ...]  # (month, "peak" | "trough"), ascending

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)


def _alternate(pts, x):
    out = []
    for i, kind in pts:
        if out and out[-1][1] == kind:
            j = out[-1][0]
            better = x[i] > x[j] if kind == "peak" else x[i] < x[j]
            if better:
                out[-1] = (i, kind)
        else:
            out.append((i, kind))
    return out


def _violation(pts, min_phase, min_cycle):
    """Endpoint positions of the shortest phase or cycle below its minimum."""
    worst = None
    for i in range(len(pts) - 1):
        d = pts[i + 1][0] - pts[i][0]
        if d < min_phase and (worst is None or d < worst[0]):
            worst = (d, (i, i + 1))
    for i in range(len(pts) - 2):
        d = pts[i + 2][0] - pts[i][0]
        if d < min_cycle and (worst is None or d < worst[0]):
            worst = (d, (i, i + 2))
    return None if worst is None else worst[1]


def bry_boschan(series, window: int = 5, min_phase: int = 5, min_cycle: int = 15,
                months=None) -> TurningPointSet:
    """Turning points of a monthly series.

    1. peaks (troughs) are strict maxima (minima) within +-``window`` months;
       points closer than ``window`` to either end are never candidates and
       the earliest month of a plateau wins;
    2. neighbouring points of the same type keep the more extreme one;
    3. phases shorter than ``min_phase`` and cycles shorter than ``min_cycle``
       are removed one violation at a time (shortest first) by deleting the
       adjacent peak/trough pair with the smallest amplitude that touches the
       violation, then alternation is re-enforced.
    """
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n <= min_cycle:
        raise InsufficientDataError(f"series of length {n} too short for min_cycle={min_cycle}")
    pts = []
    for i in range(window, n - window):
        left, right = x[i - window:i], x[i + 1:i + window + 1]
        if x[i] > left.max() and x[i] >= right.max():
            pts.append((i, "peak"))
        elif x[i] < left.min() and x[i] <= right.min():
            pts.append((i, "trough"))

    pts = _alternate(pts, x)
    while True:
        hit = _violation(pts, min_phase, min_cycle)
        if hit is None:
            break
        touched = set(hit)
        pairs = [j for j in range(len(pts) - 1) if j in touched or j + 1 in touched]
        amp = [abs(x[pts[j][0]] - x[pts[j + 1][0]]) for j in pairs]
        j = pairs[int(np.argmin(amp))]
        pts = _alternate(pts[:j] + pts[j + 2:], x)

    m = np.arange(n) if months is None else np.asarray(months)
    return TurningPointSet(tuple((int(m[i]), kind) for i, kind in pts))


def to_indicator(points: TurningPointSet, start: int, stop: int) -> Series:
    """Binary series over months ``start .. stop - 1``: 1 on (peak, trough]."""
    months = np.arange(start, stop, dtype=np.int64)
    values = np.zeros(len(months), dtype=np.int64)
    for lo, hi in recession_spans(list(points), stop):
        lo, hi = max(lo, start), min(hi, stop)
        if hi > lo:
            values[lo - start:hi - start] = 1
    return Series(months, values)


def validate_points(points: TurningPointSet, min_phase=5, min_cycle=15) -> None:
    pts = list(points)
    for (a, ka), (b, kb) in zip(pts, pts[1:]):
        if ka == kb:
            raise ValidationError("turning points do not alternate")
        if b - a < min_phase:
            raise ValidationError("phase shorter than the minimum")
    for (a, _), (b, _) in zip(pts, pts[2:]):
        if b - a < min_cycle:
            raise ValidationError("cycle shorter than the minimum")


# ---------------------------------------------------------------------------
# real-time pipeline on a vintage


def level_panel(snapshot: VintageSnapshot, ids: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
    """Monthly levels of the coincident series on their common months.

    Log levels are used for series modelled in log growth rates.
    """
    cols = []
    for vid in ids:
        meta = snapshot.meta(vid)
        s = snapshot.series[vid]
        if meta.frequency == "daily":
            m, v = aggregate_to_monthly(s.dates, s.values)
        elif meta.frequency == "quarterly":
            m, v = spline_interpolate_quarterly(s.months, s.values, snapshot.as_of)
        else:
            m, v = s.months, s.values
        if meta.transform == "log-growth":
            if np.any(v <= 0):
                raise DegenerateError(f"{vid}: non-positive level")
            v = np.log(v)
        cols.append(dict(zip(m.tolist(), v.tolist())))
    common = sorted(set.intersection(*(set(c) for c in cols)))
    if not common:
        raise InsufficientDataError("coincident series share no months")
    months = np.array(common, dtype=np.int64)
    return months, np.array([[c[m] for c in cols] for m in common])


@dataclass(frozen=True)
class DatingResult:
    factor: PrincipalComponent
    points: TurningPointSet
    indicator: Series


def date_vintage(snapshot: VintageSnapshot, ids: Sequence[str] = COINCIDENT, window: int = 5,
                 min_phase: int = 5, min_cycle: int = 15) -> DatingResult:
    missing = [v for v in ids if v not in snapshot.series]
    if missing:
        raise ValidationError(f"coincident series missing from vintage: {', '.join(missing)}")
    months, panel = level_panel(snapshot, ids)
    pc = first_principal_component(panel, months)
    pts = bry_boschan(pc.scores, window, min_phase, min_cycle, months=months)
    return DatingResult(pc, pts, to_indicator(pts, int(months[0]), int(months[-1]) + 1))


def recognition_lags(detections: Mapping[int, TurningPointSet], reference: Sequence[tuple[int, str]],
                     tolerance: int = 3) -> list[tuple[int, str, int | None]]:
    """First vintage that dates each reference turning point.

    ``detections`` maps as-of months to the points dated on that vintage.  A
    reference point counts as recognized at the earliest as-of month whose
    points include one of the same type within ``tolerance`` months of it.
    Returns ``(month, type, as_of)`` with ``as_of=None`` when never found.
    """
    out = []
    for month, kind in sorted(reference):
        found = None
        for as_of in sorted(detections):
            if as_of <= month:
                continue
            if any(k == kind and abs(m - month) <= tolerance for m, k in detections[as_of]):
                found = as_of
                break
        out.append((month, kind, found))
    return out


def write_turning_points(path, points: TurningPointSet) -> Path:
    return write_csv(path, ("month", "type"), [(format_month(m), k) for m, k in points])


def write_factor(path, pc: PrincipalComponent) -> Path:
    return write_csv(path, ("month", "score"),
                     [(format_month(m), float(s)) for m, s in zip(pc.months, pc.scores)])

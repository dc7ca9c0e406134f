"""Vintage store: on-disk layout, validation, indicator vintages and writers.

Layout of a vintage root::

    <root>/announcements.csv          turning_point,type,announced   (optional)
    <root>/<YYYY-MM>/meta.csv         id,category,transform,frequency
    <root>/<YYYY-MM>/series.csv       variable_id,month,value
    <root>/<YYYY-MM>/indicator.csv    month,value

Months are handled internally as integers ``12 * year + (month - 1)``.
Daily observations carry a full ``YYYY-MM-DD`` date in the ``month`` column.
"""

from __future__ import annotations

import csv
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataNotFound, ParseError, ValidationError

CATEGORIES = ("output", "income", "prices", "labor", "housing", "money-credit", "financial")
TRANSFORMS = ("log-growth", "first-difference", "percent-change", "none")
FREQUENCIES = ("daily", "monthly", "quarterly")


# ---------------------------------------------------------------------------
# months


def parse_month(text: str) -> int:
    text = text.strip()
    if len(text) != 7 or text[4] != "-":
        raise ValueError(f"bad month {text!r}, expected YYYY-MM")
    year, month = int(text[:4]), int(text[5:])
    if not 1 <= month <= 12:
        raise ValueError(f"bad month {text!r}")
    return 12 * year + month - 1


def format_month(m: int) -> str:
    m = int(m)
    return f"{m // 12:04d}-{m % 12 + 1:02d}"


def month_range(start: int, stop: int) -> np.ndarray:
    """Months ``start .. stop - 1``."""
    return np.arange(start, stop, dtype=np.int64)


def _parse_date(text: str) -> tuple[int, np.datetime64]:
    text = text.strip()
    if len(text) == 10 and text[4] == "-" and text[7] == "-":
        d = np.datetime64(text, "D")
        return parse_month(text[:7]), d
    return parse_month(text), np.datetime64(text + "-01", "D")


def format_value(v: float) -> str:
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    out = f"{v:.12g}"
    return "0" if out == "-0" else out


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class VariableMeta:
    id: str
    category: str
    transform: str
    frequency: str

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ValidationError(f"{self.id}: unknown category {self.category!r}")
        if self.transform not in TRANSFORMS:
            raise ValidationError(f"{self.id}: unknown transform {self.transform!r}")
        if self.frequency not in FREQUENCIES:
            raise ValidationError(f"{self.id}: unknown frequency {self.frequency!r}")


@dataclass(frozen=True)
class Series:
    """Observations of one variable.

    ``months`` holds the month index of each observation; ``dates`` is only
    set for daily data, where several observations share a month.
    """

    months: np.ndarray
    values: np.ndarray
    dates: np.ndarray | None = None

    def __len__(self):
        return len(self.values)

    def as_dict(self) -> dict[int, float]:
        return dict(zip(self.months.tolist(), self.values.tolist()))


@dataclass(frozen=True)
class VintageSnapshot:
    as_of: int
    metas: tuple[VariableMeta, ...]
    series: dict[str, Series]
    indicator: Series

    def meta(self, var_id: str) -> VariableMeta:
        for m in self.metas:
            if m.id == var_id:
                return m
        raise KeyError(var_id)


@dataclass(frozen=True)
class Announcement:
    turning_point: int
    type: str  # "peak" | "trough"
    announced: int


@dataclass(frozen=True)
class AnnouncementLog:
    entries: tuple[Announcement, ...] = field(default_factory=tuple)

    def __post_init__(self):
        validate_announcements(self.entries)

    def known_at(self, as_of: int) -> "AnnouncementLog":
        """Entries whose announcement is public at the start of ``as_of``.

        An announcement made during month ``a`` reaches a forecaster working
        on the first day of month ``a + 1``.
        """
        return AnnouncementLog(tuple(e for e in self.entries if e.announced < as_of))

    def sorted(self) -> list[Announcement]:
        return sorted(self.entries, key=lambda e: e.turning_point)


def validate_announcements(entries: Iterable[Announcement]) -> None:
    ordered = sorted(entries, key=lambda e: e.turning_point)
    for e in ordered:
        if e.type not in ("peak", "trough"):
            raise ValidationError(f"unknown turning point type {e.type!r}")
        if e.announced <= e.turning_point:
            raise ValidationError(
                f"announcement {format_month(e.announced)} not after "
                f"{e.type} {format_month(e.turning_point)}")
    for a, b in zip(ordered, ordered[1:]):
        if a.type == b.type:
            raise ValidationError(
                f"turning points do not alternate: {a.type} {format_month(a.turning_point)} "
                f"followed by {b.type} {format_month(b.turning_point)}")


# ---------------------------------------------------------------------------
# indicator vintages


def recession_spans(points: Sequence[tuple[int, str]], end: int) -> list[tuple[int, int]]:
    """Half-open month spans ``[peak + 1, trough + 1)`` in recession.

    A trailing peak without trough extends to ``end``.
    """
    spans = []
    peak = None
    for month, kind in sorted(points):
        if kind == "peak":
            peak = month
        elif peak is not None:
            spans.append((peak + 1, month + 1))
            peak = None
    if peak is not None and peak + 1 < end:
        spans.append((peak + 1, end))
    return spans


def build_indicator_vintage(announcements: AnnouncementLog, as_of: int, start: int) -> Series:
    """Recession indicator for months ``start .. as_of - 1`` as known at ``as_of``.

    The state only changes when a turning point has been announced; an
    announced peak without an announced trough keeps the indicator at 1.
    """
    if start > as_of:
        raise ValidationError("start month after as_of")
    months = month_range(start, as_of)
    values = np.zeros(len(months), dtype=np.int64)
    known = announcements.known_at(as_of).sorted()
    for lo, hi in recession_spans([(e.turning_point, e.type) for e in known], as_of):
        lo, hi = max(lo, start), min(hi, as_of)
        if hi > lo:
            values[lo - start:hi - start] = 1
    return Series(months, values)


# ---------------------------------------------------------------------------
# reading


def _read_rows(path: Path, header: Sequence[str]) -> list[tuple[int, list[str]]]:
    if not path.is_file():
        raise DataNotFound(f"missing file {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            got = next(reader)
        except StopIteration:
            raise ParseError(path, 1, "empty file, header required") from None
        if [h.strip() for h in got] != list(header):
            raise ParseError(path, 1, f"expected header {','.join(header)}, got {','.join(got)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(path, lineno, f"expected {len(header)} fields, got {len(row)}")
            rows.append((lineno, row))
    return rows


def _float(path, lineno, text) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ParseError(path, lineno, f"bad number {text!r}") from None
    if not math.isfinite(v):
        raise ParseError(path, lineno, f"non-finite value {text!r}")
    return v


def load_metas(path: Path) -> tuple[VariableMeta, ...]:
    metas = []
    for lineno, row in _read_rows(path, ("id", "category", "transform", "frequency")):
        try:
            metas.append(VariableMeta(*[c.strip() for c in row]))
        except ValidationError as exc:
            raise ParseError(path, lineno, str(exc)) from None
    ids = [m.id for m in metas]
    if len(set(ids)) != len(ids):
        raise ValidationError(f"{path}: duplicate variable ids")
    return tuple(metas)


def load_vintage(root, as_of: int | str) -> VintageSnapshot:
    """Load and validate the snapshot stored under ``root/<as_of>``."""
    if isinstance(as_of, str):
        as_of = parse_month(as_of)
    vdir = Path(root) / format_month(as_of)
    if not vdir.is_dir():
        raise DataNotFound(f"no vintage directory {vdir}")
    metas = load_metas(vdir / "meta.csv")
    by_id = {m.id: m for m in metas}

    raw: dict[str, list] = {m.id: [] for m in metas}
    spath = vdir / "series.csv"
    for lineno, (vid, month, value) in _read_rows(spath, ("variable_id", "month", "value")):
        vid = vid.strip()
        if vid not in by_id:
            raise ParseError(spath, lineno, f"unknown variable {vid!r}")
        try:
            m, d = _parse_date(month)
        except ValueError as exc:
            raise ParseError(spath, lineno, str(exc)) from None
        if m >= as_of:
            raise ValidationError(
                f"{spath}:{lineno}: lookahead, {vid} observation {month.strip()} "
                f"not before as_of {format_month(as_of)}")
        raw[vid].append((d, m, _float(spath, lineno, value)))

    series = {}
    for vid, obs in raw.items():
        daily = by_id[vid].frequency == "daily"
        keys = [o[0] if daily else o[1] for o in obs]
        if any(b <= a for a, b in zip(keys, keys[1:])):
            raise ValidationError(f"{spath}: {vid} observations not strictly increasing")
        series[vid] = Series(
            np.array([o[1] for o in obs], dtype=np.int64),
            np.array([o[2] for o in obs], dtype=float),
            np.array([o[0] for o in obs], dtype="datetime64[D]") if daily else None,
        )

    ipath = vdir / "indicator.csv"
    im, iv = [], []
    for lineno, (month, value) in _read_rows(ipath, ("month", "value")):
        try:
            m = parse_month(month)
        except ValueError as exc:
            raise ParseError(ipath, lineno, str(exc)) from None
        if value.strip() not in ("0", "1"):
            raise ValidationError(f"{ipath}:{lineno}: indicator value {value.strip()!r} not in {{0,1}}")
        if m >= as_of:
            raise ValidationError(f"{ipath}:{lineno}: lookahead, indicator month {month.strip()}")
        im.append(m)
        iv.append(int(value))
    if any(b <= a for a, b in zip(im, im[1:])):
        raise ValidationError(f"{ipath}: months not strictly increasing")
    indicator = Series(np.array(im, dtype=np.int64), np.array(iv, dtype=np.int64))
    return VintageSnapshot(as_of, metas, series, indicator)


def load_announcements(path) -> AnnouncementLog:
    path = Path(path)
    entries = []
    for lineno, (tp, kind, ann) in _read_rows(path, ("turning_point", "type", "announced")):
        try:
            entries.append(Announcement(parse_month(tp), kind.strip(), parse_month(ann)))
        except ValueError as exc:
            raise ParseError(path, lineno, str(exc)) from None
    return AnnouncementLog(tuple(entries))


def load_labels(path) -> Series:
    """Read a ``month,value`` binary series (indicator.csv or truth labels)."""
    path = Path(path)
    months, values = [], []
    for lineno, (month, value) in _read_rows(path, ("month", "value")):
        try:
            months.append(parse_month(month))
        except ValueError as exc:
            raise ParseError(path, lineno, str(exc)) from None
        if value.strip() not in ("0", "1"):
            raise ParseError(path, lineno, f"label {value.strip()!r} not in {{0,1}}")
        values.append(int(value))
    return Series(np.array(months, dtype=np.int64), np.array(values, dtype=np.int64))


def available_vintages(root) -> list[int]:
    out = []
    for p in Path(root).iterdir():
        if p.is_dir():
            try:
                out.append(parse_month(p.name))
            except ValueError:
                continue
    return sorted(out)


# ---------------------------------------------------------------------------
# writing


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """Write a CSV atomically (temp file then rename).

    Floats are written with up to 12 significant digits, ints verbatim.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for c in row:
            if isinstance(c, (float, np.floating)):
                cells.append(format_value(c))
            else:
                cells.append(str(c))
        lines.append(",".join(cells))
    data = ("\n".join(lines) + "\n").encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except OSError as exc:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def write_vintage(root, snap: VintageSnapshot) -> Path:
    vdir = Path(root) / format_month(snap.as_of)
    write_csv(vdir / "meta.csv", ("id", "category", "transform", "frequency"),
              [(m.id, m.category, m.transform, m.frequency) for m in snap.metas])
    rows = []
    for m in snap.metas:
        s = snap.series[m.id]
        if s.dates is not None:
            stamps = [str(d) for d in s.dates]
        else:
            stamps = [format_month(x) for x in s.months]
        rows.extend((m.id, t, float(v)) for t, v in zip(stamps, s.values))
    write_csv(vdir / "series.csv", ("variable_id", "month", "value"), rows)
    write_labels(vdir / "indicator.csv", snap.indicator)
    return vdir


def write_labels(path, labels: Series) -> Path:
    return write_csv(path, ("month", "value"),
                     [(format_month(m), int(v)) for m, v in zip(labels.months, labels.values)])


def write_announcements(path, log: AnnouncementLog) -> Path:
    return write_csv(path, ("turning_point", "type", "announced"),
                     [(format_month(e.turning_point), e.type, format_month(e.announced))
                      for e in log.sorted()])

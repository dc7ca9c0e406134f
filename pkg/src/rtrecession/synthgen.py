"""Synthetic vintage trees with a known recession process.

A persistent two-regime chain drives the means of coincident series; a
term-spread-like series moves ``lead`` months ahead of the regime; a block of
pure-noise series is made collinear through shared noise factors.  Recent
macro observations are revised from vintage to vintage until they settle on
their true values, and NBER-style announcements trail each turning point.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .data_io import (Announcement, AnnouncementLog, Series, VariableMeta, VintageSnapshot,
                      build_indicator_vintage, format_month, parse_month, write_announcements,
                      write_csv, write_labels, write_vintage)
from .errors import ValidationError


@dataclass(frozen=True)
class ScenarioSpec:
    seed: int = 42
    start: str = "1980-01"
    months: int = 480
    n_vintages: int = 60
    tail: int = 12               # months of truth after the last vintage
    n_informative: int = 10
    n_noise: int = 15
    n_duplicates: int = 0        # noisy copies of coincident series
    lead: int = 12
    expansion_min: int = 30
    expansion_extra: float = 36.0
    recession_min: int = 8
    recession_extra: float = 6.0
    spread_signal: float = 1.5
    spread_noise: float = 0.4
    coincident_noise: float = 0.4
    quarterly_noise: float = 1.2   # growth noise of the quarterly coincident series
    noise_collinearity: float = 0.99
    noise_persistence: float = 0.8
    duplicate_noise: float = 0.05
    revision_scale: float = 0.5
    revision_window: int = 12
    publication_lag: int = 2
    peak_lag: tuple[int, int] = (4, 12)
    trough_lag: tuple[int, int] = (8, 21)

    def __post_init__(self):
        if not 1 <= self.n_informative <= len(_INFORMATIVE):
            raise ValidationError(f"n_informative must be in 1..{len(_INFORMATIVE)}")
        if self.n_vintages < 1 or self.n_vintages + self.tail >= self.months:
            raise ValidationError("n_vintages + tail must be smaller than months")
        if self.lead < 0:
            raise ValidationError("lead must be non-negative")

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    @property
    def start_month(self) -> int:
        return parse_month(self.start)

    @property
    def vintage_months(self) -> np.ndarray:
        last = self.start_month + self.months - 1 - self.tail
        return np.arange(last - self.n_vintages + 1, last + 1)


# id, category, transform, frequency, role
_INFORMATIVE = (
    ("T5Y3MM", "financial", "none", "monthly", "spread"),
    ("INDPRO", "output", "log-growth", "monthly", "coincident"),
    ("PAYEMS", "labor", "log-growth", "monthly", "coincident"),
    ("W875RX1", "income", "log-growth", "monthly", "coincident"),
    ("CMRMTSPL", "output", "log-growth", "monthly", "coincident"),
    ("GDPC1", "output", "log-growth", "quarterly", "coincident"),
    ("UNRATE", "labor", "first-difference", "monthly", "unemployment"),
    ("SP500", "financial", "log-growth", "daily", "stocks"),
    ("HOUST", "housing", "log-growth", "monthly", "housing"),
    ("AHETPI", "income", "percent-change", "monthly", "wages"),
)
_NOISE_TRANSFORMS = ("none", "first-difference", "log-growth")
_NOISE_CATEGORIES = ("prices", "money-credit", "financial")
_DAYS = (1, 6, 11, 16, 21, 26)


@dataclass
class _Variable:
    meta: VariableMeta
    level: np.ndarray            # monthly truth (quarterly: knots at quarter-end months)
    revised: bool
    log_scale: bool
    daily: np.ndarray | None = None
    scale: float = 1.0


@dataclass
class Scenario:
    spec: ScenarioSpec
    regime: np.ndarray           # true indicator, one per month
    variables: list = field(default_factory=list)
    announcements: AnnouncementLog = AnnouncementLog()
    revision_errors: dict = field(default_factory=dict)

    @property
    def metas(self) -> tuple[VariableMeta, ...]:
        return tuple(v.meta for v in self.variables)

    @property
    def truth(self) -> Series:
        s = self.spec.start_month
        return Series(np.arange(s, s + self.spec.months), self.regime.astype(np.int64))


def _regimes(rng, spec: ScenarioSpec, n: int) -> np.ndarray:
    z = np.zeros(n, dtype=np.int64)
    t = int(rng.integers(0, spec.expansion_min))  # start part-way through an expansion
    state = 0
    while t < n:
        if state == 0:
            d = spec.expansion_min + int(rng.geometric(1.0 / (1.0 + spec.expansion_extra))) - 1
        else:
            d = spec.recession_min + int(rng.geometric(1.0 / (1.0 + spec.recession_extra))) - 1
        z[t:t + d] = state
        t += d
        state = 1 - state
    return z


def _turning_points(z: np.ndarray, start: int) -> list[tuple[int, str]]:
    out = []
    for m in range(len(z) - 1):
        if z[m] == 0 and z[m + 1] == 1:
            out.append((start + m, "peak"))
        elif z[m] == 1 and z[m + 1] == 0:
            out.append((start + m, "trough"))
    return out


def build_scenario(spec: ScenarioSpec) -> Scenario:
    rng = np.random.default_rng(spec.seed)
    n = spec.months
    ahead = max(spec.lead, 6) + 1
    zfull = _regimes(rng, spec, n + ahead)
    z = zfull[:n]
    start = spec.start_month

    def ar1(phi, sigma):
        e = rng.standard_normal(n) * sigma
        u = np.empty(n)
        u[0] = e[0] / np.sqrt(1 - phi**2)
        for t in range(1, n):
            u[t] = phi * u[t - 1] + e[t]
        return u

    def z_ahead(k):
        return zfull[k:k + n].astype(float)

    variables = []
    coincident_growth = {}
    for vid, cat, tr, freq, role in _INFORMATIVE[:spec.n_informative]:
        meta = VariableMeta(vid, cat, tr, freq)
        if role == "spread":
            level = 1.5 - spec.spread_signal * z_ahead(spec.lead) + ar1(0.5, spec.spread_noise)
            variables.append(_Variable(meta, level, revised=False, log_scale=False))
        elif role == "coincident":
            sd = spec.quarterly_noise if freq == "quarterly" else spec.coincident_noise
            g = 0.25 - 1.05 * z + rng.standard_normal(n) * sd
            coincident_growth[vid] = g
            level = 100.0 * np.exp(np.cumsum(g) / 100.0)
            variables.append(_Variable(meta, level, revised=True, log_scale=True, scale=0.3))
        elif role == "unemployment":
            d = -0.04 + 0.3 * z + rng.standard_normal(n) * 0.15
            level = 6.0 + np.cumsum(d)
            variables.append(_Variable(meta, level, revised=True, log_scale=False, scale=0.05))
        elif role == "stocks":
            nd = len(_DAYS)
            mu = (0.8 - 3.0 * z_ahead(3)) / nd
            r = np.repeat(mu, nd) + rng.standard_normal(n * nd) * 1.5
            daily = 1000.0 * np.exp(np.cumsum(r) / 100.0)
            variables.append(_Variable(meta, daily.reshape(n, nd)[:, -1], revised=False,
                                       log_scale=True, daily=daily))
        elif role == "housing":
            g = 0.1 - 2.0 * z_ahead(6) + rng.standard_normal(n) * 3.0
            level = 1500.0 * np.exp(np.cumsum(g) / 100.0)
            variables.append(_Variable(meta, level, revised=True, log_scale=True, scale=1.0))
        else:
            d = 0.3 - 0.15 * z + rng.standard_normal(n) * 0.2
            level = 10.0 * np.cumprod(1.0 + d / 100.0)
            variables.append(_Variable(meta, level, revised=True, log_scale=True, scale=0.1))

    n_groups = 3
    phi = spec.noise_persistence
    commons = [ar1(phi, np.sqrt(1 - phi**2)) for _ in range(n_groups)]
    rho = spec.noise_collinearity
    for i in range(spec.n_noise):
        vid = f"N{i + 1:02d}"
        tr = _NOISE_TRANSFORMS[i % 3]
        meta = VariableMeta(vid, _NOISE_CATEGORIES[i % 3], tr, "monthly")
        e = rho * commons[i % n_groups] + np.sqrt(1 - rho**2) * ar1(phi, np.sqrt(1 - phi**2))
        if tr == "none":
            level = e
        elif tr == "first-difference":
            level = np.cumsum(e)
        else:
            level = 50.0 * np.exp(np.cumsum(e) / 100.0)
        variables.append(_Variable(meta, level, revised=False, log_scale=tr == "log-growth"))

    coinc = [v for v in variables if v.meta.id in coincident_growth and v.meta.frequency == "monthly"]
    for i in range(spec.n_duplicates):
        src = coinc[i % len(coinc)]
        g = coincident_growth[src.meta.id] + rng.standard_normal(n) * spec.duplicate_noise
        meta = VariableMeta(f"D{i + 1:02d}", src.meta.category, "log-growth", "monthly")
        variables.append(_Variable(meta, 100.0 * np.exp(np.cumsum(g) / 100.0),
                                   revised=True, log_scale=True, scale=0.3))

    for v in variables:
        if v.meta.frequency == "quarterly":
            quarter_end = (start + np.arange(n)) % 12 % 3 == 2
            v.level = np.where(quarter_end, v.level, np.nan)

    errors = {}
    for v in variables:
        if v.revised:
            errors[v.meta.id] = rng.standard_normal(n) * v.scale * spec.revision_scale

    entries = []
    for m, kind in _turning_points(z, start):
        lo, hi = spec.peak_lag if kind == "peak" else spec.trough_lag
        entries.append(Announcement(m, kind, m + int(rng.integers(lo, hi + 1))))
    return Scenario(spec, z, variables, AnnouncementLog(tuple(entries)), errors)


def _round(x: np.ndarray) -> np.ndarray:
    return np.array([float(f"{v:.12g}") for v in x])


def vintage_snapshot(sc: Scenario, as_of: int) -> VintageSnapshot:
    spec = sc.spec
    start = spec.start_month
    series = {}
    for v in sc.variables:
        if v.daily is not None:
            n_months = as_of - start
            vals = v.daily[:n_months * len(_DAYS)]
            mm = np.repeat(np.arange(start, as_of), len(_DAYS))
            dates = np.array([f"{format_month(m)}-{d:02d}" for m in range(start, as_of) for d in _DAYS],
                             dtype="datetime64[D]")
            series[v.meta.id] = Series(mm, _round(vals), dates)
            continue
        last = as_of - spec.publication_lag
        months = np.arange(start, last + 1)
        vals = v.level[:len(months)].copy()
        if v.revised and spec.revision_scale > 0:
            age = last - months
            decay = np.clip(1.0 - age / spec.revision_window, 0.0, 1.0)
            err = sc.revision_errors[v.meta.id][:len(months)] * decay
            vals = vals * np.exp(err / 100.0) if v.log_scale else vals + err
        ok = ~np.isnan(vals)
        series[v.meta.id] = Series(months[ok], _round(vals[ok]))
    indicator = build_indicator_vintage(sc.announcements, as_of, start)
    return VintageSnapshot(as_of, sc.metas, series, indicator)


def generate(spec: ScenarioSpec, root) -> Path:
    """Write the vintage tree, announcements and truth files under ``root``."""
    root = Path(root)
    sc = build_scenario(spec)
    for as_of in spec.vintage_months:
        write_vintage(root, vintage_snapshot(sc, int(as_of)))
    write_announcements(root / "announcements.csv", sc.announcements)
    write_labels(root / "truth.csv", sc.truth)
    rows = []
    start = spec.start_month
    for v in sc.variables:
        if v.daily is not None:
            for k, val in enumerate(v.daily):
                rows.append((v.meta.id, f"{format_month(start + k // len(_DAYS))}-{_DAYS[k % len(_DAYS)]:02d}",
                             float(val)))
        else:
            rows.extend((v.meta.id, format_month(start + k), float(val))
                        for k, val in enumerate(v.level) if not np.isnan(val))
    write_csv(root / "truth_series.csv", ("variable_id", "month", "value"), rows)
    return root

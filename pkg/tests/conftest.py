"""Shared fixtures: tiny hand-made vintages and the seed-42 synthetic tree."""

from __future__ import annotations

import time

import numpy as np
import pytest
from hypothesis import settings

from rtrecession import cv, synthgen
from rtrecession.data_io import Series, VariableMeta, VintageSnapshot, parse_month

settings.register_profile("repo", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("repo")

# Acceptance runs re-tune every 12 months so the three seed-42 backtests fit
# the runtime budget; the coefficients are still refit every month.
ACCEPT_TUNE_EVERY = 12


def small_snapshot(as_of="2006-11") -> VintageSnapshot:
    a = parse_month(as_of)
    metas = (
        VariableMeta("AAA", "output", "log-growth", "monthly"),
        VariableMeta("BBB", "financial", "none", "daily"),
        VariableMeta("CCC", "output", "log-growth", "quarterly"),
    )
    mm = np.arange(a - 24, a - 1)
    qm = np.array([m for m in range(a - 24, a) if m % 3 == 2])
    days = np.array(["2005-01-03", "2005-01-17", "2005-02-01"], dtype="datetime64[D]")
    series = {
        "AAA": Series(mm, 100 + np.arange(len(mm), dtype=float)),
        "BBB": Series(days.astype("datetime64[M]").astype(np.int64) + 1970 * 12, np.array([1.5, 2.5, 3.0]), days),
        "CCC": Series(qm, 50 + 0.5 * np.arange(len(qm))),
    }
    ind = Series(np.arange(a - 24, a), (np.arange(24) >= 20).astype(np.int64))
    return VintageSnapshot(a, metas, series, ind)


@pytest.fixture
def snapshot():
    return small_snapshot()


@pytest.fixture(scope="session")
def seed42_spec():
    return synthgen.ScenarioSpec()


@pytest.fixture(scope="session")
def seed42_scenario(seed42_spec):
    return synthgen.build_scenario(seed42_spec)


@pytest.fixture(scope="session")
def seed42_root(tmp_path_factory, seed42_spec):
    root = tmp_path_factory.mktemp("seed42")
    synthgen.generate(seed42_spec, root)
    return root


@pytest.fixture(scope="session")
def seed42_backtests(seed42_root, seed42_spec):
    """h=1 backtests over the 60 vintages, computed once per session on demand."""
    from rtrecession import backtest

    vm = seed42_spec.vintage_months
    cache = {}

    def get(name):
        if name not in cache:
            t0 = time.perf_counter()
            cache[name] = backtest.run_backtest(seed42_root, 1, cv.default_family(name),
                                                (int(vm[0]), int(vm[-1])), tune_every=ACCEPT_TUNE_EVERY)
            get.elapsed[name] = time.perf_counter() - t0
        return cache[name]

    get.elapsed = {}
    return get


# one PASS/FAIL line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)

"""Shared fixtures: random datasets and parameter vectors."""

import datetime as dt

import numpy as np
import pytest

from bayes_es.core import BuildingDataset, DateIndex, HeatDemandSeries, WeatherSeries
from bayes_es.models import ModelKind, ParameterVector

START = dt.date(2020, 1, 1)


def random_weather(rng, n, start=START):
    idx = DateIndex(start, n)
    return WeatherSeries(
        idx,
        rng.uniform(-10, 25, n),
        rng.gamma(3.0, 5.0 / 3.0, n),
        rng.uniform(0, 300, n),
    )


def random_params(rng, kind=ModelKind.ES):
    kind = ModelKind.parse(kind)
    p = ParameterVector(
        ua0=rng.uniform(0.05, 0.4),
        ua_wind=rng.uniform(0.0, 0.02),
        t_base=rng.uniform(14, 20),
        ga=rng.uniform(0.0, 0.004),
        phi_base=rng.uniform(0.1, 1.0),
        k_mix=rng.uniform(0.5, 8.0),
        sigma_winter=rng.uniform(0.03, 0.3),
        sigma_reduction=rng.uniform(0.03, 0.3),
    )
    if kind.has_ar:
        p = p.replace(rho1=rng.uniform(-0.9, 0.9))
    if kind.has_ma:
        p = p.replace(nu=tuple(rng.uniform(-0.5, 0.5, 3)))
    return p


def random_dataset(rng, n, start=START):
    w = random_weather(rng, n, start)
    phi = rng.uniform(0.0, 5.0, n)
    return BuildingDataset(w, HeatDemandSeries(w.index, phi, "rand"))


def constant_weather(n, t=25.0, start=START):
    return WeatherSeries(DateIndex(start, n), np.full(n, t), np.zeros(n), np.zeros(n))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# --- acceptance reporting ------------------------------------------------------

CRITERIA_LINES: list[str] = []


def record_criterion(number: int, title: str, ok: bool, detail: str) -> None:
    """Log one acceptance criterion outcome; printed again in the summary."""
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    CRITERIA_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA_LINES):
            terminalreporter.write_line(line)

import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bayes_es.core import (
    BuildingDataset,
    DataError,
    DateIndex,
    Finding,
    GapInSeries,
    HeatDemandSeries,
    OverlapTooShort,
    WeatherSeries,
    align,
    validate,
)
from conftest import random_weather

JAN1 = dt.date(2019, 1, 1)


def year_weather(rng, start=JAN1, n=365):
    return random_weather(rng, n, start)


def demand(start, n, phi=None, rng=None):
    if phi is None:
        phi = (rng or np.random.default_rng(0)).uniform(0.1, 3, n)
    return HeatDemandSeries(DateIndex(start, n), phi, "b1")


class TestDateIndex:
    def test_consecutive(self):
        idx = DateIndex(JAN1, 365)
        ds = idx.dates()
        assert idx.end == dt.date(2019, 12, 31)
        assert all((b - a).days == 1 for a, b in zip(ds, ds[1:]))
        assert idx.day_of_year()[0] == 1 and idx.day_of_year()[-1] == 365

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            DateIndex(JAN1, 0)

    def test_from_dates_rejects_gap(self):
        with pytest.raises(GapInSeries):
            DateIndex.from_dates([JAN1, JAN1 + dt.timedelta(days=2)])
        assert DateIndex.from_dates([JAN1, JAN1 + dt.timedelta(days=1)]) == DateIndex(JAN1, 2)


class TestSeries:
    def test_length_mismatch(self, rng):
        with pytest.raises(ValueError):
            WeatherSeries(DateIndex(JAN1, 3), [1, 2], [0, 0, 0], [0, 0, 0])
        with pytest.raises(ValueError):
            HeatDemandSeries(DateIndex(JAN1, 3), [1, 2])

    def test_weather_ranges(self):
        with pytest.raises(DataError):
            WeatherSeries(DateIndex(JAN1, 2), [1, 2], [0, -1], [0, 0])
        with pytest.raises(DataError):
            WeatherSeries(DateIndex(JAN1, 2), [1, 2], [0, 0], [0, -5])
        with pytest.raises(DataError):
            WeatherSeries(DateIndex(JAN1, 2), [1, np.nan], [0, 0], [0, 0])

    def test_immutable(self, rng):
        w = year_weather(rng)
        with pytest.raises(ValueError):
            w.t_ambient[0] = 3.0

    def test_dataset_requires_same_index(self, rng):
        w = year_weather(rng)
        with pytest.raises(ValueError):
            BuildingDataset(w, demand(JAN1, 364))


class TestAlign:
    def test_identical_ranges(self, rng):
        ds = align(year_weather(rng), demand(JAN1, 365))
        assert ds.n_days == 365

    def test_intersection(self, rng):
        mar1 = dt.date(2019, 3, 1)
        ds = align(year_weather(rng), demand(mar1, 306))
        assert ds.index == DateIndex(mar1, 306)
        assert ds.index.end == dt.date(2019, 12, 31)

    def test_too_short(self, rng):
        w = year_weather(rng, n=46)
        with pytest.raises(OverlapTooShort):
            align(w, demand(JAN1, 365))

    def test_disjoint(self, rng):
        w = year_weather(rng, start=dt.date(2010, 1, 1), n=100)
        with pytest.raises(OverlapTooShort):
            align(w, demand(JAN1, 365))

    def test_window_values_follow_dates(self, rng):
        w = year_weather(rng)
        ds = align(w, demand(dt.date(2019, 2, 1), 100))
        assert ds.weather.t_ambient[0] == w.t_ambient[31]

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 100), st.integers(0, 100), st.integers(60, 200))
    def test_idempotent_and_accessors(self, off_w, off_d, n):
        rng = np.random.default_rng(off_w * 1000 + off_d)
        w = year_weather(rng, start=JAN1 + dt.timedelta(days=off_w), n=n + 100)
        d = demand(JAN1 + dt.timedelta(days=off_d), n + 100, rng=rng)
        ds = align(w, d)
        again = align(ds.weather, ds.demand)
        assert again == ds
        for t in range(ds.n_days):
            assert np.all(np.isfinite(ds.day(t)))


class TestValidate:
    def test_clean(self, rng):
        assert validate(align(year_weather(rng), demand(JAN1, 365))) == []

    def test_negative(self, rng):
        phi = np.full(365, 1.0) + np.linspace(0, 1, 365)
        phi[5] = -1.0
        f = validate(BuildingDataset(year_weather(rng), demand(JAN1, 365, phi)))
        assert f == [Finding("NegativeDemand", 5)]

    def test_constant(self, rng):
        f = validate(BuildingDataset(year_weather(rng), demand(JAN1, 365, np.full(365, 2.0))))
        assert f == [Finding("ConstantSeries")]

    def test_non_finite(self, rng):
        phi = np.linspace(0, 1, 365)
        phi[3] = np.inf
        f = validate(BuildingDataset(year_weather(rng), demand(JAN1, 365, phi)))
        assert Finding("NonFinite", 3) in f

"""Daily weather and heat-demand series, alignment and validation.

All series are daily. Loads are daily-average kW, temperatures in degC, wind
in m/s and irradiance in W/m2. Nothing in here converts units.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

MIN_OVERLAP_DAYS = 60


class DataError(ValueError):
    """Base class for problems with input series."""


class OverlapTooShort(DataError):
    pass


class GapInSeries(DataError):
    pass


def _readonly(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class DateIndex:
    """Run of ``length`` consecutive calendar days starting at ``start``."""

    start: dt.date
    length: int

    def __post_init__(self):
        if isinstance(self.start, dt.datetime):
            object.__setattr__(self, "start", self.start.date())
        if self.length < 1:
            raise ValueError("DateIndex length must be >= 1")

    @property
    def end(self) -> dt.date:
        """Last day, inclusive."""
        return self.start + dt.timedelta(days=self.length - 1)

    def dates(self) -> list[dt.date]:
        return [self.start + dt.timedelta(days=i) for i in range(self.length)]

    def day_of_year(self) -> np.ndarray:
        """1-based day of year for every day in the index."""
        return np.array([d.timetuple().tm_yday for d in self.dates()])

    def months(self) -> np.ndarray:
        return np.array([d.month for d in self.dates()])

    def position(self, day: dt.date) -> int:
        return (day - self.start).days

    def slice(self, first: dt.date, last: dt.date) -> "DateIndex":
        return DateIndex(first, (last - first).days + 1)

    @classmethod
    def from_dates(cls, dates) -> "DateIndex":
        """Build an index from an increasing date sequence, rejecting gaps."""
        dates = list(dates)
        if not dates:
            raise ValueError("no dates")
        for i in range(1, len(dates)):
            step = (dates[i] - dates[i - 1]).days
            if step != 1:
                raise GapInSeries(
                    f"dates not consecutive between {dates[i - 1]} and {dates[i]}"
                )
        return cls(dates[0], len(dates))


@dataclass(frozen=True)
class WeatherSeries:
    index: DateIndex
    t_ambient: np.ndarray
    wind_speed: np.ndarray
    irradiance: np.ndarray

    def __post_init__(self):
        for name in ("t_ambient", "wind_speed", "irradiance"):
            arr = _readonly(getattr(self, name), name)
            if arr.shape[0] != self.index.length:
                raise ValueError(
                    f"{name} has {arr.shape[0]} entries, index has {self.index.length}"
                )
            object.__setattr__(self, name, arr)
        if not (
            np.all(np.isfinite(self.t_ambient))
            and np.all(np.isfinite(self.wind_speed))
            and np.all(np.isfinite(self.irradiance))
        ):
            raise DataError("weather contains missing or non-finite values")
        if np.any(self.wind_speed < 0) or np.any(self.irradiance < 0):
            raise DataError("wind speed and irradiance must be non-negative")

    def __len__(self) -> int:
        return self.index.length

    def __eq__(self, other):
        if not isinstance(other, WeatherSeries):
            return NotImplemented
        return (
            self.index == other.index
            and np.array_equal(self.t_ambient, other.t_ambient)
            and np.array_equal(self.wind_speed, other.wind_speed)
            and np.array_equal(self.irradiance, other.irradiance)
        )

    __hash__ = None

    def day(self, t: int) -> tuple[float, float, float]:
        """(t_ambient, wind_speed, irradiance) on day ``t``."""
        return float(self.t_ambient[t]), float(self.wind_speed[t]), float(self.irradiance[t])

    def window(self, first: dt.date, last: dt.date) -> "WeatherSeries":
        i = self.index.position(first)
        j = self.index.position(last) + 1
        return WeatherSeries(
            self.index.slice(first, last),
            self.t_ambient[i:j],
            self.wind_speed[i:j],
            self.irradiance[i:j],
        )

    def head(self, n: int) -> "WeatherSeries":
        return self.window(self.index.start, self.index.start + dt.timedelta(days=n - 1))


@dataclass(frozen=True)
class HeatDemandSeries:
    index: DateIndex
    phi: np.ndarray
    building_id: str = "building"
    heated_area: Optional[float] = None

    def __post_init__(self):
        arr = _readonly(self.phi, "phi")
        if arr.shape[0] != self.index.length:
            raise ValueError(f"phi has {arr.shape[0]} entries, index has {self.index.length}")
        object.__setattr__(self, "phi", arr)

    def __len__(self) -> int:
        return self.index.length

    def __eq__(self, other):
        if not isinstance(other, HeatDemandSeries):
            return NotImplemented
        return (
            self.index == other.index
            and np.array_equal(self.phi, other.phi)
            and self.building_id == other.building_id
            and self.heated_area == other.heated_area
        )

    __hash__ = None

    def window(self, first: dt.date, last: dt.date) -> "HeatDemandSeries":
        i = self.index.position(first)
        j = self.index.position(last) + 1
        return HeatDemandSeries(
            self.index.slice(first, last), self.phi[i:j], self.building_id, self.heated_area
        )


@dataclass(frozen=True)
class BuildingDataset:
    weather: WeatherSeries
    demand: HeatDemandSeries

    def __post_init__(self):
        if self.weather.index != self.demand.index:
            raise ValueError("weather and demand must share the same date index")

    @property
    def index(self) -> DateIndex:
        return self.weather.index

    @property
    def n_days(self) -> int:
        return self.index.length

    @property
    def phi(self) -> np.ndarray:
        return self.demand.phi

    def day(self, t: int) -> tuple[float, float, float, float]:
        """(t_ambient, wind_speed, irradiance, phi) on day ``t``."""
        return (*self.weather.day(t), float(self.demand.phi[t]))

    def head(self, n: int) -> "BuildingDataset":
        last = self.index.start + dt.timedelta(days=n - 1)
        return BuildingDataset(
            self.weather.window(self.index.start, last),
            self.demand.window(self.index.start, last),
        )


def align(
    weather: WeatherSeries,
    demand: HeatDemandSeries,
    min_overlap: int = MIN_OVERLAP_DAYS,
) -> BuildingDataset:
    """Restrict both series to their common date range.

    Raises
    ------
    GapInSeries
        If either series is not a run of consecutive days.
    OverlapTooShort
        If the common range is shorter than ``min_overlap`` days.
    """
    for series in (weather, demand):
        if not isinstance(series.index, DateIndex):
            raise GapInSeries("series index is not a consecutive daily index")
    first = max(weather.index.start, demand.index.start)
    last = min(weather.index.end, demand.index.end)
    overlap = (last - first).days + 1
    if overlap < min_overlap:
        raise OverlapTooShort(
            f"series overlap {max(overlap, 0)} days, need at least {min_overlap}"
        )
    return BuildingDataset(weather.window(first, last), demand.window(first, last))


@dataclass(frozen=True)
class Finding:
    kind: str
    day: Optional[int] = None
    detail: str = field(default="", compare=False)


def validate(dataset: BuildingDataset) -> list[Finding]:
    """Return data-quality findings; an empty list means the dataset is clean."""
    findings = []
    phi = dataset.demand.phi
    for t in np.flatnonzero(~np.isfinite(phi)):
        findings.append(Finding("NonFinite", int(t), "phi"))
    for name in ("t_ambient", "wind_speed", "irradiance"):
        arr = getattr(dataset.weather, name)
        for t in np.flatnonzero(~np.isfinite(arr)):
            findings.append(Finding("NonFinite", int(t), name))
    with np.errstate(invalid="ignore"):
        for t in np.flatnonzero(phi < 0):
            findings.append(Finding("NegativeDemand", int(t), f"phi={phi[t]:g}"))
    finite = phi[np.isfinite(phi)]
    if finite.size > 1 and np.all(finite == finite[0]):
        findings.append(Finding("ConstantSeries", None, "phi"))
    return findings

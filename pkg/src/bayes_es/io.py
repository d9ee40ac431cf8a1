"""CSV ingestion and emission for meter and weather series.

Meter files hold daily kWh totals (``date,heat_kwh``) and are converted to
daily-average kW on read. Weather files hold ``date,t_ambient_c,wind_ms,
irradiance_wm2``.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Optional

import numpy as np

from bayes_es.core import DateIndex, GapInSeries, HeatDemandSeries, WeatherSeries

METER_HEADER = ["date", "heat_kwh"]
WEATHER_HEADER = ["date", "t_ambient_c", "wind_ms", "irradiance_wm2"]
HOURS_PER_DAY = 24.0
# meter resolution, 1 Wh
METER_DECIMALS = 6


class IngestError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


class ParseError(IngestError):
    pass


class SchemaError(IngestError):
    pass


class OrderError(IngestError):
    pass


class RangeError(IngestError):
    pass


def _read_rows(path, header: list[str]):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None:
            raise ParseError("no data rows")
        if [c.strip() for c in first] != header:
            raise SchemaError(f"expected header {','.join(header)!r}, got {','.join(first)!r}", 1)
        rows = []
        prev = None
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", line)
            try:
                day = dt.date.fromisoformat(row[0].strip())
            except ValueError:
                raise ParseError(f"bad date {row[0]!r}", line) from None
            try:
                values = [float(c) for c in row[1:]]
            except ValueError:
                raise ParseError(f"bad number in {row[1:]!r}", line) from None
            if not all(math.isfinite(v) for v in values):
                raise ParseError("non-finite value", line)
            if prev is not None and day <= prev:
                raise OrderError(f"date {day} not after {prev}", line)
            prev = day
            rows.append((line, day, values))
    if not rows:
        raise ParseError("no data rows")
    return rows


def _index(rows) -> DateIndex:
    for (_, d0, _), (line, d1, _) in zip(rows, rows[1:]):
        if (d1 - d0).days != 1:
            raise GapInSeries(f"line {line}: missing day(s) between {d0} and {d1}")
    return DateIndex(rows[0][1], len(rows))


def parse_meter_csv(path, building_id: Optional[str] = None,
                    heated_area: Optional[float] = None) -> HeatDemandSeries:
    rows = _read_rows(path, METER_HEADER)
    for line, _, (kwh,) in rows:
        if kwh < 0:
            raise RangeError(f"negative heat_kwh {kwh}", line)
    phi = np.array([r[2][0] for r in rows]) / HOURS_PER_DAY
    bid = building_id if building_id is not None else Path(path).stem
    return HeatDemandSeries(_index(rows), phi, bid, heated_area)


def parse_weather_csv(path) -> WeatherSeries:
    rows = _read_rows(path, WEATHER_HEADER)
    for line, _, (_, wind, irr) in rows:
        if wind < 0:
            raise RangeError(f"negative wind_ms {wind}", line)
        if irr < 0:
            raise RangeError(f"negative irradiance_wm2 {irr}", line)
    vals = np.array([r[2] for r in rows])
    return WeatherSeries(_index(rows), vals[:, 0], vals[:, 1], vals[:, 2])


def kwh_text(phi_kw: float) -> str:
    return f"{phi_kw * HOURS_PER_DAY:.{METER_DECIMALS}f}"


def quantize_load(phi) -> np.ndarray:
    """Round daily loads to what a meter CSV can represent, so writes round-trip."""
    return np.array([float(kwh_text(x)) for x in np.asarray(phi, dtype=float)]) / HOURS_PER_DAY


def meter_csv_text(series: HeatDemandSeries) -> str:
    lines = [",".join(METER_HEADER)]
    for d, x in zip(series.index.dates(), series.phi):
        lines.append(f"{d.isoformat()},{kwh_text(x)}")
    return "\n".join(lines) + "\n"


def weather_csv_text(series: WeatherSeries) -> str:
    lines = [",".join(WEATHER_HEADER)]
    for d, t, w, i in zip(series.index.dates(), series.t_ambient, series.wind_speed,
                          series.irradiance):
        lines.append(f"{d.isoformat()},{float(t)!r},{float(w)!r},{float(i)!r}")
    return "\n".join(lines) + "\n"


def write_atomic(path, text: str) -> None:
    """Write via a temporary file in the same directory and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_meter_csv(path, series: HeatDemandSeries) -> None:
    write_atomic(path, meter_csv_text(series))


def write_weather_csv(path, series: WeatherSeries) -> None:
    write_atomic(path, weather_csv_text(series))


def write_json(path, obj) -> None:
    write_atomic(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")

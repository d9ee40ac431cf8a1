"""Synthetic weather, buildings and building portfolios with known truth."""

from __future__ import annotations

import datetime as dt
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from bayes_es.core import BuildingDataset, DateIndex, HeatDemandSeries, WeatherSeries
from bayes_es.io import quantize_load
from bayes_es.models import ModelKind, ParameterVector, param_names, simulate
from bayes_es.priors import PriorSpec, sample

logger = logging.getLogger(__name__)

MAX_CLAMP_FRACTION = 0.05
# Building noise gets its own stream so that equal weather and building seeds
# do not reuse the weather's normal draws as load noise.
_NOISE_STREAM = 1


class ExcessiveClamping(ValueError):
    pass


@dataclass(frozen=True)
class WeatherConfig:
    """Danish-like defaults; plausible stand-ins, not measured statistics."""

    years: int = 1
    t_mean_annual: float = 8.5
    t_amplitude: float = 8.0
    t_daily_noise_sd: float = 2.5
    wind_mean: float = 5.0
    wind_shape: float = 3.0
    irr_peak: float = 250.0
    irr_noise_sd: float = 0.3
    seed: int = 0
    start: dt.date = dt.date(2018, 1, 1)

    def __post_init__(self):
        if self.years < 1:
            raise ValueError("years must be >= 1")
        if self.t_amplitude < 0 or self.irr_peak < 0 or self.t_daily_noise_sd < 0:
            raise ValueError("amplitudes and noise levels must be non-negative")
        if not (self.wind_mean > 0 and self.wind_shape > 0):
            raise ValueError("wind_mean and wind_shape must be positive")
        if isinstance(self.start, str):
            object.__setattr__(self, "start", dt.date.fromisoformat(self.start))

    @classmethod
    def from_dict(cls, d: Mapping) -> "WeatherConfig":
        return cls(**d)


def generate_weather(cfg: WeatherConfig = WeatherConfig()) -> WeatherSeries:
    rng = np.random.default_rng(cfg.seed)
    end = dt.date(cfg.start.year + cfg.years, cfg.start.month, cfg.start.day)
    index = DateIndex(cfg.start, (end - cfg.start).days)
    doy = index.day_of_year()
    n = index.length
    season = 2.0 * math.pi * doy / 365.25
    temp = cfg.t_mean_annual - cfg.t_amplitude * np.cos(season) + cfg.t_daily_noise_sd * rng.standard_normal(n)
    wind = rng.gamma(cfg.wind_shape, cfg.wind_mean / cfg.wind_shape, size=n)
    half_sine = np.maximum(0.0, np.sin(math.pi * doy / 365.25))
    if cfg.irr_noise_sd > 0:
        shape = 1.0 / cfg.irr_noise_sd ** 2
        cloud = rng.gamma(shape, 1.0 / shape, size=n)
    else:
        cloud = np.ones(n)
    irr = cfg.irr_peak * half_sine * cloud
    return WeatherSeries(index, temp, wind, irr)


# A single dwelling of roughly 150 m2, loads in kW.
DEFAULT_TRUTH = ParameterVector(
    ua0=0.21, ua_wind=0.007, t_base=17.0, ga=0.002, phi_base=0.5, k_mix=3.0,
    sigma_winter=0.08, sigma_reduction=0.25,
)


@dataclass(frozen=True)
class TruthRecord:
    kind: ModelKind
    params: ParameterVector
    seed: int
    clamped_days: int
    building_id: str = "building"
    heated_area: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "building_id": self.building_id,
            "clamped_days": self.clamped_days,
            "heated_area": self.heated_area,
            "model": self.kind.value,
            "params": self.params.to_dict(),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "TruthRecord":
        return cls(
            ModelKind.parse(d["model"]),
            ParameterVector.from_dict(d["params"]),
            int(d.get("seed", 0)),
            int(d.get("clamped_days", 0)),
            d.get("building_id", "building"),
            d.get("heated_area"),
        )


def generate_building(truth: ParameterVector, kind, weather: WeatherSeries, seed: int,
                      building_id: str = "building", heated_area: Optional[float] = None,
                      noise_scale: float = 1.0):
    """Simulate a building from ``truth``; returns (dataset, truth record).

    Negative loads are set to zero and counted. Loads are rounded to meter
    resolution (1 Wh per day) so the series survives a CSV round trip.

    Raises
    ------
    ExcessiveClamping
        If more than 5% of the days had to be clamped.
    """
    kind = ModelKind.parse(kind)
    rng = np.random.default_rng([seed, _NOISE_STREAM])
    sim = simulate(kind, truth, weather, rng, noise_scale=noise_scale)
    neg = sim.phi < 0
    clamped = int(neg.sum())
    if clamped > MAX_CLAMP_FRACTION * len(sim):
        raise ExcessiveClamping(
            f"{clamped} of {len(sim)} simulated days negative for {building_id}"
        )
    phi = quantize_load(np.where(neg, 0.0, sim.phi))
    demand = HeatDemandSeries(weather.index, phi, building_id, heated_area)
    record = TruthRecord(kind, truth, seed, clamped, building_id, heated_area)
    return BuildingDataset(weather, demand), record


def _default_generators() -> dict[str, PriorSpec]:
    return {
        "ua0": PriorSpec("gamma", 1.4, 0.4),          # W/m2K, per area
        "ua_wind": PriorSpec("gamma", 0.045, 0.02),   # W/m2K per m/s, per area
        "t_base": PriorSpec("normal", 17.0, 1.0),
        "ga": PriorSpec("gamma", 0.002, 0.0005),
        "phi_base": PriorSpec("gamma", 0.5, 0.15),
        "k_mix": PriorSpec("gamma", 3.0, 0.75),
        "sigma_winter": PriorSpec("gamma", 0.08, 0.015),
        "sigma_reduction": PriorSpec("gamma", 0.25, 0.05),
        "rho1": PriorSpec("normal", 0.6, 0.05),
        "nu1": PriorSpec("normal", 0.3, 0.05),
        "nu2": PriorSpec("normal", 0.0, 0.02),
        "nu3": PriorSpec("normal", 0.0, 0.02),
    }


@dataclass(frozen=True)
class PopulationConfig:
    """Generating distributions for a synthetic portfolio.

    Parameters listed in ``per_area`` are drawn in W/m2 units and converted to
    kW with ``heated_area``.
    """

    n_buildings: int = 10
    kind: ModelKind = ModelKind.ES
    generators: Mapping[str, PriorSpec] = field(default_factory=_default_generators)
    shared_weather: bool = True
    weather: WeatherConfig = WeatherConfig()
    heated_area: float = 150.0
    per_area: tuple[str, ...] = ("ua0", "ua_wind")
    seed: int = 0

    def __post_init__(self):
        if self.n_buildings < 1:
            raise ValueError("n_buildings must be >= 1")
        object.__setattr__(self, "kind", ModelKind.parse(self.kind))
        missing = [n for n in param_names(self.kind) if n not in self.generators]
        if missing:
            raise ValueError(f"no generating distribution for {', '.join(missing)}")

    @classmethod
    def from_dict(cls, d: Mapping) -> "PopulationConfig":
        d = dict(d)
        gens = _default_generators()
        for name, spec in d.pop("generators", {}).items():
            gens[name] = PriorSpec.from_dict(spec)
        if "weather" in d:
            d["weather"] = WeatherConfig.from_dict(d["weather"])
        if "per_area" in d:
            d["per_area"] = tuple(d["per_area"])
        return cls(generators=gens, **d)


def draw_truth(cfg: PopulationConfig, rng: np.random.Generator) -> ParameterVector:
    kind = cfg.kind
    values = {}
    for name in param_names(kind):
        spec = cfg.generators[name]
        x = float(sample(spec, rng))
        if name in cfg.per_area:
            x *= cfg.heated_area / 1000.0
        values[name] = x
    if kind.has_ar:
        values["rho1"] = float(np.clip(values["rho1"], -0.99, 0.99))
    return ParameterVector.from_array([values[n] for n in param_names(kind)], kind)


def generate_portfolio(cfg: PopulationConfig):
    """List of (dataset, truth record); buildings that clamp too much are skipped."""
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.n_buildings)
    shared = generate_weather(cfg.weather) if cfg.shared_weather else None
    out = []
    for i, ss in enumerate(seeds):
        truth_seed, weather_seed, noise_seed = (int(s) for s in ss.generate_state(3))
        truth = draw_truth(cfg, np.random.default_rng(truth_seed))
        if shared is not None:
            weather = shared
        else:
            weather = generate_weather(
                WeatherConfig(**{**cfg.weather.__dict__, "seed": weather_seed})
            )
        bid = f"b{i:04d}"
        try:
            out.append(generate_building(truth, cfg.kind, weather, noise_seed, bid, cfg.heated_area))
        except ExcessiveClamping as exc:
            warnings.warn(f"skipping {bid}: {exc}", stacklevel=2)
    return out

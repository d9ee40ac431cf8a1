"""Energy signature models: static ES, ARX-ES and ARMAX-ES.

Each day mixes a weather-driven winter regime and a constant base-load regime
with a log-sum-exp smooth maximum of sharpness ``k_mix``::

    winter = (ua0 + ua_wind * W) * (t_base - T) - ga * I + phi_base
    summer = phi_base
    mu     = LSE_k(winter, summer)
    tau    = exp(k winter) / (exp(k winter) + exp(k summer))
    sigma  = tau * sigma_reduction + (1 - tau) * sigma_winter

The dynamic variants add ``rho1 * phi_obs[t-1]`` and, for ARMAX,
``sum(nu_i * e[t-i])`` to both regimes. Adding the same amount to both
arguments shifts LSE by exactly that amount and leaves ``tau`` unchanged, so
those terms are added after mixing.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np
from scipy.signal import lfilter
from scipy.special import expit

from bayes_es.core import BuildingDataset, HeatDemandSeries, WeatherSeries

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
# bound on k * (a - b) before exponentiation
_EXP_CLAMP = 700.0
MA_ORDER = 3


class ModelError(ValueError):
    pass


class NonFiniteLikelihood(ModelError):
    pass


class UnstableAR(ModelError):
    pass


class ModelKind(str, enum.Enum):
    ES = "es"
    ARX_ES = "arx"
    ARMAX_ES = "armax"

    @classmethod
    def parse(cls, value) -> "ModelKind":
        if isinstance(value, cls):
            return value
        v = str(value).lower().replace("-", "_")
        aliases = {"es": cls.ES, "arx": cls.ARX_ES, "arx_es": cls.ARX_ES,
                   "armax": cls.ARMAX_ES, "armax_es": cls.ARMAX_ES}
        if v not in aliases:
            raise ValueError(f"unknown model kind {value!r}")
        return aliases[v]

    @property
    def has_ar(self) -> bool:
        return self is not ModelKind.ES

    @property
    def has_ma(self) -> bool:
        return self is ModelKind.ARMAX_ES


ES_PARAMS = (
    "ua0", "ua_wind", "t_base", "ga", "phi_base", "k_mix", "sigma_winter", "sigma_reduction",
)
POSITIVE_PARAMS = frozenset(
    {"ua0", "ua_wind", "ga", "phi_base", "k_mix", "sigma_winter", "sigma_reduction"}
)


def param_names(kind) -> tuple[str, ...]:
    """Ordered free-parameter names for a model kind."""
    kind = ModelKind.parse(kind)
    names = ES_PARAMS
    if kind.has_ar:
        names += ("rho1",)
    if kind.has_ma:
        names += ("nu1", "nu2", "nu3")
    return names


@dataclass(frozen=True)
class ParameterVector:
    ua0: float
    ua_wind: float
    t_base: float
    ga: float
    phi_base: float
    k_mix: float
    sigma_winter: float
    sigma_reduction: float
    rho1: Optional[float] = None
    nu: Optional[tuple[float, float, float]] = None

    def __post_init__(self):
        if self.nu is not None:
            nu = tuple(float(v) for v in self.nu)
            if len(nu) != MA_ORDER:
                raise ValueError(f"nu needs {MA_ORDER} coefficients")
            object.__setattr__(self, "nu", nu)

    def check(self, kind=None) -> None:
        """Raise ``ValueError`` unless the invariants hold (for ``kind`` if given)."""
        if not (self.ua0 > 0 and self.k_mix > 0
                and self.sigma_winter > 0 and self.sigma_reduction > 0):
            raise ValueError("ua0, k_mix and both sigmas must be positive")
        if not (self.ua_wind >= 0 and self.ga >= 0 and self.phi_base >= 0):
            raise ValueError("ua_wind, ga and phi_base must be non-negative")
        if self.rho1 is not None and not abs(self.rho1) < 1:
            raise ValueError("|rho1| must be < 1")
        if kind is not None:
            kind = ModelKind.parse(kind)
            if kind.has_ar and self.rho1 is None:
                raise ValueError(f"{kind.value} model needs rho1")
            if kind.has_ma and self.nu is None:
                raise ValueError(f"{kind.value} model needs nu")

    def as_array(self, kind) -> np.ndarray:
        kind = ModelKind.parse(kind)
        vals = [getattr(self, n) for n in ES_PARAMS]
        if kind.has_ar:
            vals.append(0.0 if self.rho1 is None else self.rho1)
        if kind.has_ma:
            vals.extend((0.0, 0.0, 0.0) if self.nu is None else self.nu)
        return np.array(vals, dtype=float)

    @classmethod
    def from_array(cls, values, kind) -> "ParameterVector":
        kind = ModelKind.parse(kind)
        v = [float(x) for x in values]
        rho1 = v[8] if kind.has_ar else None
        nu = tuple(v[9:12]) if kind.has_ma else None
        return cls(*v[:8], rho1=rho1, nu=nu)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            val = getattr(self, f.name)
            if f.name == "nu":
                if val is not None:
                    out.update({f"nu{i + 1}": v for i, v in enumerate(val)})
            elif val is not None:
                out[f.name] = val
        return out

    @classmethod
    def from_dict(cls, d) -> "ParameterVector":
        nu = None
        if "nu" in d:
            nu = tuple(d["nu"])
        elif "nu1" in d:
            nu = (d["nu1"], d.get("nu2", 0.0), d.get("nu3", 0.0))
        kw = {n: float(d[n]) for n in ES_PARAMS}
        return cls(**kw, rho1=d.get("rho1"), nu=nu)

    def replace(self, **changes) -> "ParameterVector":
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update(changes)
        return ParameterVector(**d)


@dataclass(frozen=True)
class LongTermParameters:
    ua0_lt: float
    ua_wind_lt: float
    t_base_lt: float
    ga_lt: float
    phi_base_lt: float
    gamma: float

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


# --- scalar building blocks -------------------------------------------------

def winter_regime_mean(p: ParameterVector, t_ambient, wind_speed, irradiance):
    return (p.ua0 + p.ua_wind * wind_speed) * (p.t_base - t_ambient) - p.ga * irradiance + p.phi_base


def summer_regime_mean(p: ParameterVector) -> float:
    return p.phi_base


def lse_mix(a, b, k):
    """Smooth maximum ``log(exp(k a) + exp(k b)) / k`` without overflow."""
    d = np.clip(k * np.abs(np.subtract(a, b)), 0.0, _EXP_CLAMP)
    out = np.maximum(a, b) + np.log1p(np.exp(-d)) / k
    return float(out) if np.ndim(out) == 0 else out


def tau_weight(a, b, k):
    """Weight of the first regime, ``exp(k a) / (exp(k a) + exp(k b))``."""
    x = np.clip(k * np.subtract(a, b), -_EXP_CLAMP, _EXP_CLAMP)
    out = expit(x)
    return float(out) if np.ndim(out) == 0 else out


def mixed_sigma(tau, p: ParameterVector):
    return tau * p.sigma_reduction + (1.0 - tau) * p.sigma_winter


# --- series -----------------------------------------------------------------

def _static_regimes(p: ParameterVector, weather: WeatherSeries):
    winter = winter_regime_mean(p, weather.t_ambient, weather.wind_speed, weather.irradiance)
    summer = np.full_like(winter, summer_regime_mean(p))
    mu = lse_mix(winter, summer, p.k_mix)
    tau = tau_weight(winter, summer, p.k_mix)
    return np.atleast_1d(mu), np.atleast_1d(tau)


def _ma_filter(nu, innovations_plus_ma: np.ndarray) -> np.ndarray:
    """Recover residuals e from ``u[t] = e[t] + sum_i nu_i e[t-i]``, e[<0] = 0."""
    return lfilter([1.0], np.concatenate(([1.0], nu)), innovations_plus_ma)


def mean_series(kind, p: ParameterVector, data: BuildingDataset):
    """One-step conditional mean, noise scale and regime weight per day.

    Returns
    -------
    mu, sigma, tau : ndarray
        Arrays of length ``data.n_days``. For the dynamic models day 0 has no
        lagged observation and uses the static mean.
    """
    kind = ModelKind.parse(kind)
    base, tau = _static_regimes(p, data.weather)
    sigma = mixed_sigma(tau, p)
    if not kind.has_ar:
        return base, sigma, tau
    y = data.demand.phi
    lag = np.zeros_like(base)
    lag[1:] = p.rho1 * y[:-1]
    arx = base + lag
    if not kind.has_ma:
        return arx, sigma, tau
    u = y - arx
    e = _ma_filter(np.asarray(p.nu), u)
    ma = u - e
    return arx + ma, sigma, tau


def residuals(kind, p: ParameterVector, data: BuildingDataset) -> np.ndarray:
    mu, _, _ = mean_series(kind, p, data)
    return data.demand.phi - mu


def normal_logpdf(y, mu, sigma):
    z = (y - mu) / sigma
    return -0.5 * z * z - np.log(sigma) - _LOG_SQRT_2PI


def log_likelihood(kind, p: ParameterVector, data: BuildingDataset):
    """Total and per-day Normal log-likelihood of the observed loads."""
    mu, sigma, _ = mean_series(kind, p, data)
    if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma))):
        raise NonFiniteLikelihood("non-finite mean or noise scale")
    pointwise = normal_logpdf(data.demand.phi, mu, sigma)
    return float(pointwise.sum()), pointwise


def simulate_batch(kind, params: np.ndarray, weather: WeatherSeries, rng: np.random.Generator,
                   noise_scale: float = 1.0) -> np.ndarray:
    """Simulate one trajectory per parameter row.

    ``params`` is (draws, n_params) in :func:`param_names` order. Returns a
    (draws, n_days) array. ``noise_scale=0`` gives the noiseless recursion.
    """
    kind = ModelKind.parse(kind)
    P = np.atleast_2d(np.asarray(params, dtype=float))
    m, n = P.shape[0], len(weather)
    col = {name: P[:, i:i + 1] for i, name in enumerate(param_names(kind))}
    winter = ((col["ua0"] + col["ua_wind"] * weather.wind_speed) * (col["t_base"] - weather.t_ambient)
              - col["ga"] * weather.irradiance + col["phi_base"])
    summer = np.broadcast_to(col["phi_base"], winter.shape)
    base = lse_mix(winter, summer, col["k_mix"])
    tau = tau_weight(winter, summer, col["k_mix"])
    sigma = tau * col["sigma_reduction"] + (1.0 - tau) * col["sigma_winter"]
    z = rng.standard_normal((m, n))
    eps = noise_scale * sigma * z
    if not kind.has_ar:
        return base + eps
    rho = col["rho1"][:, 0]
    nu = np.hstack([col[f"nu{i}"] for i in (1, 2, 3)]) if kind.has_ma else None
    y = np.empty((m, n))
    for t in range(n):
        mu = base[:, t].copy()
        if t > 0:
            mu += rho * y[:, t - 1]
        if nu is not None:
            for i in range(1, MA_ORDER + 1):
                if t - i >= 0:
                    mu += nu[:, i - 1] * eps[:, t - i]
        y[:, t] = mu + eps[:, t]
    return y


def simulate(kind, p: ParameterVector, weather: WeatherSeries, rng: np.random.Generator,
             noise_scale: float = 1.0, building_id: str = "simulated") -> HeatDemandSeries:
    """Draw one heat-demand trajectory, feeding simulated loads back as lags."""
    kind = ModelKind.parse(kind)
    p.check(kind)
    y = simulate_batch(kind, p.as_array(kind)[None, :], weather, rng, noise_scale)[0]
    return HeatDemandSeries(weather.index, y, building_id)


# --- long-term / error-correction forms -------------------------------------

def regressors(weather: WeatherSeries) -> np.ndarray:
    """Design matrix ``x[t] = [1, W, T, T*W, I]`` of the linear winter drive."""
    T, W, I = weather.t_ambient, weather.wind_speed, weather.irradiance
    return np.column_stack([np.ones_like(T), W, T, T * W, I])


def theta_block(p: ParameterVector) -> np.ndarray:
    """Coefficients with ``regressors(w) @ theta_block(p) == winter - phi_base``."""
    return np.array([p.ua0 * p.t_base, p.ua_wind * p.t_base, -p.ua0, -p.ua_wind, -p.ga])


def _gamma(p: ParameterVector) -> float:
    rho = 0.0 if p.rho1 is None else p.rho1
    if not abs(rho) < 1:
        raise UnstableAR(f"|rho1| = {abs(rho)} >= 1")
    return 1.0 - rho


def long_term_transform(p: ParameterVector) -> LongTermParameters:
    """Steady-state parameters, the short-term ones divided by ``1 - rho1``."""
    gamma = _gamma(p)
    th = theta_block(p) / gamma
    ua0_lt = -th[2]
    ua_wind_lt = -th[3]
    t_base_lt = th[0] / ua0_lt
    return LongTermParameters(ua0_lt, ua_wind_lt, t_base_lt, -th[4], p.phi_base / gamma, gamma)


def short_term_from_long(lt: LongTermParameters, template: ParameterVector) -> ParameterVector:
    """Inverse of :func:`long_term_transform`, other fields from ``template``."""
    g = lt.gamma
    return template.replace(
        ua0=lt.ua0_lt * g,
        ua_wind=lt.ua_wind_lt * g,
        t_base=(lt.ua0_lt * lt.t_base_lt * g) / (lt.ua0_lt * g),
        ga=lt.ga_lt * g,
        phi_base=lt.phi_base_lt * g,
        rho1=1.0 - g,
    )


@dataclass(frozen=True)
class ECMForm:
    """Error-correction form of the linear winter regime.

    ``delta = dx @ theta - gamma * (prev - (phi_base_lt + x_prev @ theta_lt))``
    """

    gamma: float
    phi_base_lt: float
    theta: np.ndarray
    theta_lt: np.ndarray

    def target(self, x_prev: np.ndarray):
        """Long-term level the previous load is corrected towards."""
        return self.phi_base_lt + x_prev @ self.theta_lt

    def delta(self, prev, x_prev: np.ndarray, x_now: np.ndarray):
        return (x_now - x_prev) @ self.theta - self.gamma * (prev - self.target(x_prev))


def ecm_form(p: ParameterVector) -> ECMForm:
    gamma = _gamma(p)
    th = theta_block(p)
    return ECMForm(gamma, p.phi_base / gamma, th, th / gamma)


def arx_delta(p: ParameterVector, prev, x_now: np.ndarray):
    """``phi[t] - phi[t-1]`` for the noiseless linear ARX winter regime."""
    rho = 0.0 if p.rho1 is None else p.rho1
    return x_now @ theta_block(p) + p.phi_base + rho * prev - prev

"""Fit evaluation: Bayesian R2, LOO, p-values, residual ACF and reports."""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np
from scipy.special import logsumexp

from bayes_es.core import BuildingDataset, DateIndex, WeatherSeries
from bayes_es.mcmc import PosteriorSamples, SamplerConfig, fit
from bayes_es.models import (
    ModelKind,
    ParameterVector,
    long_term_transform,
    mean_series,
    simulate_batch,
)
from bayes_es.priors import PriorSpec

KWH_PER_KW_DAY = 24.0
ACF_LAGS = 20
DEGENERATE_WEIGHT = 0.9


class DegenerateWeights(UserWarning):
    pass


def _loglik(samples) -> np.ndarray:
    if isinstance(samples, PosteriorSamples):
        return samples.flat_loglik()
    ll = np.asarray(samples, dtype=float)
    return ll.reshape(-1, ll.shape[-1])


def _thin_rows(x: np.ndarray, max_rows: Optional[int]) -> np.ndarray:
    if max_rows is None or x.shape[0] <= max_rows:
        return x
    idx = np.linspace(0, x.shape[0] - 1, max_rows).round().astype(int)
    return x[idx]


# --- R2 ---------------------------------------------------------------------

def r2_from_moments(mu: np.ndarray, sigma: np.ndarray) -> float:
    """Explained variance over explained plus expected residual variance."""
    explained = np.var(mu)
    residual = np.mean(np.square(sigma))
    total = explained + residual
    return 0.0 if total == 0 else float(explained / total)


def bayes_r2(samples: PosteriorSamples, kind, data: BuildingDataset,
             max_draws: Optional[int] = None) -> np.ndarray:
    """One Bayesian R2 value per posterior draw (all draws by default)."""
    rows = _thin_rows(samples.flat(), max_draws)
    out = np.empty(rows.shape[0])
    for m, row in enumerate(rows):
        mu, sigma, _ = mean_series(kind, ParameterVector.from_array(row, kind), data)
        out[m] = r2_from_moments(mu, sigma)
    return out


# --- predictive accuracy ----------------------------------------------------

@dataclass
class LooResult:
    elpd: float
    se: float
    pointwise: np.ndarray
    max_weight: np.ndarray
    degenerate: bool

    def to_dict(self) -> dict:
        return {"elpd": self.elpd, "se": self.se, "degenerate": self.degenerate,
                "max_weight": float(self.max_weight.max())}


def elpd_loo(samples) -> LooResult:
    """Importance-sampling leave-one-out ELPD with truncated weights.

    Raw weights are ``1 / p(x_i | theta_m)``, truncated at ``mean * sqrt(M)``
    and self-normalized. Days whose largest normalized weight exceeds 0.9
    are flagged with a :class:`DegenerateWeights` warning.
    """
    ll = _loglik(samples)
    m, n = ll.shape
    log_w = -ll
    log_w = log_w - log_w.max(axis=0)
    w = np.exp(log_w)
    cap = w.mean(axis=0) * math.sqrt(m)
    w = np.minimum(w, cap)
    w /= w.sum(axis=0)
    with np.errstate(divide="ignore"):
        pointwise = logsumexp(ll + np.log(w), axis=0)
    max_w = w.max(axis=0)
    degenerate = bool(np.any(max_w > DEGENERATE_WEIGHT))
    if degenerate:
        warnings.warn(
            f"{int(np.sum(max_w > DEGENERATE_WEIGHT))} days with degenerate LOO weights",
            DegenerateWeights, stacklevel=2,
        )
    elpd = float(pointwise.sum())
    se = float(math.sqrt(n * np.var(pointwise))) if n > 1 else 0.0
    return LooResult(elpd, se, pointwise, max_w, degenerate)


def lpd(samples) -> float:
    """In-sample log pointwise predictive density (log-mean-exp per day)."""
    ll = _loglik(samples)
    return float(np.sum(logsumexp(ll, axis=0) - math.log(ll.shape[0])))


def exact_loo(kind, data: BuildingDataset, priors: Mapping[str, PriorSpec],
              config: SamplerConfig, days: Optional[Sequence[int]] = None) -> np.ndarray:
    """Brute-force LOO: refit once per held-out day.

    Returns ``log p(x_i | X_-i)`` for each requested day, estimated by
    averaging the held-out day's likelihood over the refit's draws.
    """
    days = range(data.n_days) if days is None else days
    out = []
    for i in days:
        s = fit(kind, data, priors, config, exclude_days=[i])
        ll_i = s.flat_loglik()[:, i]
        out.append(float(logsumexp(ll_i) - math.log(ll_i.size)))
    return np.array(out)


# --- posterior predictive checks --------------------------------------------

def _stat_mean(phi, index):
    return phi.mean(axis=-1)


def _stat_max(phi, index):
    return phi.max(axis=-1)


def _stat_lag1(phi, index):
    x = phi - phi.mean(axis=-1, keepdims=True)
    den = np.sum(x * x, axis=-1)
    num = np.sum(x[..., 1:] * x[..., :-1], axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)


def _stat_winter_share(phi, index: DateIndex):
    winter = np.isin(index.months(), (12, 1, 2))
    total = phi.sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(total != 0, phi[..., winter].sum(axis=-1) / np.where(total != 0, total, 1.0), 0.0)


STATISTICS: dict[str, Callable] = {
    "mean": _stat_mean,
    "max": _stat_max,
    "lag1-autocorr": _stat_lag1,
    "winter-share": _stat_winter_share,
}

Statistic = Union[str, Callable]


def _apply_stat(stat: Statistic, phi: np.ndarray, index: DateIndex) -> np.ndarray:
    if isinstance(stat, str):
        return np.asarray(STATISTICS[stat](phi, index), dtype=float)
    if phi.ndim == 1:
        return np.asarray(stat(phi, index), dtype=float)
    return np.array([stat(row, index) for row in phi], dtype=float)


def posterior_replicates(samples: PosteriorSamples, kind, weather: WeatherSeries,
                         rng: np.random.Generator, max_draws: Optional[int] = None) -> np.ndarray:
    """One simulated series per posterior draw, shape (draws, days)."""
    rows = _thin_rows(samples.flat(), max_draws)
    return simulate_batch(kind, rows, weather, rng)


def bayes_p_value(samples: PosteriorSamples, kind, data: BuildingDataset, statistic: Statistic,
                  rng: np.random.Generator, max_draws: Optional[int] = None) -> float:
    """Fraction of posterior replicates with ``T(replicate) >= T(observed)``."""
    return bayes_p_values(samples, kind, data, [statistic], rng, max_draws)[
        statistic if isinstance(statistic, str) else getattr(statistic, "__name__", "custom")
    ]


def bayes_p_values(samples: PosteriorSamples, kind, data: BuildingDataset,
                   statistics: Sequence[Statistic], rng: np.random.Generator,
                   max_draws: Optional[int] = None) -> dict[str, float]:
    """Several p-values computed from one shared set of replicates."""
    reps = posterior_replicates(samples, kind, data.weather, rng, max_draws)
    out = {}
    for stat in statistics:
        name = stat if isinstance(stat, str) else getattr(stat, "__name__", "custom")
        t_rep = _apply_stat(stat, reps, data.index)
        t_obs = _apply_stat(stat, data.demand.phi, data.index)
        out[name] = float(np.mean(t_rep >= t_obs))
    return out


# --- residual autocorrelation -----------------------------------------------

def acf(x, max_lag: int = ACF_LAGS) -> np.ndarray:
    """Sample autocorrelation at lags 1..max_lag."""
    r = np.asarray(x, dtype=float)
    r = r - r.mean()
    den = np.dot(r, r)
    if den == 0:
        return np.zeros(max_lag)
    return np.array([np.dot(r[:-h], r[h:]) / den for h in range(1, max_lag + 1)])


def posterior_mean_mu(samples: PosteriorSamples, kind, data: BuildingDataset,
                      max_draws: Optional[int] = None) -> np.ndarray:
    rows = _thin_rows(samples.flat(), max_draws)
    total = np.zeros(data.n_days)
    for row in rows:
        total += mean_series(kind, ParameterVector.from_array(row, kind), data)[0]
    return total / rows.shape[0]


def residual_acf(samples: PosteriorSamples, kind, data: BuildingDataset,
                 max_lag: int = ACF_LAGS, max_draws: Optional[int] = None) -> np.ndarray:
    """ACF of observed minus posterior-mean one-step-ahead means."""
    if not max_lag < data.n_days / 4:
        raise ValueError(f"max_lag {max_lag} needs more than {4 * max_lag} days")
    r = data.demand.phi - posterior_mean_mu(samples, kind, data, max_draws)
    return acf(r, max_lag)


# --- intervals --------------------------------------------------------------

def credible_interval(draws, level: float = 0.95) -> tuple[float, float]:
    """Equal-tailed interval from linearly interpolated quantiles."""
    if not 0 < level < 1:
        raise ValueError("level must be in (0, 1)")
    x = np.ravel(np.asarray(draws, dtype=float))
    tail = (1.0 - level) / 2.0
    lo, hi = np.quantile(x, [tail, 1.0 - tail])
    return float(lo), float(hi)


def parameter_significant(draws, level: float = 0.95) -> bool:
    """True when the credible interval excludes zero (boundary counts as inside)."""
    lo, hi = credible_interval(draws, level)
    return not (lo <= 0.0 <= hi)


# --- yearly totals ----------------------------------------------------------

@dataclass
class YearlyPredictive:
    mean: float
    q025: float
    q975: float
    draws: np.ndarray

    def to_dict(self) -> dict:
        return {"mean_kwh": self.mean, "q025_kwh": self.q025, "q975_kwh": self.q975}


def yearly_posterior_predictive(samples: PosteriorSamples, kind, weather: WeatherSeries,
                                rng: np.random.Generator, max_draws: Optional[int] = None
                                ) -> YearlyPredictive:
    """Distribution of simulated 365-day totals in kWh, one per posterior draw."""
    if len(weather) < 365:
        raise ValueError("need at least 365 days of weather")
    year = weather.head(365)
    sims = posterior_replicates(samples, kind, year, rng, max_draws)
    totals = sims.sum(axis=1) * KWH_PER_KW_DAY
    lo, hi = np.quantile(totals, [0.025, 0.975])
    return YearlyPredictive(float(totals.mean()), float(lo), float(hi), totals)


def expected_yearly_total(kind, p: ParameterVector, weather: WeatherSeries) -> float:
    """Noiseless yearly total (kWh) of ``p`` over the first 365 days."""
    year = weather.head(365)
    sim = simulate_batch(kind, p.as_array(kind)[None, :], year, np.random.default_rng(0), 0.0)
    return float(sim.sum() * KWH_PER_KW_DAY)


# --- reports ----------------------------------------------------------------

def long_term_draws(samples: PosteriorSamples) -> Optional[dict[str, np.ndarray]]:
    if not ModelKind.parse(samples.kind).has_ar:
        return None
    rows = [long_term_transform(p).to_dict() for p in samples.parameter_vectors()]
    return {k: np.array([r[k] for r in rows]) for k in rows[0]}


def _summary(x: np.ndarray, level: float = 0.95) -> dict:
    lo, hi = credible_interval(x, level)
    return {"mean": float(np.mean(x)), "sd": float(np.std(x, ddof=1)) if x.size > 1 else 0.0,
            "lo": lo, "hi": hi, "level": level}


@dataclass
class FitReport:
    model: str
    building_id: str
    n_days: int
    param_names: list
    posterior_mean: dict
    posterior_sd: dict
    intervals: dict
    significant: dict
    rhat: dict
    ess: dict
    converged: bool
    accept_rate: list
    r2_draws: list
    r2_median: float
    elpd_loo: dict
    lpd: float
    acf: list
    long_term: Optional[dict]
    yearly: Optional[dict]
    p_values: dict
    per_area: Optional[dict] = None
    heated_area: Optional[float] = None
    sampler: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: Mapping) -> "FitReport":
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "FitReport":
        return cls.from_dict(json.loads(text))


def build_report(samples: PosteriorSamples, data: BuildingDataset, rng: np.random.Generator,
                 level: float = 0.95, max_draws: Optional[int] = 2000,
                 yearly_weather: Optional[WeatherSeries] = None) -> FitReport:
    """Assemble every metric for one fit.

    Replicate-based metrics (p-values, yearly totals) use at most
    ``max_draws`` evenly spaced posterior draws.
    """
    kind = ModelKind.parse(samples.kind)
    flat = samples.flat()
    names = list(samples.param_names)
    intervals, significant, means, sds = {}, {}, {}, {}
    for i, n in enumerate(names):
        lo, hi = credible_interval(flat[:, i], level)
        intervals[n] = {"lo": lo, "hi": hi, "level": level}
        significant[n] = parameter_significant(flat[:, i], level)
        means[n] = float(flat[:, i].mean())
        sds[n] = float(flat[:, i].std(ddof=1))
    rhats = samples.rhat()
    r2 = bayes_r2(samples, kind, data)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateWeights)
        loo = elpd_loo(samples)
    max_lag = min(ACF_LAGS, max(1, math.ceil(data.n_days / 4) - 1))
    lt = long_term_draws(samples)
    long_term = None if lt is None else {k: _summary(v, level) for k, v in lt.items()}
    yw = yearly_weather if yearly_weather is not None else data.weather
    yearly = None
    if len(yw) >= 365:
        yearly = yearly_posterior_predictive(samples, kind, yw, rng, max_draws).to_dict()
    p_values = bayes_p_values(samples, kind, data, list(STATISTICS), rng, max_draws)
    area = data.demand.heated_area
    per_area = None
    if area:
        # kW/K -> W/m2K
        per_area = {n: means[n] * 1000.0 / area for n in ("ua0", "ua_wind", "phi_base", "ga")}
        if long_term is not None:
            per_area.update({f"{n}_lt": long_term[f"{n}_lt"]["mean"] * 1000.0 / area
                             for n in ("ua0", "ua_wind", "phi_base", "ga")})
    sampler = asdict(samples.config) if samples.config is not None else {}
    return FitReport(
        model=kind.value,
        building_id=data.demand.building_id,
        n_days=data.n_days,
        param_names=names,
        posterior_mean=means,
        posterior_sd=sds,
        intervals=intervals,
        significant=significant,
        rhat=rhats,
        ess=samples.ess(),
        converged=all(r < 1.05 for r in rhats.values()),
        accept_rate=[float(a) for a in samples.accept_rate],
        r2_draws=[float(x) for x in r2],
        r2_median=float(np.median(r2)),
        elpd_loo=loo.to_dict(),
        lpd=lpd(samples),
        acf=[float(x) for x in residual_acf(samples, kind, data, max_lag, max_draws)],
        long_term=long_term,
        yearly=yearly,
        p_values=p_values,
        per_area=per_area,
        heated_area=area,
        sampler=sampler,
    )


# --- population -------------------------------------------------------------

@dataclass
class Histogram:
    edges: np.ndarray
    counts: np.ndarray


@dataclass
class PopulationSummary:
    values: dict  # (model, quantity) -> array of per-building values
    histograms: dict  # (model, quantity) -> Histogram
    quantiles: dict  # (model, quantity) -> {"q25", "median", "q75"}

    def histogram_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", "quantity", "bin_left", "bin_right", "count"])
        for (model, q), h in sorted(self.histograms.items()):
            for lo, hi, c in zip(h.edges[:-1], h.edges[1:], h.counts):
                w.writerow([model, q, repr(float(lo)), repr(float(hi)), int(c)])
        return buf.getvalue()

    def quantile_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", "quantity", "n", "q25", "median", "q75"])
        for (model, q), d in sorted(self.quantiles.items()):
            w.writerow([model, q, len(self.values[(model, q)]),
                        repr(d["q25"]), repr(d["median"]), repr(d["q75"])])
        return buf.getvalue()


def report_quantities(report: FitReport) -> dict[str, float]:
    """Scalar per-building quantities that enter population summaries."""
    out = {n: v for n, v in report.posterior_mean.items()}
    if report.long_term:
        out.update({k: v["mean"] for k, v in report.long_term.items() if k != "gamma"})
    out["r2_median"] = report.r2_median
    out["elpd_loo"] = report.elpd_loo["elpd"]
    return out


def population_summary(reports: Sequence[FitReport], bins: Optional[Mapping] = None,
                       default_bins: int = 20) -> PopulationSummary:
    """Histograms and quantiles of posterior-mean quantities, by model.

    ``bins`` maps a quantity name to ``(lo, hi, n_bins)``; other quantities
    share an edge set spanning the pooled values of all models so overlays
    line up.
    """
    if len(reports) < 2:
        raise ValueError("population summary needs at least 2 reports")
    bins = dict(bins or {})
    values: dict = {}
    for rep in reports:
        for q, v in report_quantities(rep).items():
            values.setdefault((rep.model, q), []).append(v)
    values = {k: np.array(v) for k, v in values.items()}
    quantities = sorted({q for _, q in values})
    histograms, quantiles = {}, {}
    for q in quantities:
        pooled = np.concatenate([v for (m, qq), v in values.items() if qq == q])
        if q in bins:
            lo, hi, nb = bins[q]
        else:
            lo, hi, nb = float(pooled.min()), float(pooled.max()), default_bins
            if lo == hi:
                lo, hi = lo - 0.5, hi + 0.5
        edges = np.linspace(lo, hi, int(nb) + 1)
        for (m, qq), v in values.items():
            if qq != q:
                continue
            counts, _ = np.histogram(v, edges)
            histograms[(m, q)] = Histogram(edges, counts)
            q25, med, q75 = np.quantile(v, [0.25, 0.5, 0.75])
            quantiles[(m, q)] = {"q25": float(q25), "median": float(med), "q75": float(q75)}
    return PopulationSummary(values, histograms, quantiles)


def median_bootstrap_se(x, rng: np.random.Generator, n_boot: int = 2000) -> float:
    """Bootstrap standard error of the median."""
    x = np.asarray(x, dtype=float)
    idx = rng.integers(0, x.size, size=(n_boot, x.size))
    return float(np.std(np.median(x[idx], axis=1), ddof=1))

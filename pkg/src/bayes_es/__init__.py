"""Bayesian energy signature models for daily building heat demand."""

from bayes_es.core import (
    BuildingDataset,
    DateIndex,
    HeatDemandSeries,
    WeatherSeries,
    align,
    validate,
)
from bayes_es.mcmc import PosteriorSamples, SamplerConfig, fit
from bayes_es.models import ModelKind, ParameterVector, log_likelihood, simulate
from bayes_es.priors import PriorSpec, load_priors

__all__ = [
    "BuildingDataset",
    "DateIndex",
    "HeatDemandSeries",
    "ModelKind",
    "ParameterVector",
    "PosteriorSamples",
    "PriorSpec",
    "SamplerConfig",
    "WeatherSeries",
    "align",
    "fit",
    "load_priors",
    "log_likelihood",
    "simulate",
    "validate",
]

__version__ = "0.1.0"

"""Exact Bayesian inference and prediction for geostatistical data under preferential sampling."""
__version__ = "0.1.0"

from .dataset import GeoDataset
from .estimators import GeostatRegressor, PreferentialGeostatRegressor
from .evaluation import MetricReport, cross_validate, crci, mape, ppd, variogram_envelope
from .inference import ChainState, McmcConfig, PosteriorSamples, Priors, run_eps, run_nps
from .prediction import PredictionGrid, PredictiveField, predict_intensity, predict_response
from .region import UNIT_SQUARE, Region
from .simulation import TrueParams, simulate_nps, simulate_ps

__all__ = [
    "GeoDataset", "GeostatRegressor", "PreferentialGeostatRegressor", "MetricReport",
    "cross_validate", "crci", "mape", "ppd", "variogram_envelope", "ChainState", "McmcConfig",
    "PosteriorSamples", "Priors", "run_eps", "run_nps", "PredictionGrid", "PredictiveField",
    "predict_intensity", "predict_response", "UNIT_SQUARE", "Region", "TrueParams",
    "simulate_nps", "simulate_ps",
]

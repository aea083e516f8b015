"""Posterior predictive draws of the response and the sampling intensity on new locations."""
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .gp import CorrelationModel, GpParams, conditional_draw, conditional_marginals

DEFAULT_LEVELS = (0.95,)


class ModelMismatchError(ValueError):
    pass


@dataclass
class PredictionGrid:
    locations: np.ndarray
    design: np.ndarray

    def __post_init__(self):
        self.locations = np.asarray(self.locations, dtype=float).reshape(-1, 2)
        self.design = np.asarray(self.design, dtype=float).reshape(len(self.locations), -1)

    @classmethod
    def from_locations(cls, locations, covariates=None, region=None):
        locations = np.asarray(locations, dtype=float).reshape(-1, 2)
        if region is not None and not np.all(region.contains(locations)):
            raise ValueError("prediction location outside the region")
        ones = np.ones((len(locations), 1))
        if covariates is None or np.size(covariates) == 0:
            return cls(locations, ones)
        return cls(locations, np.hstack([ones, np.asarray(covariates, dtype=float).reshape(len(locations), -1)]))

    @property
    def n(self):
        return len(self.locations)


@dataclass
class PredictiveField:
    """Per-location predictive draws, shape ``(n_draws, n_locations)``.

    For the response, ``component_mean``/``component_var`` hold the Gaussian
    mixture components ``N(D_u eta_m + S_u,m, tau2_m)`` behind the draws.
    """

    locations: np.ndarray
    draws: np.ndarray
    quantity: str = "y"
    component_mean: np.ndarray = None
    component_var: np.ndarray = None

    @property
    def mean(self):
        return self.draws.mean(axis=0)

    @property
    def median(self):
        return np.median(self.draws, axis=0)

    def interval(self, level):
        lo, hi = np.quantile(self.draws, [(1 - level) / 2, (1 + level) / 2], axis=0)
        return lo, hi

    def summary(self, levels=DEFAULT_LEVELS):
        out = {"mean": self.mean, "median": self.median, "sd": self.draws.std(axis=0, ddof=1)}
        for level in levels:
            lo, hi = self.interval(level)
            tag = level_tag(level)
            out[f"lo{tag}"] = lo
            out[f"hi{tag}"] = hi
        return out


def level_tag(level):
    """``0.95 -> '95'``, ``0.995 -> '99.5'``."""
    return f"{100 * level:g}"


def _known_points(samples, data, m, condition_on):
    if condition_on == "all" and samples.discarded_locs is not None:
        return (np.vstack([data.locations, samples.discarded_locs[m]]),
                np.concatenate([samples.s_data[m], samples.discarded_s[m]]))
    return data.locations, samples.s_data[m]


def field_draws(samples, data, locations, rng, condition_on="all", joint=False):
    """One draw of the latent field at ``locations`` per posterior draw.

    ``condition_on="all"`` kriges from the field at the data and the discarded
    points of each draw (needs draws stored with their discarded points);
    ``"data"`` uses the data locations only.  With ``joint=False`` locations
    are drawn from their pointwise conditional marginals, which leaves every
    per-location summary unchanged and avoids an ``n_u``-sized factorization.
    """
    if condition_on not in ("all", "data"):
        raise ValueError("condition_on must be 'all' or 'data'")
    if condition_on == "all" and samples.is_preferential and samples.discarded_locs is None:
        raise ModelMismatchError("draws were stored without discarded points; use condition_on='data'")
    locations = np.asarray(locations, dtype=float).reshape(-1, 2)
    base = int(rng.integers(2**63 - 1))
    out = np.empty((len(samples), len(locations)))
    for m in range(len(samples)):
        draw_rng = np.random.default_rng([base, m])
        params = GpParams(float(samples.sigma2[m]), CorrelationModel(float(samples.phi[m])))
        known_locs, known_s = _known_points(samples, data, m, condition_on)
        if joint:
            out[m] = conditional_draw(locations, known_locs, known_s, params, draw_rng)
        else:
            mean, var = conditional_marginals(locations, known_locs, known_s, params)
            out[m] = mean + np.sqrt(var) * draw_rng.standard_normal(len(locations))
    return out


def _response_from_field(samples, grid, s_u, rng):
    comp_mean = samples.eta @ grid.design.T + s_u
    noise = rng.standard_normal(comp_mean.shape)
    draws = comp_mean + np.sqrt(samples.tau2)[:, None] * noise
    return PredictiveField(grid.locations, draws, "y", comp_mean, samples.tau2.copy())


def _intensity_from_field(samples, s_u):
    if not samples.is_preferential:
        raise ModelMismatchError("intensity prediction needs draws from the preferential model")
    sigma = np.sqrt(samples.sigma2)[:, None]
    return samples.lambda_star[:, None] * ndtr(samples.beta[:, None] * s_u / sigma)


def predict_response(samples, data, grid, rng, condition_on="all", joint=False):
    if len(samples) == 0:
        raise ValueError("no posterior draws")
    s_u = field_draws(samples, data, grid.locations, rng, condition_on, joint)
    return _response_from_field(samples, grid, s_u, rng)


def predict_intensity(samples, data, grid, rng, condition_on="all", joint=False):
    if not samples.is_preferential:
        raise ModelMismatchError("intensity prediction needs draws from the preferential model")
    s_u = field_draws(samples, data, grid.locations, rng, condition_on, joint)
    return PredictiveField(grid.locations, _intensity_from_field(samples, s_u), "intensity")


def predict(samples, data, grid, rng, condition_on="all", joint=False):
    """Response field and, for preferential draws, the intensity from shared field draws.

    Returns ``(response, intensity_or_None)``.
    """
    s_u = field_draws(samples, data, grid.locations, rng, condition_on, joint)
    response = _response_from_field(samples, grid, s_u, rng)
    intensity = None
    if samples.is_preferential:
        intensity = PredictiveField(grid.locations, _intensity_from_field(samples, s_u), "intensity")
    return response, intensity

"""scikit-learn style wrappers around the samplers.

``X`` holds the two coordinates in its first two columns; any further columns
are covariates (the intercept is added internally).  ``fit`` runs the MCMC,
``predict`` returns posterior predictive means, and
:meth:`PreferentialGeostatRegressor.predict_intensity` the mean sampling
intensity.

>>> model = PreferentialGeostatRegressor(n_iter=2000, burn_in=500, thin=5)
>>> model.fit(X, y).predict(X_new)            # doctest: +SKIP
"""
import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ._rng import derive_rng
from .dataset import GeoDataset
from .inference import McmcConfig, Priors, run_eps, run_nps
from .prediction import DEFAULT_LEVELS, PredictionGrid, predict, predict_response
from .region import Region


def _validate_X(X, n_features=None):
    X = check_array(X, ensure_min_samples=1)
    if X.shape[1] < 2:
        raise ValueError("X needs at least two columns (the coordinates)")
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"X has {X.shape[1]} columns, the model was fitted with {n_features}")
    return X


def _region_from(region, X):
    if region is None:
        return Region(tuple(X[:, :2].min(axis=0)), tuple(X[:, :2].max(axis=0)))
    if isinstance(region, Region):
        return region
    lower, upper = region
    return Region(tuple(lower), tuple(upper))


class _GeostatBase(RegressorMixin, BaseEstimator):
    _preferential = False

    def __init__(self, priors=None, n_iter=20000, burn_in=5000, thin=15, step_sigma2=0.3,
                 step_phi=0.3, step_beta=0.3, fix_phi=None, adapt=True, condition_on="all",
                 max_predict_draws=None, random_state=0):
        self.priors = priors
        self.n_iter = n_iter
        self.burn_in = burn_in
        self.thin = thin
        self.step_sigma2 = step_sigma2
        self.step_phi = step_phi
        self.step_beta = step_beta
        self.fix_phi = fix_phi
        self.adapt = adapt
        self.condition_on = condition_on
        self.max_predict_draws = max_predict_draws
        self.random_state = random_state

    def _config(self):
        return McmcConfig(n_iter=self.n_iter, burn_in=self.burn_in, thin=self.thin,
                          step_sigma2=self.step_sigma2, step_phi=self.step_phi, step_beta=self.step_beta,
                          seed=int(self.random_state), fix_phi=self.fix_phi, adapt=self.adapt)

    def _dataset(self, X, y):
        return GeoDataset.from_arrays(X[:, :2], y, X[:, 2:] if X.shape[1] > 2 else None)

    def _grid(self, X):
        X = _validate_X(X, self.n_features_in_)
        return PredictionGrid.from_locations(X[:, :2], X[:, 2:] if X.shape[1] > 2 else None)

    def _draws(self):
        return self.samples_.thinned(self.max_predict_draws)

    def predict_distribution(self, X):
        """:class:`~prefgeo.prediction.PredictiveField` of the response at ``X``."""
        check_is_fitted(self, "samples_")
        rng = derive_rng(self.random_state, "estimator-predict")
        return predict_response(self._draws(), self.data_, self._grid(X), rng, self.condition_on)

    def predict(self, X, return_std=False):
        field = self.predict_distribution(X)
        if return_std:
            return field.mean, field.draws.std(axis=0, ddof=1)
        return field.mean

    def predict_interval(self, X, level=0.95):
        return self.predict_distribution(X).interval(level)

    def posterior_summary(self, level=0.95):
        check_is_fitted(self, "samples_")
        return self.samples_.summary(level)


class PreferentialGeostatRegressor(_GeostatBase):
    """Geostatistical regression under preferential sampling, fitted by exact MCMC.

    Parameters
    ----------
    region : Region or (lower, upper), optional
        Study window.  Defaults to the bounding box of the training
        coordinates, which understates the window when data are clustered;
        pass it explicitly whenever it is known.
    priors : Priors, optional
    n_iter, burn_in, thin : int
    step_sigma2, step_phi, step_beta : float
        Initial random-walk scales.
    fix_phi : float, optional
        Hold the range parameter fixed.
    adapt : bool
        Tune proposal scales during burn-in.
    condition_on : {"all", "data"}
        Krige from the field at data and discarded points, or data only.
    max_predict_draws : int, optional
        Subsample posterior draws used for prediction.
    random_state : int
    """

    _preferential = True

    def __init__(self, region=None, priors=None, n_iter=20000, burn_in=5000, thin=15,
                 step_sigma2=0.3, step_phi=0.3, step_beta=0.3, fix_phi=None, adapt=True,
                 condition_on="all", max_predict_draws=None, random_state=0):
        super().__init__(priors=priors, n_iter=n_iter, burn_in=burn_in, thin=thin,
                         step_sigma2=step_sigma2, step_phi=step_phi, step_beta=step_beta,
                         fix_phi=fix_phi, adapt=adapt, condition_on=condition_on,
                         max_predict_draws=max_predict_draws, random_state=random_state)
        self.region = region

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        _validate_X(X)
        self.region_ = _region_from(self.region, X)
        if not np.all(self.region_.contains(X[:, :2])):
            raise ValueError("training locations fall outside the region")
        self.data_ = self._dataset(X, y)
        self.n_features_in_ = X.shape[1]
        self.samples_ = run_eps(self.data_, self.region_, self.priors or Priors(), self._config())
        return self

    def predict_intensity(self, X, return_draws=False):
        """Posterior mean of ``lambda* Phi(beta S(x) / sigma)`` at ``X``."""
        check_is_fitted(self, "samples_")
        rng = derive_rng(self.random_state, "estimator-intensity")
        _, field = predict(self._draws(), self.data_, self._grid(X), rng, self.condition_on)
        return field if return_draws else field.mean


class GeostatRegressor(_GeostatBase):
    """Standard Bayesian geostatistical regression that ignores the sampling design."""

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        _validate_X(X)
        self.data_ = self._dataset(X, y)
        self.n_features_in_ = X.shape[1]
        self.samples_ = run_nps(self.data_, self.priors or Priors(), self._config())
        return self


__all__ = ["PreferentialGeostatRegressor", "GeostatRegressor", "DEFAULT_LEVELS"]

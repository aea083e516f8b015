"""Stationary isotropic Gaussian-process machinery.

Correlation functions, covariance assembly, prior simulation and the
conditional (kriging) law of the field at new locations given its values at
known locations.  All factorizations go through :func:`robust_cholesky`,
which adds diagonal jitter ``eps * scale`` with ``eps`` escalating from
1e-8 to 1e-4.
"""
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.spatial.distance import cdist

JITTER_LADDER = (1e-8, 1e-7, 1e-6, 1e-5, 1e-4)


class FactorizationError(np.linalg.LinAlgError):
    """Raised when a covariance matrix stays non-PD after the full jitter ladder."""


class CorrelationFamily(str, Enum):
    EXPONENTIAL = "exponential"


@dataclass(frozen=True)
class CorrelationModel:
    phi: float
    family: CorrelationFamily = CorrelationFamily.EXPONENTIAL

    def __post_init__(self):
        if not self.phi > 0:
            raise ValueError(f"range parameter phi must be positive, got {self.phi}")
        object.__setattr__(self, "family", CorrelationFamily(self.family))

    def __call__(self, h):
        return _evaluate(np.asarray(h, dtype=float), self)


@dataclass(frozen=True)
class GpParams:
    sigma2: float
    corr: CorrelationModel

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")


@dataclass
class ConditionalGaussian:
    mean: np.ndarray
    covariance: np.ndarray


def _evaluate(h, model):
    if model.family is CorrelationFamily.EXPONENTIAL:
        return np.exp(-h / model.phi)
    raise NotImplementedError(model.family)


def correlation(h, model):
    h = np.asarray(h, dtype=float)
    if np.any(h < 0):
        raise ValueError("distances must be non-negative")
    out = _evaluate(h, model)
    return float(out) if out.ndim == 0 else out


def _as_locs(locations):
    locs = np.asarray(locations, dtype=float)
    if locs.size == 0:
        return locs.reshape(0, 2)
    return np.atleast_2d(locs)


def corr_matrix(locations, model):
    locs = _as_locs(locations)
    R = _evaluate(cdist(locs, locs), model)
    np.fill_diagonal(R, 1.0)
    return R


def cross_corr(a, b, model):
    return _evaluate(cdist(_as_locs(a), _as_locs(b)), model)


def robust_cholesky(A, scale=1.0):
    """Lower Cholesky factor of ``A + eps*scale*I`` for the first ``eps`` that works.

    ``A`` itself is tried first; jitter is only added when that fails.

    Returns ``(L, eps)``.
    """
    A = np.asarray(A, dtype=float)
    if A.shape[0] == 0:
        return np.zeros((0, 0)), 0.0
    eye = np.eye(A.shape[0])
    try:
        return np.linalg.cholesky(A), 0.0
    except np.linalg.LinAlgError:
        pass
    for eps in JITTER_LADDER:
        try:
            return np.linalg.cholesky(A + eps * scale * eye), eps
        except np.linalg.LinAlgError:
            continue
    raise FactorizationError(
        f"matrix of size {A.shape[0]} not positive definite after jitter {JITTER_LADDER[-1]:g}"
    )


class CorrFactor:
    """Cholesky factor of a correlation matrix with cached derived quantities."""

    def __init__(self, locations, model):
        self.locations = _as_locs(locations)
        self.model = model
        self.R = corr_matrix(self.locations, model)
        self.L, self.jitter = robust_cholesky(self.R)
        self.logdet = 2.0 * float(np.sum(np.log(np.diag(self.L)))) if len(self.R) else 0.0

    def __len__(self):
        return self.R.shape[0]

    def solve(self, b):
        return cho_solve((self.L, True), b)

    def half_solve(self, b):
        """``L^{-1} b``."""
        return solve_triangular(self.L, b, lower=True, check_finite=False)

    def quad(self, v):
        """``v' R^{-1} v``."""
        w = self.half_solve(v)
        return float(w @ w)

    def inverse(self):
        return self.solve(np.eye(len(self)))


def gp_draw(locations, params, rng):
    """One draw of the zero-mean field at ``locations``."""
    locs = _as_locs(locations)
    if len(locs) == 0:
        raise ValueError("gp_draw needs at least one location")
    C = params.sigma2 * corr_matrix(locs, params.corr)
    L, _ = robust_cholesky(C, scale=params.sigma2)
    return L @ rng.standard_normal(len(locs))


def _kriging_pieces(targets, known_locs, known_S, params, factor=None):
    if factor is None:
        factor = CorrFactor(known_locs, params.corr)
    R12 = cross_corr(targets, factor.locations, params.corr)
    A = factor.half_solve(R12.T)  # L^{-1} R21
    w = factor.half_solve(np.asarray(known_S, dtype=float))
    return A, w


def conditional(targets, known_locs, known_S, params, factor=None):
    """Gaussian law of the field at ``targets`` given its values at ``known_locs``.

    ``factor`` may carry a precomputed :class:`CorrFactor` of the known locations.
    """
    targets = _as_locs(targets)
    known_locs = _as_locs(known_locs)
    if len(known_locs) == 0:
        raise ValueError("need at least one known location")
    if len(known_locs) != len(known_S):
        raise ValueError("known_locs and known_S differ in length")
    A, w = _kriging_pieces(targets, known_locs, known_S, params, factor)
    mean = A.T @ w
    cov = params.sigma2 * (corr_matrix(targets, params.corr) - A.T @ A)
    cov = 0.5 * (cov + cov.T)
    return ConditionalGaussian(mean=mean, covariance=cov)


def conditional_marginals(targets, known_locs, known_S, params, factor=None):
    """Pointwise conditional means and variances (no target-target covariance)."""
    targets = _as_locs(targets)
    A, w = _kriging_pieces(targets, known_locs, known_S, params, factor)
    var = params.sigma2 * (1.0 - np.einsum("ij,ij->j", A, A))
    return A.T @ w, np.maximum(var, 0.0)


def conditional_draw(targets, known_locs, known_S, params, rng, factor=None):
    """Joint draw of the field at ``targets`` given its values at ``known_locs``."""
    targets = _as_locs(targets)
    if len(targets) == 0:
        return np.zeros(0)
    cond = conditional(targets, known_locs, known_S, params, factor)
    L, _ = robust_cholesky(cond.covariance, scale=params.sigma2)
    return cond.mean + L @ rng.standard_normal(len(targets))

"""Skew-normal kernel ``N(s; mu, Sigma) * prod_i Phi(g_i s_i)`` and its Gibbs sampler.

The sampler augments each probit factor with a latent ``u_i ~ N(g_i s_i, 1)``
restricted to ``u_i > 0``.  Given ``u`` the field is Gaussian with precision
``Sigma^{-1} + diag(g^2)`` and linear term ``Sigma^{-1} mu + g * u``; given
``s`` the ``u_i`` are independent truncated normals.  Alternating the two
leaves the kernel invariant.

Everything is held in precision form so ``Sigma`` itself is never inverted
inside the MCMC.
"""
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import log_ndtr, ndtr, ndtri

from .gp import robust_cholesky

LOG_2PI = np.log(2.0 * np.pi)


def _cholesky(A):
    return robust_cholesky(A)[0]

# Above this standardized lower bound the inversion loses precision.
_INVERSION_LIMIT = 6.0


@dataclass
class SkewNormalSpec:
    """Skew-normal kernel in precision form.

    Attributes
    ----------
    precision : (k, k) ndarray
        ``Sigma*^{-1}``.
    linear : (k,) ndarray
        ``Sigma*^{-1} mu*``.
    g : (k,) ndarray
        Diagonal of the skewing matrix ``G``.
    """

    precision: np.ndarray
    linear: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        self.precision = np.atleast_2d(np.asarray(self.precision, dtype=float))
        self.linear = np.atleast_1d(np.asarray(self.linear, dtype=float))
        self.g = np.broadcast_to(np.asarray(self.g, dtype=float), self.linear.shape).copy()
        k = len(self.linear)
        if self.precision.shape != (k, k):
            raise ValueError(f"precision shape {self.precision.shape} does not match k={k}")

    @classmethod
    def from_moments(cls, mu_star, sigma_star, g):
        sigma_star = np.atleast_2d(np.asarray(sigma_star, dtype=float))
        L = _cholesky(sigma_star)
        precision = cho_solve((L, True), np.eye(len(sigma_star)))
        return cls(precision, precision @ np.atleast_1d(mu_star), g)

    @property
    def k(self):
        return len(self.linear)

    @property
    def sigma_star(self):
        return np.linalg.inv(self.precision)

    @property
    def mu_star(self):
        return np.linalg.solve(self.precision, self.linear)


def sn_log_kernel(s, spec):
    """Log of the unnormalized skew-normal kernel at ``s``.

    The Gaussian part is normalized; only the probit product is unnormalized,
    so with ``g = 0`` the value is the Gaussian log-density plus ``k log(1/2)``.
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if s.shape != spec.linear.shape:
        raise ValueError("dimension of s does not match spec")
    L = _cholesky(spec.precision)
    mu = cho_solve((L, True), spec.linear)
    r = L.T @ (s - mu)
    log_det_prec = 2.0 * np.sum(np.log(np.diag(L)))
    log_gauss = -0.5 * (spec.k * LOG_2PI - log_det_prec + r @ r)
    return float(log_gauss + np.sum(log_ndtr(spec.g * s)))


def _exp_tail(a, rng):
    """Standard normal truncated to ``(a, inf)`` for large ``a`` (Robert 1995)."""
    alpha = 0.5 * (a + np.sqrt(a * a + 4.0))
    out = np.empty_like(a)
    todo = np.arange(len(a))
    while todo.size:
        z = a[todo] + rng.exponential(1.0 / alpha[todo])
        ok = rng.random(todo.size) <= np.exp(-0.5 * (z - alpha[todo]) ** 2)
        out[todo[ok]] = z[ok]
        todo = todo[~ok]
    return out


def truncnorm_positive(mean, rng):
    """Draw ``N(mean, 1)`` restricted to ``(0, inf)``, elementwise."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    a = -mean  # standardized lower bound
    z = np.empty_like(mean)
    inv = a <= _INVERSION_LIMIT
    if np.any(inv):
        # -Z is N(0,1) truncated above at -a
        u = rng.random(int(inv.sum()))
        z[inv] = -ndtri(u * ndtr(-a[inv]))
    tail = ~inv
    if np.any(tail):
        z[tail] = _exp_tail(a[tail], rng)
    out = mean + z
    # rounding at the boundary can give exactly 0; redraw those (probability ~1e-16)
    bad = out <= 0
    if np.any(bad):
        out[bad] = truncnorm_positive(mean[bad], rng)
    return out


def gaussian_from_precision(precision, linear, rng):
    """Draw from ``N(P^{-1} b, P^{-1})`` given precision ``P`` and linear term ``b``."""
    L = _cholesky(precision)
    mean = cho_solve((L, True), linear)
    z = rng.standard_normal(len(linear))
    return mean + solve_triangular(L.T, z, lower=False, check_finite=False)


def sn_gibbs_step(current_s, spec, rng):
    """One two-block data-augmentation sweep targeting the skew-normal kernel."""
    s = np.atleast_1d(np.asarray(current_s, dtype=float))
    if s.shape != spec.linear.shape:
        raise ValueError("dimension of current_s does not match spec")
    g = spec.g
    if not np.any(g):
        return gaussian_from_precision(spec.precision, spec.linear, rng)
    u = truncnorm_positive(g * s, rng)
    precision = spec.precision + np.diag(g * g)
    return gaussian_from_precision(precision, spec.linear + g * u, rng)

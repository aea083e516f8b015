"""Whole-sampler correctness check by successive-conditional simulation.

Each round regenerates the point pattern, field and responses from the
current parameters (a draw from the model given ``theta``) and then applies
one sweep of the EPS transition kernel.  If every step leaves its full
conditional invariant, the parameter sequence is stationary at the prior,
so marginal quantiles of the trace must match the prior's.
"""
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.special import ndtr

from .dataset import GeoDataset
from .gp import CorrelationModel, GpParams, gp_draw
from .inference import (
    ChainState,
    McmcConfig,
    Priors,
    step_beta,
    step_discarded,
    step_eta_tau2,
    step_lambda_star,
    step_phi,
    step_S_k,
    step_sigma2,
)
from .region import UNIT_SQUARE

GEWEKE_PRIORS = Priors(lambda_shape=6.0, lambda_rate=0.5, lambda_upper=30.0, eta_mean=(0.0,), eta_var=1.0,
                       tau2_shape=5.0, tau2_scale=2.0, sigma2_shape=5.0, sigma2_scale=4.0,
                       phi_shape=4.0, phi_rate=10.0, beta_mean=0.0, beta_var=1.0)


@dataclass
class GewekeResult:
    trace: dict
    max_deviation: dict
    probabilities: np.ndarray


def prior_marginals(priors):
    """Frozen scipy laws (or CDF callables) of the scalar parameters under ``priors``."""
    lam = stats.gamma(priors.lambda_shape, scale=1.0 / priors.lambda_rate)
    if priors.lambda_upper is None:
        lam_cdf = lam.cdf
    else:
        top = lam.cdf(priors.lambda_upper)
        lam_cdf = lambda x: np.minimum(lam.cdf(x) / top, 1.0)  # noqa: E731
    return {
        "mu": stats.norm(priors.eta_mean[0], np.sqrt(priors.eta_var)).cdf,
        "tau2": stats.invgamma(priors.tau2_shape, scale=priors.tau2_scale).cdf,
        "sigma2": stats.invgamma(priors.sigma2_shape, scale=priors.sigma2_scale).cdf,
        "beta": stats.norm(priors.beta_mean, np.sqrt(priors.beta_var)).cdf,
        "lambda_star": lam_cdf,
        "phi": stats.gamma(priors.phi_shape, scale=1.0 / priors.phi_rate).cdf,
    }


def _prior_draw(priors, rng, fix_phi):
    while True:
        lam = rng.gamma(priors.lambda_shape, 1.0 / priors.lambda_rate)
        if priors.lambda_upper is None or lam <= priors.lambda_upper:
            break
    return {
        "lambda_star": float(lam),
        "eta": np.array([rng.normal(priors.eta_mean[0], np.sqrt(priors.eta_var))]),
        "tau2": priors.tau2_scale / rng.gamma(priors.tau2_shape),
        "sigma2": priors.sigma2_scale / rng.gamma(priors.sigma2_shape),
        "beta": rng.normal(priors.beta_mean, np.sqrt(priors.beta_var)),
        "phi": fix_phi if fix_phi is not None else rng.gamma(priors.phi_shape, 1.0 / priors.phi_rate),
    }


def _simulate_given(theta, region, rng):
    """Model draw of (data, latent state) given parameters, intercept-only mean."""
    k = rng.poisson(theta["lambda_star"] * region.area)
    w = region.lower + rng.random((k, 2)) * (np.asarray(region.upper) - region.lower)
    s = gp_draw(w, GpParams(theta["sigma2"], CorrelationModel(theta["phi"])), rng) if k else np.zeros(0)
    z = rng.random(k) < ndtr(theta["beta"] * s / np.sqrt(theta["sigma2"]))
    y = theta["eta"][0] + s[z] + np.sqrt(theta["tau2"]) * rng.standard_normal(int(z.sum()))
    data = GeoDataset.from_arrays(w[z], y)
    state = ChainState(lambda_star=theta["lambda_star"], eta=theta["eta"].copy(), tau2=theta["tau2"],
                       sigma2=theta["sigma2"], phi=theta["phi"], beta=theta["beta"],
                       locs=np.vstack([w[z], w[~z]]), s=np.concatenate([s[z], s[~z]]), n=int(z.sum()))
    return data, state


def geweke_test(n_rounds, rng, priors=GEWEKE_PRIORS, fix_phi=0.3, region=UNIT_SQUARE,
                scales=(0.5, 0.5, 0.8)):
    """Run ``n_rounds`` of simulate-then-sweep and compare traces with the prior.

    The deviation for each parameter is ``max_p |F_prior(q_p) - p|`` over
    ``p = 0.01, ..., 0.99``, with ``q_p`` the empirical quantile of the trace.
    Proper priors are required; ``lambda_upper`` keeps the patterns small.
    ``scales`` are the fixed proposal scales for ``sigma2``, ``phi`` and ``beta``.
    """
    config = McmcConfig(n_iter=2, burn_in=0, thin=1, adapt=False, fix_phi=fix_phi,
                        step_sigma2=scales[0], step_phi=scales[1], step_beta=scales[2])
    theta = _prior_draw(priors, rng, fix_phi)
    names = ["mu", "tau2", "sigma2", "beta", "lambda_star"] + ([] if fix_phi is not None else ["phi"])
    trace = {name: np.empty(n_rounds) for name in names}
    for r in range(n_rounds):
        data, st = _simulate_given(theta, region, rng)
        step_lambda_star(st, priors, region, rng)
        step_discarded(st, data, region, rng)
        step_S_k(st, data, rng)
        step_eta_tau2(st, data, priors, rng)
        step_sigma2(st, priors, config, rng)
        step_phi(st, priors, config, rng)
        step_beta(st, priors, config, rng)
        theta = {"lambda_star": st.lambda_star, "eta": st.eta.copy(), "tau2": st.tau2,
                 "sigma2": st.sigma2, "beta": st.beta, "phi": st.phi}
        for name in names:
            trace[name][r] = st.eta[0] if name == "mu" else theta[name]
    probs = np.linspace(0.01, 0.99, 99)
    cdfs = prior_marginals(priors)
    dev = {name: float(np.max(np.abs(cdfs[name](np.quantile(v, probs)) - probs))) for name, v in trace.items()}
    return GewekeResult(trace, dev, probs)

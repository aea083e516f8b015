"""MCMC for the preferential-sampling model (EPS) and the non-preferential baseline (NPS).

One EPS iteration updates, in order: the dominating intensity ``lambda*``,
the discarded process, the latent field at all ``k`` points, the regression
coefficients and nugget, then ``sigma2``, ``phi`` and ``beta`` by
Metropolis-Hastings.  The update functions mutate the :class:`ChainState`
they receive and return the new value.
"""
from dataclasses import dataclass, field, fields, replace

import numpy as np
from scipy.special import log_ndtr

from ._rng import derive_rng
from .gp import CorrelationModel, CorrFactor, FactorizationError
from .point_process import update_discarded
from .skew_normal import SkewNormalSpec, gaussian_from_precision, sn_gibbs_step


class ConfigurationError(ValueError):
    pass


class SamplerError(RuntimeError):
    """A sampler step failed; carries the iteration and a state snapshot."""

    def __init__(self, message, iteration=None, state=None):
        super().__init__(message)
        self.iteration = iteration
        self.state = state


@dataclass(frozen=True)
class Priors:
    """Prior hyperparameters.  Defaults are the vague priors of the simulation study.

    ``lambda*`` is Gamma(shape, rate) optionally truncated to ``(0, lambda_upper]``;
    ``eta`` is N(eta_mean, eta_var I); ``tau2`` and ``sigma2`` are inverse-gamma
    (shape, scale); ``phi`` is Gamma(shape, rate); ``beta`` is N(beta_mean, beta_var).
    """

    lambda_shape: float = 0.001
    lambda_rate: float = 0.001
    lambda_upper: float = None
    eta_mean: tuple = (0.0,)
    eta_var: float = 1e6
    tau2_shape: float = 0.001
    tau2_scale: float = 0.001
    sigma2_shape: float = 0.001
    sigma2_scale: float = 0.001
    phi_shape: float = 2.0
    phi_rate: float = 4.0
    beta_mean: float = 0.0
    beta_var: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "eta_mean", tuple(float(v) for v in np.atleast_1d(self.eta_mean)))
        positive = ("lambda_shape", "lambda_rate", "eta_var", "tau2_shape", "tau2_scale",
                    "sigma2_shape", "sigma2_scale", "phi_shape", "phi_rate", "beta_var")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"prior hyperparameter {name} must be positive")
        if self.lambda_upper is not None and not self.lambda_upper > 0:
            raise ConfigurationError("lambda_upper must be positive when set")

    def eta_mean_vector(self, n_coef):
        m = np.asarray(self.eta_mean, dtype=float)
        if m.size == 1:
            return np.full(n_coef, m[0])
        if m.size != n_coef:
            raise ConfigurationError(f"eta_mean has {m.size} entries, model has {n_coef} coefficients")
        return m

    @property
    def phi_mean(self):
        return self.phi_shape / self.phi_rate


@dataclass(frozen=True)
class McmcConfig:
    """Chain length, thinning and proposal settings.

    Proposal scales are standard deviations: on the log scale for ``sigma2``
    and ``phi``, on the natural scale for ``beta``.  With ``adapt`` the scales
    follow a Robbins-Monro recursion towards ``target_accept`` during burn-in
    only.
    """

    n_iter: int = 20000
    burn_in: int = 5000
    thin: int = 15
    step_sigma2: float = 0.3
    step_phi: float = 0.3
    step_beta: float = 0.3
    seed: int = 0
    fix_phi: float = None
    fix_beta: float = None
    adapt: bool = True
    target_accept: float = 0.44
    store_discarded: bool = True

    def __post_init__(self):
        for name in ("n_iter", "thin"):
            if int(getattr(self, name)) < 1:
                raise ConfigurationError(f"{name} must be a positive integer")
        if int(self.burn_in) < 0 or int(self.burn_in) >= int(self.n_iter):
            raise ConfigurationError("burn_in must satisfy 0 <= burn_in < n_iter")
        for name in ("step_sigma2", "step_phi", "step_beta"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.fix_phi is not None and not self.fix_phi > 0:
            raise ConfigurationError("fix_phi must be positive")

    @property
    def n_draws(self):
        return (self.n_iter - self.burn_in) // self.thin


@dataclass
class ChainState:
    """Current values of all unknowns.

    ``locs``/``s`` hold the ``k`` points of the dominating process, data
    locations first.  The correlation factor of ``locs`` at ``phi`` is cached
    and invalidated by :meth:`set_points` and :meth:`set_phi`.
    """

    lambda_star: float
    eta: np.ndarray
    tau2: float
    sigma2: float
    phi: float
    beta: float
    locs: np.ndarray
    s: np.ndarray
    n: int
    _factor: CorrFactor = field(default=None, repr=False, compare=False)

    @property
    def k(self):
        return len(self.s)

    @property
    def sigma(self):
        return float(np.sqrt(self.sigma2))

    @property
    def s_data(self):
        return self.s[: self.n]

    @property
    def discarded_locs(self):
        return self.locs[self.n:]

    @property
    def discarded_s(self):
        return self.s[self.n:]

    @property
    def signs(self):
        """+1 on data slots, -1 on discarded slots."""
        out = -np.ones(self.k)
        out[: self.n] = 1.0
        return out

    def factor(self):
        if self._factor is None:
            self._factor = CorrFactor(self.locs, CorrelationModel(self.phi))
        return self._factor

    def set_points(self, locs, s):
        self.locs = np.asarray(locs, dtype=float).reshape(-1, 2)
        self.s = np.asarray(s, dtype=float)
        self._factor = None

    def set_phi(self, phi, factor=None):
        self.phi = float(phi)
        self._factor = factor

    def copy(self):
        return replace(self, eta=self.eta.copy(), locs=self.locs.copy(), s=self.s.copy())

    def validate(self):
        for name in ("lambda_star", "tau2", "sigma2", "phi"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise SamplerError(f"{name} left the positive reals: {v}", state=self.copy())
        if self.k < self.n or len(self.locs) != self.k:
            raise SamplerError("dimension invariant broken", state=self.copy())
        if not np.all(np.isfinite(self.s)) or not np.all(np.isfinite(self.eta)):
            raise SamplerError("non-finite latent values", state=self.copy())


@dataclass
class PosteriorSamples:
    """Retained draws.  ``lambda_star``, ``beta``, ``k`` and the discarded-point
    records are ``None`` for the non-preferential model."""

    model: str
    iteration: np.ndarray
    eta: np.ndarray
    tau2: np.ndarray
    sigma2: np.ndarray
    phi: np.ndarray
    s_data: np.ndarray
    lambda_star: np.ndarray = None
    beta: np.ndarray = None
    k: np.ndarray = None
    discarded_locs: list = None
    discarded_s: list = None
    acceptance: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.iteration)

    @property
    def mu(self):
        return self.eta[:, 0]

    @property
    def is_preferential(self):
        return self.model == "eps"

    def parameter_table(self):
        """Ordered mapping of scalar parameter traces."""
        out = {}
        if self.lambda_star is not None:
            out["lambda_star"] = self.lambda_star
        for j in range(self.eta.shape[1]):
            out[f"eta{j}"] = self.eta[:, j]
        out["tau2"] = self.tau2
        out["sigma2"] = self.sigma2
        out["phi"] = self.phi
        if self.beta is not None:
            out["beta"] = self.beta
        if self.k is not None:
            out["k"] = self.k
        return out

    def summary(self, level=0.95):
        lo, hi = (1 - level) / 2, (1 + level) / 2
        return {
            name: {
                "mean": float(np.mean(v)),
                "median": float(np.median(v)),
                "sd": float(np.std(v, ddof=1)) if len(v) > 1 else 0.0,
                "lower": float(np.quantile(v, lo)),
                "upper": float(np.quantile(v, hi)),
            }
            for name, v in self.parameter_table().items()
        }

    def thinned(self, max_draws):
        """Every j-th draw so that at most ``max_draws`` remain."""
        if max_draws is None or len(self) <= max_draws:
            return self
        idx = np.linspace(0, len(self) - 1, max_draws).round().astype(int)
        return self.take(idx)

    def take(self, idx):
        def pick(v):
            if v is None:
                return None
            if isinstance(v, list):
                return [v[i] for i in idx]
            return v[idx]

        kw = {f.name: pick(getattr(self, f.name)) for f in fields(self) if f.name not in ("model", "acceptance")}
        return PosteriorSamples(model=self.model, acceptance=dict(self.acceptance), **kw)


# ---------------------------------------------------------------------------
# small distribution helpers

def _inv_gamma(shape, scale, rng):
    return scale / rng.gamma(shape)


def _normal_logpdf(x, mean, var):
    return -0.5 * (np.log(2 * np.pi * var) + (x - mean) ** 2 / var)


def _probit_loglik(s, signs, beta, sigma):
    """``sum_i log Phi(sign_i * beta * s_i / sigma)``."""
    return float(np.sum(log_ndtr(signs * beta * s / sigma)))


# ---------------------------------------------------------------------------
# acceptance ratios, implemented as printed

def log_p_sigma(sigma2_p, sigma2_c, s, signs, beta, quad, priors):
    """Log acceptance ratio of the log-normal random walk on ``sigma2``.

    ``quad`` is ``S' R^{-1} S``.  The power ``-k/2 - a`` is the target's
    ``-k/2 - a - 1`` plus one from the proposal Jacobian ``sigma2_p / sigma2_c``.
    """
    k = len(s)
    out = _probit_loglik(s, signs, beta, np.sqrt(sigma2_p)) - _probit_loglik(s, signs, beta, np.sqrt(sigma2_c))
    out += (-0.5 * k - priors.sigma2_shape) * (np.log(sigma2_p) - np.log(sigma2_c))
    out -= (0.5 * quad + priors.sigma2_scale) * (1.0 / sigma2_p - 1.0 / sigma2_c)
    return float(out)


def log_p_phi(phi_p, phi_c, logdet_p, logdet_c, quad_p, quad_c, sigma2, priors):
    """Log acceptance ratio of the log-normal random walk on ``phi``.

    The power ``a_phi`` is the Gamma prior's ``a_phi - 1`` plus the Jacobian.
    """
    return float(
        -0.5 * (logdet_p - logdet_c)
        + priors.phi_shape * np.log(phi_p / phi_c)
        - (quad_p - quad_c) / (2.0 * sigma2)
        - priors.phi_rate * (phi_p - phi_c)
    )


def log_p_beta(beta_p, beta_c, s, signs, sigma, priors):
    return float(
        _probit_loglik(s, signs, beta_p, sigma)
        - _probit_loglik(s, signs, beta_c, sigma)
        + _normal_logpdf(beta_p, priors.beta_mean, priors.beta_var)
        - _normal_logpdf(beta_c, priors.beta_mean, priors.beta_var)
    )


def _accept(log_ratio, rng):
    return np.log(rng.random()) < min(0.0, log_ratio)


# ---------------------------------------------------------------------------
# full-conditional updates

def step_lambda_star(state, priors, region, rng, max_tries=10_000):
    shape = priors.lambda_shape + state.k
    rate = priors.lambda_rate + region.area
    for _ in range(max_tries):
        value = rng.gamma(shape, 1.0 / rate)
        if priors.lambda_upper is None or value <= priors.lambda_upper:
            state.lambda_star = float(value)
            return state.lambda_star
    raise ConfigurationError(
        f"lambda* truncation bound {priors.lambda_upper} rejected {max_tries} draws from "
        f"Gamma({shape:g}, {rate:g})"
    )


def step_discarded(state, data, region, rng):
    locs, s = update_discarded(state, data.locations, region, rng, factor=state.factor())
    state.set_points(np.vstack([data.locations, locs]), np.concatenate([state.s_data, s]))
    return locs, s


def skew_normal_spec(state, data):
    """Full conditional of the field at all ``k`` points, in precision form."""
    n = state.n
    precision = state.factor().inverse() / state.sigma2
    precision[np.arange(n), np.arange(n)] += 1.0 / state.tau2
    linear = np.zeros(state.k)
    linear[:n] = (data.y - data.design @ state.eta) / state.tau2
    g = (state.beta / state.sigma) * state.signs
    return SkewNormalSpec(precision, linear, g)


def step_S_k(state, data, rng):
    state.s = sn_gibbs_step(state.s, skew_normal_spec(state, data), rng)
    return state.s


def eta_conditional(state, data, priors):
    """Precision and linear term of the Gaussian full conditional of ``eta``.

    The covariance is the inverse of ``D'D / tau2 + I / eta_var``.
    """
    D = data.design
    prior_mean = priors.eta_mean_vector(D.shape[1])
    precision = D.T @ D / state.tau2 + np.eye(D.shape[1]) / priors.eta_var
    linear = D.T @ (data.y - state.s_data) / state.tau2 + prior_mean / priors.eta_var
    return precision, linear


def step_eta_tau2(state, data, priors, rng):
    state.eta = gaussian_from_precision(*eta_conditional(state, data, priors), rng)
    r = data.y - state.s_data - data.design @ state.eta
    state.tau2 = float(_inv_gamma(0.5 * data.n + priors.tau2_shape, 0.5 * r @ r + priors.tau2_scale, rng))
    return state.eta, state.tau2


def step_sigma2(state, priors, config, rng, step=None, preferential=True):
    step = config.step_sigma2 if step is None else step
    current = state.sigma2
    proposal = float(np.exp(np.log(current) + step * rng.standard_normal()))
    beta = state.beta if preferential else 0.0
    quad = state.factor().quad(state.s)
    log_ratio = log_p_sigma(proposal, current, state.s, state.signs, beta, quad, priors)
    accepted = _accept(log_ratio, rng)
    if accepted:
        state.sigma2 = proposal
    return state.sigma2, accepted


def step_phi(state, priors, config, rng, step=None):
    if config.fix_phi is not None:
        return state.phi, False
    step = config.step_phi if step is None else step
    current = state.factor()
    proposal = float(np.exp(np.log(state.phi) + step * rng.standard_normal()))
    try:
        proposed = CorrFactor(state.locs, CorrelationModel(proposal))
    except FactorizationError:
        return state.phi, False
    log_ratio = log_p_phi(proposal, state.phi, proposed.logdet, current.logdet,
                          proposed.quad(state.s), current.quad(state.s), state.sigma2, priors)
    accepted = _accept(log_ratio, rng)
    if accepted:
        state.set_phi(proposal, proposed)
    return state.phi, accepted


def step_beta(state, priors, config, rng, step=None):
    if config.fix_beta is not None:
        state.beta = float(config.fix_beta)
        return state.beta, False
    step = config.step_beta if step is None else step
    proposal = state.beta + step * rng.standard_normal()
    log_ratio = log_p_beta(proposal, state.beta, state.s, state.signs, state.sigma, priors)
    accepted = _accept(log_ratio, rng)
    if accepted:
        state.beta = float(proposal)
    return state.beta, accepted


# ---------------------------------------------------------------------------
# chains

def initial_state(data, region, priors, config, rng, preferential=True):
    n = data.n
    D = data.design
    if n >= D.shape[1]:
        eta, *_ = np.linalg.lstsq(D, data.y, rcond=None)
        resid = data.y - D @ eta
        var = float(np.var(resid)) if n > 1 else 1.0
    else:
        eta = priors.eta_mean_vector(D.shape[1])
        var = 1.0
    var = var if var > 0 else 1.0
    phi = config.fix_phi if config.fix_phi is not None else priors.phi_mean
    lam = max(2 * n, 1) / region.area if region is not None else 1.0
    if priors.lambda_upper is not None:
        lam = min(lam, 0.5 * priors.lambda_upper)
    beta = 0.0 if config.fix_beta is None else float(config.fix_beta)
    state = ChainState(lambda_star=lam, eta=np.asarray(eta, dtype=float), tau2=0.5 * var,
                       sigma2=0.5 * var, phi=float(phi), beta=beta,
                       locs=data.locations.copy(), s=np.zeros(n), n=n)
    if preferential:
        step_discarded(state, data, region, rng)
    return state


class _Adapter:
    """Robbins-Monro tuning of log proposal scales, frozen after burn-in."""

    def __init__(self, config):
        self.enabled = config.adapt
        self.burn_in = config.burn_in
        self.target = config.target_accept
        self.log_scale = {
            "sigma2": np.log(config.step_sigma2),
            "phi": np.log(config.step_phi),
            "beta": np.log(config.step_beta),
        }

    def scale(self, name):
        return float(np.exp(self.log_scale[name]))

    def update(self, name, accepted, t):
        if self.enabled and t <= self.burn_in:
            gain = t ** -0.6
            self.log_scale[name] = float(np.clip(self.log_scale[name] + gain * (accepted - self.target), -10, 3))


def _run(data, region, priors, config, preferential, chain):
    if data.n == 0 and not preferential:
        raise ConfigurationError("the non-preferential model needs at least one observation")
    label = "eps" if preferential else "nps"
    rng = derive_rng(config.seed, label, chain)
    state = initial_state(data, region, priors, config, rng, preferential)
    adapter = _Adapter(config)
    mh_names = ["sigma2", "phi"] + (["beta"] if preferential else [])
    tries = dict.fromkeys(mh_names, 0)
    accepts = dict.fromkeys(mh_names, 0)

    m = config.n_draws
    rec = {
        "iteration": np.zeros(m, dtype=int),
        "eta": np.zeros((m, data.n_coef)),
        "tau2": np.zeros(m),
        "sigma2": np.zeros(m),
        "phi": np.zeros(m),
        "s_data": np.zeros((m, data.n)),
    }
    if preferential:
        rec.update(lambda_star=np.zeros(m), beta=np.zeros(m), k=np.zeros(m, dtype=int))
        if config.store_discarded:
            rec.update(discarded_locs=[], discarded_s=[])

    j = 0
    for t in range(1, config.n_iter + 1):
        try:
            if preferential:
                step_lambda_star(state, priors, region, rng)
                step_discarded(state, data, region, rng)
            step_S_k(state, data, rng) if preferential else _step_s_gaussian(state, data, rng)
            step_eta_tau2(state, data, priors, rng)
            flags = {"sigma2": step_sigma2(state, priors, config, rng, adapter.scale("sigma2"), preferential)[1]}
            if config.fix_phi is None:
                flags["phi"] = step_phi(state, priors, config, rng, adapter.scale("phi"))[1]
            if preferential:
                if config.fix_beta is None:
                    flags["beta"] = step_beta(state, priors, config, rng, adapter.scale("beta"))[1]
                else:
                    step_beta(state, priors, config, rng)
            state.validate()
        except SamplerError as exc:
            exc.iteration = t
            raise
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise SamplerError(f"{label} iteration {t}: {exc}", iteration=t, state=state.copy()) from exc

        for name, ok in flags.items():
            adapter.update(name, ok, t)
            if t > config.burn_in or config.burn_in == 0:
                tries[name] += 1
                accepts[name] += ok

        if t > config.burn_in and (t - config.burn_in) % config.thin == 0 and j < m:
            rec["iteration"][j] = t
            rec["eta"][j] = state.eta
            rec["tau2"][j] = state.tau2
            rec["sigma2"][j] = state.sigma2
            rec["phi"][j] = state.phi
            rec["s_data"][j] = state.s_data
            if preferential:
                rec["lambda_star"][j] = state.lambda_star
                rec["beta"][j] = state.beta
                rec["k"][j] = state.k
                if config.store_discarded:
                    rec["discarded_locs"].append(state.discarded_locs.copy())
                    rec["discarded_s"].append(state.discarded_s.copy())
            j += 1

    acceptance = {name: accepts[name] / tries[name] for name in mh_names if tries[name]}
    acceptance.update({f"step_{name}": adapter.scale(name) for name in mh_names})
    return PosteriorSamples(model=label, acceptance=acceptance, **rec)


def _step_s_gaussian(state, data, rng):
    """Field update at the data locations without point-process terms."""
    precision = state.factor().inverse() / state.sigma2
    precision[np.diag_indices(state.n)] += 1.0 / state.tau2
    linear = (data.y - data.design @ state.eta) / state.tau2
    state.s = gaussian_from_precision(precision, linear, rng)
    return state.s


def run_eps(data, region, priors=None, config=None, chain=0):
    """Run the exact preferential-sampling sampler and return retained draws."""
    return _run(data, region, priors or Priors(), config or McmcConfig(), True, chain)


def run_nps(data, priors=None, config=None, region=None, chain=0):
    """Run the non-preferential geostatistical sampler."""
    return _run(data, region, priors or Priors(), config or McmcConfig(), False, chain)

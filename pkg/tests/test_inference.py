import numpy as np
import pytest
from scipy import stats
from scipy.special import log_ndtr

import prefgeo.inference as inf
from oracles import kolmogorov_distance, sn_quadrature_cdfs
from prefgeo.dataset import GeoDataset
from prefgeo.diagnostics import geweke_test
from prefgeo.gp import CorrelationModel, CorrFactor
from prefgeo.inference import (
    ChainState,
    ConfigurationError,
    McmcConfig,
    Priors,
    SamplerError,
    eta_conditional,
    log_p_beta,
    log_p_phi,
    log_p_sigma,
    run_eps,
    run_nps,
    step_beta,
    step_eta_tau2,
    step_lambda_star,
    step_phi,
    step_S_k,
    step_sigma2,
)
from prefgeo.region import UNIT_SQUARE
from prefgeo.simulation import TrueParams, simulate_ps


def make_state(n, k, rng, beta=0.0, sigma2=1.0, tau2=0.5, phi=0.15, s=None):
    locs = rng.random((k, 2))
    s = rng.normal(size=k) if s is None else np.asarray(s, float)
    return ChainState(lambda_star=100.0, eta=np.array([1.0]), tau2=tau2, sigma2=sigma2, phi=phi,
                      beta=beta, locs=locs, s=s, n=n)


def make_data(state, rng, y=None):
    y = rng.normal(size=state.n) if y is None else y
    return GeoDataset.from_arrays(state.locs[: state.n], y)


def ecdf_vs_grid(draws, grid, density):
    """Kolmogorov distance of draws against a 1-d density tabulated on a uniform grid."""
    w = density / density.sum()
    return kolmogorov_distance(draws, grid, np.cumsum(w))


def run_mh(step, state, n_iter, thin=5):
    out = []
    for t in range(n_iter):
        step(state)
        if t % thin == 0:
            out.append(step.value(state))
    return np.array(out)


# ---------------------------------------------------------------------------
# configuration objects

def test_priors_validation():
    with pytest.raises(ConfigurationError):
        Priors(tau2_shape=0.0)
    with pytest.raises(ConfigurationError):
        Priors(lambda_upper=-1.0)
    assert Priors().eta_mean_vector(3).tolist() == [0.0, 0.0, 0.0]
    with pytest.raises(ConfigurationError):
        Priors(eta_mean=(1.0, 2.0)).eta_mean_vector(3)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        McmcConfig(n_iter=10, burn_in=10)
    with pytest.raises(ConfigurationError):
        McmcConfig(thin=0)
    with pytest.raises(ConfigurationError):
        McmcConfig(step_beta=0.0)
    with pytest.raises(ConfigurationError):
        McmcConfig(fix_phi=-1.0)
    assert McmcConfig().n_draws == 1000


# ---------------------------------------------------------------------------
# conjugate steps

def test_lambda_star_ks(rng):
    st = make_state(20, 58, rng)
    draws = np.array([step_lambda_star(st, Priors(), UNIT_SQUARE, rng) for _ in range(10_000)])
    assert stats.kstest(draws, stats.gamma(58.001, scale=1 / 1.001).cdf).pvalue > 0.01


def test_lambda_star_empty_pattern(rng):
    st = make_state(0, 0, rng)
    pri = Priors(lambda_shape=2.0, lambda_rate=3.0)
    draws = np.array([step_lambda_star(st, pri, UNIT_SQUARE, rng) for _ in range(5000)])
    assert stats.kstest(draws, stats.gamma(2.0, scale=1 / 4.0).cdf).pvalue > 0.01


def test_lambda_star_truncation(rng):
    st = make_state(5, 495, rng)
    pri = Priors(lambda_upper=500.0)
    draws = [step_lambda_star(st, pri, UNIT_SQUARE, rng) for _ in range(2000)]
    assert max(draws) <= 500.0


def test_lambda_star_impossible_truncation(rng):
    st = make_state(10, 58, rng)
    with pytest.raises(ConfigurationError):
        step_lambda_star(st, Priors(lambda_upper=1.0), UNIT_SQUARE, rng, max_tries=1000)


def test_eta_flat_prior_hand_formula(rng):
    st = make_state(30, 30, rng, tau2=0.7)
    data = make_data(st, rng)
    precision, linear = eta_conditional(st, data, Priors(eta_var=1e12))
    mean = np.linalg.solve(precision, linear)[0]
    var = 1.0 / precision[0, 0]
    assert mean == pytest.approx(np.mean(data.y - st.s_data), abs=1e-6)
    assert var == pytest.approx(0.7 / 30, abs=1e-6)


def test_eta_ks_with_covariates(rng):
    st = make_state(25, 25, rng, tau2=0.4)
    cov = rng.normal(size=(25, 1))
    data = GeoDataset.from_arrays(st.locs, rng.normal(size=25), cov)
    pri = Priors(eta_mean=(0.5,), eta_var=2.0)
    precision, linear = eta_conditional(st, data, pri)
    covm = np.linalg.inv(precision)
    mean = covm @ linear
    draws = []
    for _ in range(10_000):
        st.tau2 = 0.4
        draws.append(step_eta_tau2(st, data, pri, rng)[0].copy())
    draws = np.array(draws)
    for j in range(2):
        law = stats.norm(mean[j], np.sqrt(covm[j, j]))
        assert stats.kstest(draws[:, j], law.cdf).pvalue > 0.01


def test_tau2_ks_via_probability_integral_transform(rng):
    st = make_state(15, 15, rng, tau2=0.6)
    data = make_data(st, rng)
    pri = Priors(tau2_shape=2.0, tau2_scale=1.5)
    draws, scales = np.empty(10_000), np.empty(10_000)
    for i in range(len(draws)):
        st.tau2 = 0.6
        eta, draws[i] = step_eta_tau2(st, data, pri, rng)
        r = data.y - st.s_data - data.design @ eta
        scales[i] = r @ r / 2 + 1.5
    u = stats.invgamma.cdf(draws, 15 / 2 + 2.0, scale=scales)
    assert stats.kstest(u, "uniform").pvalue > 0.01


def test_tau2_zero_residuals(rng, monkeypatch):
    st = make_state(8, 8, rng)
    data = GeoDataset.from_arrays(st.locs, st.s + 1.0)
    # pin eta at the value that makes every residual zero
    monkeypatch.setattr(inf, "gaussian_from_precision", lambda P, b, rng: np.array([1.0]))
    pri = Priors(tau2_shape=3.0, tau2_scale=0.5)
    draws = np.array([step_eta_tau2(st, data, pri, rng)[1] for _ in range(5000)])
    assert stats.kstest(draws, stats.invgamma(4 + 3.0, scale=0.5).cdf).pvalue > 0.01


# ---------------------------------------------------------------------------
# field update

def test_S_k_gaussian_case(rng):
    st = make_state(6, 6, rng, beta=0.0, sigma2=2.0, tau2=0.3)
    data = make_data(st, rng)
    R = CorrFactor(st.locs, CorrelationModel(st.phi)).R
    P = np.linalg.inv(2.0 * R) + np.eye(6) / 0.3
    cov = np.linalg.inv(P)
    mean = cov @ ((data.y - 1.0) / 0.3)
    draws = np.array([step_S_k(st, data, rng).copy() for _ in range(10_000)])
    se = np.sqrt(np.diag(cov) / len(draws))
    assert np.all(np.abs(draws.mean(axis=0) - mean) < 3.5 * se)


def test_S_k_uninformative_data_gives_prior(rng):
    st = make_state(3, 5, rng, beta=0.0, sigma2=1.5, tau2=1e8)
    data = make_data(st, rng)
    draws = np.array([step_S_k(st, data, rng).copy() for _ in range(10_000)])
    R = CorrFactor(st.locs, CorrelationModel(st.phi)).R
    se = np.sqrt(1.5 / len(draws))
    assert np.all(np.abs(draws.mean(axis=0)) < 3.5 * se)
    assert np.allclose(np.cov(draws.T), 1.5 * R, atol=0.1)


def test_S_k_two_point_quadrature(rng):
    st = make_state(1, 2, rng, beta=1.5, sigma2=1.2, tau2=0.4)
    st.locs = np.array([[0.3, 0.3], [0.35, 0.4]])
    data = make_data(st, rng, y=np.array([1.8]))
    R = np.exp(-np.linalg.norm(st.locs[0] - st.locs[1]) / st.phi)
    Rm = np.array([[1.0, R], [R, 1.0]])
    P = np.linalg.inv(1.2 * Rm) + np.diag([1 / 0.4, 0.0])
    cov = np.linalg.inv(P)
    mu = cov @ np.array([(1.8 - 1.0) / 0.4, 0.0])
    g = 1.5 / np.sqrt(1.2) * np.array([1.0, -1.0])
    axes, cdfs, _ = sn_quadrature_cdfs(mu, cov, g)
    draws = np.array([step_S_k(st, data, rng).copy() for _ in range(30_000)])
    for j in range(2):
        assert kolmogorov_distance(draws[:, j], axes[j], cdfs[j]) < 0.02


# ---------------------------------------------------------------------------
# Metropolis-Hastings steps

def test_identity_proposals_give_zero_log_ratio(rng):
    st = make_state(4, 7, rng, beta=1.1)
    f = CorrFactor(st.locs, CorrelationModel(st.phi))
    pri = Priors()
    assert log_p_sigma(2.0, 2.0, st.s, st.signs, 1.1, f.quad(st.s), pri) == 0.0
    assert log_p_phi(0.2, 0.2, f.logdet, f.logdet, 3.0, 3.0, 1.0, pri) == 0.0
    assert log_p_beta(0.7, 0.7, st.s, st.signs, 1.0, pri) == 0.0


def test_phi_ratio_single_point_reduces_to_prior():
    pri = Priors(phi_shape=2.0, phi_rate=4.0)
    s = np.array([0.8])
    for phi_p, phi_c in [(0.1, 0.3), (0.5, 0.05), (1.7, 1.2)]:
        fp = CorrFactor([[0.4, 0.4]], CorrelationModel(phi_p))
        fc = CorrFactor([[0.4, 0.4]], CorrelationModel(phi_c))
        got = log_p_phi(phi_p, phi_c, fp.logdet, fc.logdet, fp.quad(s), fc.quad(s), 1.3, pri)
        hand = 2.0 * np.log(phi_p / phi_c) - 4.0 * (phi_p - phi_c)
        assert abs(got - hand) < 1e-12


def test_sigma2_ratio_includes_jacobian():
    # with beta = 0 the ratio must equal target ratio times sigma2_p / sigma2_c
    pri = Priors(sigma2_shape=3.0, sigma2_scale=2.0)
    s = np.array([0.5, -1.0, 0.2])
    quad = 1.7

    def log_target(v):
        return (-1.5 - 3.0 - 1.0) * np.log(v) - (quad / 2 + 2.0) / v

    got = log_p_sigma(2.5, 1.1, s, np.ones(3), 0.0, quad, pri)
    assert got == pytest.approx(log_target(2.5) - log_target(1.1) + np.log(2.5 / 1.1), abs=1e-12)


class _Step:
    def __init__(self, fn, attr):
        self.fn, self.attr = fn, attr

    def __call__(self, state):
        self.fn(state)

    def value(self, state):
        return getattr(state, self.attr)


def test_sigma2_without_skew_matches_inverse_gamma(rng):
    st = make_state(5, 5, rng, beta=0.0, sigma2=1.0)
    pri = Priors(sigma2_shape=2.0, sigma2_scale=1.0)
    cfg = McmcConfig(step_sigma2=0.8)
    draws = run_mh(_Step(lambda s: step_sigma2(s, pri, cfg, rng), "sigma2"), st, 60_000)
    quad = st.factor().quad(st.s)
    grid = np.linspace(1e-3, 40, 20_000)
    dens = stats.invgamma(2.5 + 2.0, scale=quad / 2 + 1.0).pdf(grid)
    assert ecdf_vs_grid(draws, grid, dens) < 0.02


def test_sigma2_with_skew_matches_quadrature(rng):
    st = make_state(2, 5, rng, beta=1.5, sigma2=1.0)
    pri = Priors(sigma2_shape=2.0, sigma2_scale=1.0)
    cfg = McmcConfig(step_sigma2=0.8)
    draws = run_mh(_Step(lambda s: step_sigma2(s, pri, cfg, rng), "sigma2"), st, 60_000)
    quad = st.factor().quad(st.s)
    grid = np.linspace(1e-3, 40, 20_000)
    logk = (-2.5 - 2.0 - 1) * np.log(grid) - (quad / 2 + 1.0) / grid
    logk += np.sum(log_ndtr(st.signs[:, None] * 1.5 * st.s[:, None] / np.sqrt(grid)[None, :]), axis=0)
    assert ecdf_vs_grid(draws, grid, np.exp(logk - logk.max())) < 0.03


def test_phi_matches_quadrature(rng):
    st = make_state(3, 3, rng, sigma2=1.0)
    st.locs = np.array([[0.1, 0.2], [0.3, 0.25], [0.2, 0.5]])
    st.s = np.array([1.0, 0.6, -0.4])
    pri = Priors(phi_shape=2.0, phi_rate=4.0)
    cfg = McmcConfig(step_phi=0.9)
    draws = run_mh(_Step(lambda s: step_phi(s, pri, cfg, rng), "phi"), st, 60_000)
    d = np.linalg.norm(st.locs[:, None] - st.locs[None], axis=-1)
    grid = np.linspace(1e-3, 6, 6000)
    logk = np.empty_like(grid)
    for i, phi in enumerate(grid):
        R = np.exp(-d / phi) + 1e-8 * np.eye(3)
        _, logdet = np.linalg.slogdet(R)
        logk[i] = -0.5 * logdet - 0.5 * st.s @ np.linalg.solve(R, st.s) + np.log(phi) - 4.0 * phi
    assert ecdf_vs_grid(draws, grid, np.exp(logk - logk.max())) < 0.03


def test_phi_fixed_is_skipped(rng):
    st = make_state(3, 3, rng, phi=0.4)
    assert step_phi(st, Priors(), McmcConfig(fix_phi=0.4), rng) == (0.4, False)


def test_beta_flat_field_samples_prior(rng):
    st = make_state(3, 6, rng, s=np.zeros(6), beta=0.2)
    pri = Priors(beta_mean=0.5, beta_var=2.0)
    cfg = McmcConfig(step_beta=2.0)
    draws = run_mh(_Step(lambda s: step_beta(s, pri, cfg, rng), "beta"), st, 100_000, thin=10)
    assert stats.kstest(draws, stats.norm(0.5, np.sqrt(2.0)).cdf).pvalue > 0.01


def test_beta_single_point_quadrature(rng):
    st = make_state(1, 1, rng, s=np.array([0.9]), sigma2=0.5)
    cfg = McmcConfig(step_beta=1.5)
    draws = run_mh(_Step(lambda s: step_beta(s, Priors(), cfg, rng), "beta"), st, 60_000)
    grid = np.linspace(-8, 8, 16_000)
    logk = log_ndtr(grid * 0.9 / np.sqrt(0.5)) - 0.5 * grid**2
    assert ecdf_vs_grid(draws, grid, np.exp(logk)) < 0.02


def test_beta_fixed(rng):
    st = make_state(2, 4, rng, beta=0.3)
    assert step_beta(st, Priors(), McmcConfig(fix_beta=1.25), rng) == (1.25, False)


# ---------------------------------------------------------------------------
# whole chains

@pytest.fixture(scope="module")
def small_ps():
    data, _ = simulate_ps(TrueParams(60.0, 4.0, 0.1, 3.0, 0.15, 2.0), UNIT_SQUARE, np.random.default_rng(3))
    return data


def test_eps_chain_shapes_and_determinism(small_ps):
    cfg = McmcConfig(n_iter=300, burn_in=100, thin=4, seed=7)
    a = run_eps(small_ps, UNIT_SQUARE, Priors(), cfg)
    b = run_eps(small_ps, UNIT_SQUARE, Priors(), cfg)
    assert len(a) == 50
    for name, v in a.parameter_table().items():
        assert np.array_equal(v, b.parameter_table()[name])
    assert all(np.array_equal(x, y) for x, y in zip(a.discarded_locs, b.discarded_locs))
    assert np.all(a.k >= small_ps.n)
    assert np.all(a.tau2 > 0) and np.all(a.sigma2 > 0) and np.all(a.lambda_star > 0)
    for name in ("sigma2", "phi", "beta"):
        assert 0 < a.acceptance[name] < 1
    c = run_eps(small_ps, UNIT_SQUARE, Priors(), McmcConfig(n_iter=300, burn_in=100, thin=4, seed=8))
    assert not np.array_equal(a.beta, c.beta)


def test_nps_chain(small_ps):
    out = run_nps(small_ps, Priors(), McmcConfig(n_iter=200, burn_in=50, thin=5))
    assert out.beta is None and out.lambda_star is None and out.k is None
    assert "beta" not in out.parameter_table()
    assert out.s_data.shape == (30, small_ps.n)


def test_nps_needs_data():
    empty = GeoDataset.from_arrays(np.zeros((0, 2)), np.zeros(0))
    with pytest.raises(ConfigurationError):
        run_nps(empty, Priors(), McmcConfig(n_iter=10, burn_in=0, thin=1))


def test_chain_failure_carries_iteration(small_ps, monkeypatch):
    def broken(state, *a, **k):
        raise np.linalg.LinAlgError("boom")

    monkeypatch.setattr(inf, "step_S_k", broken)
    with pytest.raises(SamplerError) as info:
        run_eps(small_ps, UNIT_SQUARE, Priors(), McmcConfig(n_iter=20, burn_in=5, thin=1))
    assert info.value.iteration == 1 and info.value.state is not None


def test_state_validation(rng):
    st = make_state(2, 3, rng)
    st.tau2 = -1.0
    with pytest.raises(SamplerError):
        st.validate()


def test_fixed_phi_chain(small_ps):
    out = run_eps(small_ps, UNIT_SQUARE, Priors(), McmcConfig(n_iter=60, burn_in=10, thin=1, fix_phi=0.2))
    assert np.all(out.phi == 0.2)


def test_geweke_detects_missing_jacobian(monkeypatch):
    """Negative control: dropping the proposal Jacobian from the sigma2 ratio
    must be caught by the joint test at a modest number of rounds."""
    good = geweke_test(3000, np.random.default_rng(0))
    original = inf.log_p_sigma

    def no_jacobian(sigma2_p, sigma2_c, *args):
        return original(sigma2_p, sigma2_c, *args) - np.log(sigma2_p / sigma2_c)

    monkeypatch.setattr(inf, "log_p_sigma", no_jacobian)
    bad = geweke_test(3000, np.random.default_rng(0))
    assert bad.max_deviation["sigma2"] > 0.1
    assert bad.max_deviation["sigma2"] > 2 * good.max_deviation["sigma2"]

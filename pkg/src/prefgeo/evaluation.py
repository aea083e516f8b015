"""Predictive scores, cross-validation and the permutation-envelope variogram."""
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp
from scipy.spatial.distance import pdist

from ._rng import derive_rng
from .inference import run_eps, run_nps
from .prediction import PredictionGrid, predict_response

CV_LEVELS = (0.90, 0.95, 0.99)
MIN_PPD_DRAWS = 100


@dataclass
class MetricReport:
    mape: float
    crci: dict
    ppd: float
    n_p: int
    per_point: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.mape < 0:
            raise ValueError("mape must be non-negative")
        if any(not 0 <= v <= 1 for v in self.crci.values()):
            raise ValueError("coverage fractions must lie in [0, 1]")


def mape(predicted_means, truth):
    p = np.asarray(predicted_means, dtype=float).reshape(-1)
    t = np.asarray(truth, dtype=float).reshape(-1)
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: {p.size} predictions, {t.size} truths")
    if p.size == 0:
        raise ValueError("need at least one evaluation location")
    return float(np.mean(np.abs(p - t)))


def crci(intervals, truth, level=None):
    """Fraction of ``truth`` values inside their ``(lo, hi)`` interval.

    ``level`` is informational; the intervals already encode it.
    """
    iv = np.asarray(intervals, dtype=float).reshape(-1, 2)
    t = np.asarray(truth, dtype=float).reshape(-1)
    if len(iv) != len(t):
        raise ValueError("intervals and truth differ in length")
    if np.any(iv[:, 0] > iv[:, 1]) or not np.all(np.isfinite(iv)):
        raise ValueError("malformed interval: lo > hi or non-finite bound")
    if level is not None and not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    return float(np.mean((t >= iv[:, 0]) & (t <= iv[:, 1])))


def ppd(mean_draws, tau2_draws, truth):
    """Log of ``(1/M) sum_m N(truth; mean_m, tau2_m)``, computed with log-sum-exp."""
    mean = np.asarray(mean_draws, dtype=float).reshape(-1)
    var = np.broadcast_to(np.asarray(tau2_draws, dtype=float), mean.shape)
    if mean.size < MIN_PPD_DRAWS:
        raise ValueError(f"ppd needs at least {MIN_PPD_DRAWS} posterior draws, got {mean.size}")
    if np.any(var <= 0):
        raise ValueError("component variances must be positive")
    logs = -0.5 * (np.log(2 * np.pi * var) + (float(truth) - mean) ** 2 / var)
    return float(logsumexp(logs) - np.log(mean.size))


def score_field(field, truth, levels=CV_LEVELS):
    """MAPE and coverage of a predictive response field against true values."""
    truth = np.asarray(truth, dtype=float)
    cov = {}
    for level in levels:
        lo, hi = field.interval(level)
        cov[level] = crci(np.column_stack([lo, hi]), truth, level)
    total = float("nan")
    if field.component_mean is not None and field.draws.shape[0] >= MIN_PPD_DRAWS:
        total = sum(ppd(field.component_mean[:, j], field.component_var, truth[j]) for j in range(len(truth)))
    return MetricReport(mape(field.mean, truth), cov, total, len(truth))


def _folds(n, folds, rng):
    if folds == "loo":
        return [np.array([i]) for i in range(n)]
    k = int(folds)
    if not 2 <= k <= n:
        raise ValueError("k-fold needs 2 <= k <= n")
    return np.array_split(rng.permutation(n), k)


def cross_validate(data, region, priors, config, folds="loo", model="eps",
                   levels=CV_LEVELS, iter_scale=1.0, condition_on="all"):
    """Refit on each training fold and score predictions at the held-out points.

    ``iter_scale`` multiplies ``n_iter`` and ``burn_in`` for the refits.
    Returns a :class:`MetricReport` whose PPD is summed over held-out points.
    """
    if data.n < 10:
        raise ValueError("cross-validation needs at least 10 observations")
    if model not in ("eps", "nps"):
        raise ValueError("model must be 'eps' or 'nps'")
    cfg = config
    if iter_scale != 1.0:
        cfg = replace(config, n_iter=max(int(config.n_iter * iter_scale), 2),
                      burn_in=int(config.burn_in * iter_scale))
    parts = _folds(data.n, folds, derive_rng(cfg.seed, "cv-folds"))
    means, truths, lows, highs, logs = [], [], {lv: [] for lv in levels}, {lv: [] for lv in levels}, []
    for i, held in enumerate(parts):
        train = np.setdiff1d(np.arange(data.n), held)
        if train.size == 0:
            raise ValueError(f"fold {i} has no training points")
        fold_cfg = replace(cfg, seed=int(derive_rng(cfg.seed, "cv-fit", i).integers(2**31)))
        sub = data.subset(train)
        samples = run_eps(sub, region, priors, fold_cfg) if model == "eps" else run_nps(sub, priors, fold_cfg)
        grid = PredictionGrid(data.locations[held], data.design[held])
        fieldp = predict_response(samples, sub, grid, derive_rng(cfg.seed, "cv-predict", i), condition_on)
        means.append(fieldp.mean)
        truths.append(data.y[held])
        for lv in levels:
            lo, hi = fieldp.interval(lv)
            lows[lv].append(lo)
            highs[lv].append(hi)
        logs.extend(ppd(fieldp.component_mean[:, j], fieldp.component_var, data.y[h])
                    for j, h in enumerate(held))
    truth = np.concatenate(truths)
    pred = np.concatenate(means)
    cov = {lv: crci(np.column_stack([np.concatenate(lows[lv]), np.concatenate(highs[lv])]), truth, lv)
           for lv in levels}
    return MetricReport(mape(pred, truth), cov, float(np.sum(logs)), len(truth),
                        per_point={"predicted": pred, "truth": truth, "log_density": np.asarray(logs)})


@dataclass
class VariogramEnvelope:
    centers: np.ndarray
    gamma: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    n_pairs: np.ndarray
    dropped: np.ndarray

    @property
    def below(self):
        return self.gamma < self.lower

    @property
    def above(self):
        return self.gamma > self.upper

    @property
    def outside(self):
        return self.below | self.above


def _semivariogram(dist, sqdiff, edges):
    idx = np.digitize(dist, edges[1:-1])
    valid = dist <= edges[-1]
    nb = len(edges) - 1
    counts = np.bincount(idx[valid], minlength=nb)
    sums = np.bincount(idx[valid], weights=sqdiff[valid], minlength=nb)
    with np.errstate(invalid="ignore", divide="ignore"):
        return sums / (2.0 * counts), counts


def variogram_envelope(data, n_bins=15, n_permutations=99, rng=None, region=None, max_dist=None):
    """Classical (Matheron) semivariogram with a permutation envelope.

    Responses are permuted over the fixed locations; the envelope is the
    per-bin min and max across permutations.  Bins run up to ``max_dist``,
    by default half the region diameter (or half the largest inter-point
    distance when no region is given).  Empty bins are dropped and listed
    in ``dropped``.
    """
    if data.n < 10:
        raise ValueError("variogram needs at least 10 observations")
    if n_permutations < 99:
        raise ValueError("use at least 99 permutations")
    rng = np.random.default_rng() if rng is None else rng
    dist = pdist(data.locations)
    if max_dist is None:
        max_dist = 0.5 * (region.diameter if region is not None else dist.max())
    edges = np.linspace(0.0, max_dist, n_bins + 1)
    y = data.y
    gamma, counts = _semivariogram(dist, pdist(y[:, None], "sqeuclidean"), edges)
    perms = np.empty((n_permutations, n_bins))
    for b in range(n_permutations):
        yp = rng.permutation(y)
        perms[b] = _semivariogram(dist, pdist(yp[:, None], "sqeuclidean"), edges)[0]
    keep = counts > 0
    centers = 0.5 * (edges[:-1] + edges[1:])
    return VariogramEnvelope(centers[keep], gamma[keep], perms.min(axis=0)[keep], perms.max(axis=0)[keep],
                             counts[keep], np.flatnonzero(~keep))

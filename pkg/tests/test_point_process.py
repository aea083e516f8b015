from types import SimpleNamespace

import numpy as np
import pytest
from scipy.special import ndtr

from oracles import superposition_pvalue
from prefgeo.gp import CorrelationModel, GpParams, gp_draw
from prefgeo.point_process import PointPattern, hpp_draw, thin, update_discarded
from prefgeo.region import UNIT_SQUARE, Region


def test_pattern_validation():
    with pytest.raises(ValueError):
        PointPattern(np.zeros((3, 2)), np.zeros(2))
    assert len(PointPattern(np.zeros((0, 2)))) == 0


def test_hpp_rejects_nonpositive_intensity(rng):
    with pytest.raises(ValueError):
        hpp_draw(0.0, UNIT_SQUARE, rng)


def test_hpp_counts(rng):
    counts = np.array([len(hpp_draw(150.0, UNIT_SQUARE, rng)) for _ in range(1000)])
    assert abs(counts.mean() - 150) < 3 * np.sqrt(150 / 1000)
    assert 0.9 <= counts.var(ddof=1) / counts.mean() <= 1.1


def test_hpp_tiny_intensity(rng):
    zeros = np.mean([len(hpp_draw(1e-6, UNIT_SQUARE, rng)) == 0 for _ in range(1000)])
    assert zeros >= 0.999


def test_hpp_scales_with_area(rng):
    reg = Region((0, 0), (2, 3))
    counts = [len(hpp_draw(10.0, reg, rng)) for _ in range(400)]
    assert abs(np.mean(counts) - 60) < 3 * np.sqrt(60 / 400)


def test_thin_needs_marks(rng):
    with pytest.raises(ValueError):
        thin(PointPattern(np.zeros((2, 2))), 1.0, 1.0, 1, rng)
    with pytest.raises(ValueError):
        thin(PointPattern(np.zeros((2, 2)), np.zeros(2)), 1.0, 1.0, 0, rng)


def test_thin_zero_beta(rng):
    pat = PointPattern(rng.random((10_000, 2)), rng.normal(size=10_000))
    kept = thin(pat, 0.0, 1.0, 1, rng)
    assert abs(len(kept) / 10_000 - 0.5) < 0.015


def test_thin_extreme_beta(rng):
    pat = PointPattern(rng.random((500, 2)), np.ones(500))
    assert len(thin(pat, 1e3, 1.0, 1, rng)) == 500
    assert len(thin(pat, 1e3, 1.0, -1, rng)) == 0


def test_thin_complementary_partition(rng):
    pat = PointPattern(rng.random((300, 2)), rng.normal(size=300))
    u = rng.random(300)
    a = thin(pat, 1.3, 0.8, 1, rng, uniforms=u)
    b = thin(pat, 1.3, 0.8, -1, rng, uniforms=u)
    assert len(a) + len(b) == 300
    merged = np.vstack([a.locations, b.locations])
    assert np.array_equal(np.sort(merged, axis=0), np.sort(pat.locations, axis=0))


def test_thin_retention_probability(rng):
    marks = np.full(20_000, 0.7)
    pat = PointPattern(rng.random((20_000, 2)), marks)
    p = ndtr(2.0 * 0.7 / 1.5)
    frac = len(thin(pat, 2.0, 1.5, 1, rng)) / 20_000
    assert abs(frac - p) < 3 * np.sqrt(p * (1 - p) / 20_000)


def _state(lam, beta, sigma2, phi, locs, s):
    return SimpleNamespace(lambda_star=lam, beta=beta, sigma2=sigma2, phi=phi,
                           locs=np.asarray(locs, float).reshape(-1, 2), s=np.asarray(s, float))


def test_discarded_empty_for_strong_positive_field(rng, monkeypatch):
    # force S = +1 at every candidate; retention Phi(-1e3) is then ~0
    import prefgeo.point_process as pp

    monkeypatch.setattr(pp, "conditional_draw", lambda targets, *a, **k: np.ones(len(targets)))
    locs = rng.random((5, 2))
    st = _state(150.0, 1e3, 1.0, 0.15, locs, np.ones(5))
    sizes = [len(update_discarded(st, locs, UNIT_SQUARE, rng)[0]) for _ in range(200)]
    assert max(sizes) == 0


def test_discarded_zero_beta_mean(rng):
    locs = rng.random((4, 2))
    st = _state(100.0, 0.0, 2.0, 0.15, locs, rng.normal(size=4))
    sizes = np.array([len(update_discarded(st, locs, UNIT_SQUARE, rng)[0]) for _ in range(1000)])
    assert abs(sizes.mean() - 50) < 3 * np.sqrt(50 / 1000)


def test_discarded_inside_and_distinct(rng):
    locs = rng.random((10, 2))
    st = _state(200.0, 2.0, 3.0, 0.15, locs, rng.normal(size=10))
    for _ in range(20):
        out, s = update_discarded(st, locs, UNIT_SQUARE, rng)
        assert len(out) == len(s)
        assert np.all(UNIT_SQUARE.contains(out))
        if len(out):
            d = np.min(np.linalg.norm(out[:, None, :] - locs[None, :, :], axis=-1))
            assert d > 1e-12


def test_discarded_empty_state(rng):
    st = _state(80.0, 1.0, 1.0, 0.2, np.zeros((0, 2)), np.zeros(0))
    out, s = update_discarded(st, np.zeros((0, 2)), UNIT_SQUARE, rng)
    assert out.shape[1] == 2 and len(out) == len(s)


def test_superposition_reconstitutes_hpp():
    assert superposition_pvalue(300, seed=11) > 0.01


def test_discarded_binned_intensity():
    """Per-bin counts of discarded points against a Monte Carlo oracle of
    lambda* E[Phi(-beta S / sigma)], starting from an empty state so S is the prior GP."""
    lam, beta, sigma2 = 150.0, 2.0, 3.0
    rng = np.random.default_rng(21)
    st = _state(lam, beta, sigma2, 0.15, np.zeros((0, 2)), np.zeros(0))
    reps = 400
    counts = np.zeros((4, 4))
    per_rep = np.empty((reps, 16))
    for r in range(reps):
        out, _ = update_discarded(st, np.zeros((0, 2)), UNIT_SQUARE, rng)
        h, _, _ = np.histogram2d(out[:, 0], out[:, 1], bins=4, range=[[0, 1], [0, 1]])
        per_rep[r] = h.ravel()
        counts += h
    # oracle: the marginal of S(x) is N(0, sigma2), so E[Phi(-beta S / sigma)] = Phi(0) = 1/2
    mc = np.random.default_rng(22).normal(0, np.sqrt(sigma2), 200_000)
    expected = lam / 16 * np.mean(ndtr(-beta * mc / np.sqrt(sigma2)))
    se = per_rep.std(axis=0, ddof=1) / np.sqrt(reps)
    assert np.all(np.abs(per_rep.mean(axis=0) - expected) < 3.5 * se)

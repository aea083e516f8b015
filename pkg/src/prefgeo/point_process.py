"""Homogeneous Poisson simulation, probit thinning and the discarded-process update."""
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .gp import CorrelationModel, GpParams, conditional_draw, gp_draw
from .region import sample_uniform


@dataclass
class PointPattern:
    locations: np.ndarray
    marks: np.ndarray = None

    def __post_init__(self):
        self.locations = np.asarray(self.locations, dtype=float).reshape(-1, 2)
        if self.marks is not None:
            self.marks = np.asarray(self.marks, dtype=float).reshape(-1)
            if len(self.marks) != len(self.locations):
                raise ValueError("marks and locations differ in length")

    def __len__(self):
        return len(self.locations)


def hpp_draw(lambda_star, region, rng):
    if not lambda_star > 0:
        raise ValueError("lambda_star must be positive")
    count = rng.poisson(lambda_star * region.area)
    return PointPattern(sample_uniform(region, count, rng))


def selection_indicator(marks, beta, sigma, uniforms):
    """``z = 1`` where a uniform falls below ``Phi(beta * S / sigma)``."""
    return uniforms < ndtr(beta * np.asarray(marks) / sigma)


def thin(pattern, beta, sigma, keep_sign, rng, uniforms=None):
    """Keep each point with probability ``Phi(keep_sign * beta * S / sigma)``.

    Passing the same ``uniforms`` with ``keep_sign=+1`` and ``-1`` splits the
    pattern into two complementary parts.
    """
    if pattern.marks is None:
        raise ValueError("thinning needs S marks on the pattern")
    if keep_sign not in (1, -1):
        raise ValueError("keep_sign must be +1 or -1")
    if uniforms is None:
        uniforms = rng.random(len(pattern))
    z = selection_indicator(pattern.marks, beta, sigma, uniforms)
    keep = z if keep_sign == 1 else ~z
    return PointPattern(pattern.locations[keep], pattern.marks[keep])


def update_discarded(state, data_locs, region, rng, factor=None):
    """Exact draw of the discarded process given the field at the current ``k`` points.

    Candidates come from ``HPP(lambda*)``, receive field values by
    conditional simulation given ``state.s`` at ``state.locs``, and are kept
    with probability ``Phi(-beta S / sigma)``.

    ``state`` needs ``lambda_star, beta, sigma2, phi, locs, s``.
    Returns ``(locations, S values)`` of the new discarded points.
    """
    candidates = hpp_draw(state.lambda_star, region, rng)
    if len(candidates) == 0:
        return np.zeros((0, 2)), np.zeros(0)
    params = GpParams(state.sigma2, CorrelationModel(state.phi))
    if len(state.locs) == 0:
        s_new = gp_draw(candidates.locations, params, rng)
    else:
        s_new = conditional_draw(candidates.locations, state.locs, state.s, params, rng, factor=factor)
    marked = PointPattern(candidates.locations, s_new)
    kept = thin(marked, state.beta, np.sqrt(state.sigma2), -1, rng)
    return kept.locations, kept.marks

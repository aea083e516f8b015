"""Synthetic data under preferential and non-preferential sampling."""
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import ndtr

from .dataset import GeoDataset
from .gp import CorrelationModel, GpParams, gp_draw
from .point_process import hpp_draw

PAPER_TRUTH = (150.0, 4.0, 0.10, 3.0, 0.15, 2.0)
NPS_INTENSITY = 72.0


class DegenerateSimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrueParams:
    lambda_star: float = 150.0
    mu: float = 4.0
    tau2: float = 0.10
    sigma2: float = 3.0
    phi: float = 0.15
    beta: float = 2.0

    def __post_init__(self):
        for name in ("lambda_star", "tau2", "sigma2", "phi"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    def as_dict(self):
        return asdict(self)


@dataclass
class SimulationTruth:
    """Everything drawn while generating a dataset.

    ``grid``/``s_grid``/``y_grid`` are filled when a grid was requested; the
    field there is drawn jointly with the field at the point locations.
    """

    params: TrueParams
    all_locations: np.ndarray
    s_all: np.ndarray
    kept: np.ndarray
    grid: np.ndarray = None
    s_grid: np.ndarray = None
    y_grid: np.ndarray = None

    @property
    def n(self):
        return int(self.kept.sum())


def _field(points, grid, params, rng):
    locs = points if grid is None else np.vstack([points, grid])
    s = gp_draw(locs, GpParams(params.sigma2, CorrelationModel(params.phi)), rng)
    m = len(points)
    return s[:m], (None if grid is None else s[m:])


def _responses(s, params, rng):
    return params.mu + s + np.sqrt(params.tau2) * rng.standard_normal(len(s))


def simulate_ps(params, region, rng, grid=None, max_attempts=100):
    """Dominating HPP, field at its points, probit thinning, then noisy responses."""
    for _ in range(max_attempts):
        w = hpp_draw(params.lambda_star, region, rng)
        if len(w) == 0:
            continue
        s_w, s_grid = _field(w.locations, grid, params, rng)
        kept = rng.random(len(w)) < ndtr(params.beta * s_w / np.sqrt(params.sigma2))
        if not kept.any():
            continue
        y = _responses(s_w[kept], params, rng)
        truth = SimulationTruth(params, w.locations, s_w, kept, grid, s_grid)
        if grid is not None:
            truth.y_grid = _responses(s_grid, params, rng)
        return GeoDataset.from_arrays(w.locations[kept], y), truth
    raise DegenerateSimulationError(f"no points retained in {max_attempts} attempts")


def simulate_nps(params, region, rng, intensity=None, grid=None, max_attempts=100):
    """Locations from an HPP independent of the field (``params.beta`` is ignored).

    ``intensity`` defaults to 72 points per unit area.
    """
    intensity = NPS_INTENSITY if intensity is None else intensity
    for _ in range(max_attempts):
        x = hpp_draw(intensity, region, rng)
        if len(x) == 0:
            continue
        s_x, s_grid = _field(x.locations, grid, params, rng)
        y = _responses(s_x, params, rng)
        truth = SimulationTruth(params, x.locations, s_x, np.ones(len(x), dtype=bool), grid, s_grid)
        if grid is not None:
            truth.y_grid = _responses(s_grid, params, rng)
        return GeoDataset.from_arrays(x.locations, y), truth
    raise DegenerateSimulationError(f"empty pattern in {max_attempts} attempts")

"""Rectangular study window."""
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Region:
    """Axis-aligned rectangle ``[lower[0], upper[0]] x [lower[1], upper[1]]``."""

    lower: tuple = (0.0, 0.0)
    upper: tuple = (1.0, 1.0)

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != 2 or len(hi) != 2:
            raise ValueError("Region must be two-dimensional")
        if not all(h > l for l, h in zip(lo, hi)):
            raise ValueError(f"Region upper {hi} must exceed lower {lo} in every dimension")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def area(self):
        return area(self)

    @property
    def diameter(self):
        return float(np.hypot(*(np.subtract(self.upper, self.lower))))

    def contains(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.all((pts >= self.lower) & (pts <= self.upper), axis=1)

    def grid(self, nx, ny):
        """Cell centres of a regular ``nx`` by ``ny`` grid, x1 varying fastest."""
        (x0, y0), (x1, y1) = self.lower, self.upper
        gx = x0 + (np.arange(nx) + 0.5) * (x1 - x0) / nx
        gy = y0 + (np.arange(ny) + 0.5) * (y1 - y0) / ny
        xx, yy = np.meshgrid(gx, gy)
        return np.column_stack([xx.ravel(), yy.ravel()])


UNIT_SQUARE = Region((0.0, 0.0), (1.0, 1.0))


def area(region):
    return float(np.prod(np.subtract(region.upper, region.lower)))


def sample_uniform(region, count, rng):
    """Draw ``count`` i.i.d. uniform locations in ``region`` as a ``(count, 2)`` array."""
    if count < 0:
        raise ValueError("count must be non-negative")
    u = rng.random((int(count), 2))
    lo = np.asarray(region.lower)
    return lo + u * (np.asarray(region.upper) - lo)

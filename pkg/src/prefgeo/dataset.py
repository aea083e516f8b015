"""Observed geostatistical data: locations, responses and the design matrix."""
from dataclasses import dataclass

import numpy as np


@dataclass
class GeoDataset:
    """Locations ``(n, 2)``, responses ``(n,)`` and design ``(n, p+1)``.

    The design always carries the intercept in its first column; pass only the
    extra covariates via :meth:`from_arrays`.
    """

    locations: np.ndarray
    y: np.ndarray
    design: np.ndarray

    def __post_init__(self):
        self.locations = np.asarray(self.locations, dtype=float).reshape(-1, 2)
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        design = np.asarray(self.design, dtype=float)
        self.design = design.reshape(len(self.y), design.shape[-1] if design.ndim == 2 else -1)
        if len(self.locations) != len(self.y):
            raise ValueError("locations and y differ in length")
        if not np.all(np.isfinite(self.y)) or not np.all(np.isfinite(self.locations)):
            raise ValueError("locations and y must be finite")

    @classmethod
    def from_arrays(cls, locations, y, covariates=None):
        y = np.asarray(y, dtype=float).reshape(-1)
        ones = np.ones((len(y), 1))
        if covariates is None or np.size(covariates) == 0:
            design = ones
        else:
            design = np.hstack([ones, np.asarray(covariates, dtype=float).reshape(len(y), -1)])
        return cls(locations, y, design)

    @property
    def n(self):
        return len(self.y)

    @property
    def n_coef(self):
        return self.design.shape[1]

    @property
    def covariates(self):
        return self.design[:, 1:]

    def subset(self, index):
        index = np.asarray(index)
        return GeoDataset(self.locations[index], self.y[index], self.design[index])

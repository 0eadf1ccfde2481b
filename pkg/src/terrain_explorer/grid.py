"""Grid geometry shared by the map, the sensor projection and the planner."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def grid_index(x: float, y: float, resolution: float) -> tuple[int, int]:
    """Cell index of a map point: floor of coordinate over resolution."""
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    return math.floor(x / resolution), math.floor(y / resolution)


@dataclass(frozen=True)
class GridGeometry:
    resolution: float
    size_x: int
    size_y: int
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        if self.size_x <= 0 or self.size_y <= 0:
            raise ValueError("grid must have at least one cell")

    @classmethod
    def covering(cls, extent_x: float, extent_y: float, resolution: float) -> "GridGeometry":
        return cls(resolution, int(math.ceil(extent_x / resolution - 1e-9)),
                   int(math.ceil(extent_y / resolution - 1e-9)))

    def index(self, x: float, y: float) -> tuple[int, int]:
        return grid_index(x - self.origin[0], y - self.origin[1], self.resolution)

    def indices(self, xs: np.ndarray, ys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        i = np.floor((np.asarray(xs) - self.origin[0]) / self.resolution).astype(np.int64)
        j = np.floor((np.asarray(ys) - self.origin[1]) / self.resolution).astype(np.int64)
        return i, j

    def contains(self, i: int, j: int) -> bool:
        return 0 <= i < self.size_x and 0 <= j < self.size_y

    def center(self, i, j):
        """Map coordinates of cell centres."""
        return (self.origin[0] + (np.asarray(i) + 0.5) * self.resolution,
                self.origin[1] + (np.asarray(j) + 0.5) * self.resolution)

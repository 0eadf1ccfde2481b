"""Voxel occupancy grid used for explored volume and volumetric gain."""

from __future__ import annotations

import math

import numpy as np

from . import _kernels as K

UNKNOWN, FREE, OCCUPIED = K.UNKNOWN, K.FREE, K.OCCUPIED


class ExplorationGrid:
    """Axis-aligned voxel grid with states UNKNOWN / FREE / OCCUPIED."""

    def __init__(self, origin, shape, voxel_size: float):
        if voxel_size <= 0:
            raise ValueError("voxel_size must be positive")
        self.origin = np.asarray(origin, dtype=np.float64).reshape(3)
        self.voxel_size = float(voxel_size)
        self.state = np.zeros(tuple(int(s) for s in shape), dtype=np.uint8)
        self.known = 0

    @classmethod
    def covering(cls, extent_x: float, extent_y: float, z_min: float, z_max: float,
                 voxel_size: float) -> "ExplorationGrid":
        shape = (math.ceil(extent_x / voxel_size), math.ceil(extent_y / voxel_size),
                 max(1, math.ceil((z_max - z_min) / voxel_size)))
        return cls((0.0, 0.0, z_min), shape, voxel_size)

    @property
    def voxel_volume(self) -> float:
        return self.voxel_size ** 3

    @property
    def explored_volume(self) -> float:
        return self.known * self.voxel_volume

    def voxel(self, p) -> tuple[int, int, int] | None:
        idx = tuple(int(v) for v in np.floor((np.asarray(p, dtype=np.float64) - self.origin) / self.voxel_size))
        if all(0 <= v < s for v, s in zip(idx, self.state.shape)):
            return idx
        return None

    def integrate(self, sensor_origin, hits: np.ndarray, miss_ends: np.ndarray | None = None) -> int:
        """Clear space along each beam; mark hit endpoints occupied.

        miss_ends are the far ends of beams that returned nothing. Returns
        the number of voxels that stopped being unknown.
        """
        start = np.asarray(sensor_origin, dtype=np.float64)
        hits = np.ascontiguousarray(np.reshape(hits, (-1, 3)), dtype=np.float64)
        newly = K.integrate_rays(self.state, self.origin, self.voxel_size, start, hits,
                                 np.ones(len(hits), dtype=np.bool_))
        if miss_ends is not None and len(miss_ends):
            ends = np.ascontiguousarray(np.reshape(miss_ends, (-1, 3)), dtype=np.float64)
            newly += K.integrate_rays(self.state, self.origin, self.voxel_size, start, ends,
                                      np.zeros(len(ends), dtype=np.bool_))
        self.known += newly
        return newly

    def visible_unknown(self, view, max_range: float, vfov_deg: float) -> int:
        """Unknown voxels with centres in range and within +-vfov_deg of the
        horizontal through `view`, not hidden behind an occupied voxel."""
        return int(K.visible_unknown(self.state, self.origin, self.voxel_size,
                                     np.asarray(view, dtype=np.float64), float(max_range),
                                     math.tan(math.radians(vfov_deg))))

"""Robot-centric 2.5D elevation map with per-cell scalar Kalman filtering,
confidence mapping and the run-wide global confidence map."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable

import numpy as np

from . import _kernels as K
from .grid import GridGeometry

# state transition and process noise of the height filter
TRANSITION = 1.0
PROCESS_NOISE = 0.0


def confidence_of(variance):
    """1 - clip(variance, 0, 1); accepts scalars or arrays."""
    v = np.asarray(variance, dtype=np.float64)
    if np.any(v < 0):
        raise ValueError(f"negative variance {v.min()!r}")
    c = 1.0 - np.clip(v, 0.0, 1.0)
    return float(c) if c.ndim == 0 else c


@dataclass(frozen=True)
class ElevationCell:
    elevation: float = math.nan
    variance: float = math.inf
    observation_count: int = 0
    initialized: bool = False

    @property
    def confidence(self) -> float:
        return confidence_of(self.variance) if self.initialized else 0.0


def predict(cell: ElevationCell, a: float = TRANSITION, q: float = PROCESS_NOISE) -> ElevationCell:
    if not cell.initialized:
        raise ValueError("cannot predict an uninitialized cell")
    return replace(cell, elevation=a * cell.elevation, variance=a * a * cell.variance + q)


def update(cell: ElevationCell, obs) -> ElevationCell:
    """Fuse one height observation (anything with .z and .variance)."""
    z, m = float(obs.z), float(obs.variance)
    if m < 0:
        raise ValueError("measurement variance must be non-negative")
    if not cell.initialized:
        return ElevationCell(z, m, 1, True)
    prior = predict(cell)
    p = prior.variance
    s = p + m
    gain = 0.0 if s == 0.0 else p / s
    h = prior.elevation + gain * (z - prior.elevation)
    return ElevationCell(h, (1.0 - gain) * p, cell.observation_count + 1, True)


class LocalMap:
    """An N x N window, centred on the robot, over a persistent arena-wide
    cell store. Store index (i, j) covers [i*res, (i+1)*res) x [j*res, (j+1)*res)."""

    def __init__(self, store: GridGeometry, size: int):
        if size < 1 or size % 2 == 0:
            raise ValueError("local map size must be odd and positive")
        self.store = store
        self.size = size
        shape = (store.size_x, store.size_y)
        self.elevation = np.full(shape, np.nan)
        self.variance = np.full(shape, np.inf)
        self.count = np.zeros(shape, dtype=np.int64)
        self.initialized = np.zeros(shape, dtype=np.bool_)
        self.dropped = 0
        self.center = (store.size_x // 2, store.size_y // 2)

    @property
    def resolution(self) -> float:
        return self.store.resolution

    @property
    def half(self) -> int:
        return self.size // 2

    @property
    def corner(self) -> tuple[int, int]:
        """Store index of local cell (0, 0)."""
        return self.center[0] - self.half, self.center[1] - self.half

    def recenter(self, x: float, y: float) -> None:
        self.center = self.store.index(x, y)

    def recenter_cell(self, i: int, j: int) -> None:
        self.center = (int(i), int(j))

    def to_store(self, a, b):
        i0, j0 = self.corner
        return np.asarray(a) + i0, np.asarray(b) + j0

    def to_local(self, i, j):
        i0, j0 = self.corner
        return np.asarray(i) - i0, np.asarray(j) - j0

    def ingest(self, i: np.ndarray, j: np.ndarray, z: np.ndarray, variance: np.ndarray) -> int:
        """Fuse observations given by store indices, in order. Returns how
        many fell outside the window."""
        if np.any(np.asarray(variance) < 0):
            raise ValueError("measurement variance must be non-negative")
        i0, j0 = self.corner
        dropped = K.kalman_ingest(np.ascontiguousarray(i, dtype=np.int64),
                                  np.ascontiguousarray(j, dtype=np.int64),
                                  np.ascontiguousarray(z, dtype=np.float64),
                                  np.ascontiguousarray(variance, dtype=np.float64),
                                  i0, j0, self.size, self.elevation, self.variance,
                                  self.count, self.initialized)
        self.dropped += dropped
        return dropped

    def cell(self, i: int, j: int) -> ElevationCell:
        """Cell state by store index."""
        if not self.store.contains(i, j) or not self.initialized[i, j]:
            return ElevationCell()
        return ElevationCell(float(self.elevation[i, j]), float(self.variance[i, j]),
                             int(self.count[i, j]), True)

    def local_cell(self, a: int, b: int) -> ElevationCell:
        if not (0 <= a < self.size and 0 <= b < self.size):
            return ElevationCell()
        i, j = self.to_store(a, b)
        return self.cell(int(i), int(j))

    def _window(self, arr: np.ndarray, fill) -> np.ndarray:
        """Copy of the window of a store layer, padded with fill off-arena."""
        out = np.full((self.size, self.size), fill, dtype=arr.dtype)
        i0, j0 = self.corner
        a0, b0 = max(0, -i0), max(0, -j0)
        i_lo, j_lo = max(0, i0), max(0, j0)
        i_hi = min(self.store.size_x, i0 + self.size)
        j_hi = min(self.store.size_y, j0 + self.size)
        if i_hi > i_lo and j_hi > j_lo:
            out[a0:a0 + i_hi - i_lo, b0:b0 + j_hi - j_lo] = arr[i_lo:i_hi, j_lo:j_hi]
        return out

    def elevation_window(self) -> np.ndarray:
        return self._window(self.elevation, np.nan)

    def variance_window(self) -> np.ndarray:
        return self._window(self.variance, np.inf)

    def initialized_window(self) -> np.ndarray:
        return self._window(self.initialized, False)

    def count_window(self) -> np.ndarray:
        return self._window(self.count, 0)

    def confidence_window(self) -> np.ndarray:
        """Confidence per local cell, NaN where uninitialized."""
        init = self.initialized_window()
        var = self.variance_window()
        out = np.full(var.shape, np.nan)
        out[init] = confidence_of(var[init])
        return out

    def window_origin(self) -> tuple[float, float]:
        """Map coordinates of the lower corner of local cell (0, 0)."""
        i0, j0 = self.corner
        r = self.resolution
        return self.store.origin[0] + i0 * r, self.store.origin[1] + j0 * r

    def export_csv(self, path_prefix: str | Path) -> list[Path]:
        """Write elevation, variance and confidence layers of the window."""
        init = self.initialized_window()
        layers = {"elevation": self.elevation_window(), "variance": self.variance_window(),
                  "confidence": self.confidence_window()}
        paths = []
        for name, arr in layers.items():
            path = Path(f"{path_prefix}_{name}.csv")
            write_layer_csv(path, arr, init, self.window_origin(), self.resolution)
            paths.append(path)
        return paths


def write_layer_csv(path: Path, values: np.ndarray, mask: np.ndarray,
                    origin: tuple[float, float], resolution: float) -> None:
    """Rows along x; cells outside mask are written as empty fields."""
    rows, cols = values.shape
    with open(path, "w") as fh:
        fh.write(f"# origin_x={origin[0]!r},origin_y={origin[1]!r},resolution={resolution!r},"
                 f"rows={rows},cols={cols}\n")
        for r in range(rows):
            fh.write(",".join(repr(float(v)) if m else "" for v, m in zip(values[r], mask[r])))
            fh.write("\n")


def read_layer_csv(path: str | Path) -> tuple[dict, np.ndarray]:
    """Inverse of write_layer_csv; empty fields come back as NaN."""
    with open(path) as fh:
        header = fh.readline().lstrip("#").strip()
        meta = {}
        for item in header.split(","):
            k, v = item.split("=")
            meta[k] = float(v) if k not in ("rows", "cols") else int(v)
        data = [[float(f) if f else math.nan for f in line.rstrip("\n").split(",")]
                for line in fh]
    return meta, np.array(data, dtype=np.float64).reshape(meta["rows"], meta["cols"])


def ingest_scan(local: LocalMap, observations: Iterable) -> LocalMap:
    """Fuse HeightObservation objects in arrival order."""
    obs = list(observations)
    if obs:
        i = np.array([o.cell[0] for o in obs], dtype=np.int64)
        j = np.array([o.cell[1] for o in obs], dtype=np.int64)
        z = np.array([o.z for o in obs], dtype=np.float64)
        v = np.array([o.variance for o in obs], dtype=np.float64)
        local.ingest(i, j, z, v)
    return local


class GlobalConfidenceMap:
    """Best confidence ever seen per arena cell; NaN where never observed."""

    def __init__(self, store: GridGeometry):
        self.store = store
        self.values = np.full((store.size_x, store.size_y), np.nan)

    def fold(self, local: LocalMap) -> None:
        i0, j0 = local.corner
        i_lo, j_lo = max(0, i0), max(0, j0)
        i_hi = min(self.store.size_x, i0 + local.size)
        j_hi = min(self.store.size_y, j0 + local.size)
        if i_hi <= i_lo or j_hi <= j_lo:
            return
        init = local.initialized[i_lo:i_hi, j_lo:j_hi]
        conf = 1.0 - np.clip(local.variance[i_lo:i_hi, j_lo:j_hi], 0.0, 1.0)
        cur = self.values[i_lo:i_hi, j_lo:j_hi]
        upd = init & ~(cur >= conf)  # NaN compares False, so unseen cells take conf
        cur[upd] = conf[upd]

    def observed(self) -> np.ndarray:
        """Flat array of confidences of observed cells."""
        return self.values[np.isfinite(self.values)]

    def __len__(self) -> int:
        return int(np.isfinite(self.values).sum())

    def as_dict(self) -> dict[tuple[int, int], float]:
        ii, jj = np.nonzero(np.isfinite(self.values))
        return {(int(i), int(j)): float(self.values[i, j]) for i, j in zip(ii, jj)}


def fold_into_global(global_map: GlobalConfidenceMap, local: LocalMap) -> GlobalConfidenceMap:
    global_map.fold(local)
    return global_map

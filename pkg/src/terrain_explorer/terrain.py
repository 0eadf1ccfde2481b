"""Procedural lunar ground truth: an analytic heightfield built from a smooth
base, a global tilt and parametric craters, rocks and ridges."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import _kernels as K


class ConfigurationError(ValueError):
    """Raised for invalid terrain, sensor or experiment configuration."""


@dataclass
class CraterSpec:
    x: float
    y: float
    radius: float
    depth: float
    rim: float = 0.0


@dataclass
class RockSpec:
    x: float
    y: float
    radius: float
    height: float


@dataclass
class RidgeSpec:
    x0: float
    y0: float
    x1: float
    y1: float
    height: float
    slope_deg: float


@dataclass
class TerrainConfig:
    extent_x: float = 100.0
    extent_y: float = 100.0
    resolution: float = 0.1  # only used for dense export
    seed: int = 0
    # smooth base: sum of random plane waves
    base_amplitude: float = 0.0
    base_wavelength: tuple[float, float] = (8.0, 30.0)
    base_waves: int = 4
    tilt_deg: float = 0.0
    tilt_heading_deg: float = 0.0
    craters: list[CraterSpec] = field(default_factory=list)
    rocks: list[RockSpec] = field(default_factory=list)
    ridges: list[RidgeSpec] = field(default_factory=list)
    # procedurally placed features
    random_craters: int = 0
    crater_radius: tuple[float, float] = (2.0, 6.0)
    crater_depth_ratio: tuple[float, float] = (0.2, 0.5)
    crater_rim_ratio: float = 0.1
    random_rocks: int = 0
    rock_radius: tuple[float, float] = (0.2, 0.5)
    rock_height: tuple[float, float] = (0.2, 0.6)
    spawn_points: list[tuple[float, float]] = field(default_factory=list)
    spawn_clear_radius: float = 3.0

    @classmethod
    def from_dict(cls, data: dict) -> "TerrainConfig":
        data = dict(data)
        data["craters"] = [CraterSpec(**c) for c in data.get("craters", [])]
        data["rocks"] = [RockSpec(**r) for r in data.get("rocks", [])]
        data["ridges"] = [RidgeSpec(**r) for r in data.get("ridges", [])]
        for key in ("base_wavelength", "crater_radius", "crater_depth_ratio", "rock_radius", "rock_height"):
            if key in data:
                data[key] = tuple(data[key])
        if "spawn_points" in data:
            data["spawn_points"] = [tuple(p) for p in data["spawn_points"]]
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown terrain keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> "TerrainConfig":
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
        return cls.from_dict(data.get("terrain", data))


def _support(kind: int, row: np.ndarray) -> tuple[float, float, float, float]:
    """Axis-aligned bounding box (xmin, ymin, xmax, ymax) of a feature."""
    if kind in (K.CRATER, K.ROCK):
        r = row[4]
        return row[1] - r, row[2] - r, row[1] + r, row[2] + r
    reach = row[6] / row[7]
    return (min(row[1], row[4]) - reach, min(row[2], row[5]) - reach,
            max(row[1], row[4]) + reach, max(row[2], row[5]) + reach)


def _dist_to_feature(kind: int, row: np.ndarray, x: float, y: float) -> float:
    """Distance from (x, y) to the edge of a feature's support (<= 0 inside)."""
    if kind in (K.CRATER, K.ROCK):
        return math.hypot(x - row[1], y - row[2]) - row[4]
    ax, ay, bx, by = row[1], row[2], row[4], row[5]
    ex, ey = bx - ax, by - ay
    L2 = ex * ex + ey * ey
    t = 0.0 if L2 == 0 else min(1.0, max(0.0, ((x - ax) * ex + (y - ay) * ey) / L2))
    return math.hypot(x - ax - t * ex, y - ay - t * ey) - row[6] / row[7]


class GroundTruthTerrain:
    """Immutable analytic heightfield over [0, extent_x] x [0, extent_y]."""

    tile_size = 4.0
    bound_size = 1.0

    def __init__(self, config: TerrainConfig, seed: int, waves: np.ndarray, tilt: np.ndarray,
                 features: np.ndarray):
        self.config = config
        self.seed = seed
        self.extent_x = float(config.extent_x)
        self.extent_y = float(config.extent_y)
        self.waves = np.ascontiguousarray(waves, dtype=np.float64).reshape(-1, 4)
        self.tilt = np.ascontiguousarray(tilt, dtype=np.float64)
        self.features = np.ascontiguousarray(features, dtype=np.float64).reshape(-1, 8)
        self._build_tiles()
        self.h_max = self._bound_height()

    def _build_tiles(self) -> None:
        ts = self.tile_size
        self.ntx = max(1, int(math.ceil(self.extent_x / ts)))
        self.nty = max(1, int(math.ceil(self.extent_y / ts)))
        buckets: list[list[int]] = [[] for _ in range(self.ntx * self.nty)]
        for idx, row in enumerate(self.features):
            x0, y0, x1, y1 = _support(int(row[0]), row)
            for tx in range(max(0, int(x0 // ts)), min(self.ntx - 1, int(x1 // ts)) + 1):
                for ty in range(max(0, int(y0 // ts)), min(self.nty - 1, int(y1 // ts)) + 1):
                    buckets[tx * self.nty + ty].append(idx)
        ptr = np.zeros(len(buckets) + 1, dtype=np.int64)
        ptr[1:] = np.cumsum([len(b) for b in buckets])
        self.tile_ptr = ptr
        self.tile_idx = np.array([i for b in buckets for i in b], dtype=np.int64)

    def _bound_height(self) -> float:
        """Upper bounds on the height per 1 m cell, used to skip empty sky.

        Dense samples plus a margin for the rise between samples. Also keeps a
        per-cell bound on the gradient norm for adaptive ray stepping.
        """
        bs = self.bound_size
        spacing = 0.1
        nbx = max(1, int(math.ceil(self.extent_x / bs)))
        nby = max(1, int(math.ceil(self.extent_y / bs)))
        per = int(round(bs / spacing))
        xs = (np.arange(nbx * per + 1)) * spacing
        ys = (np.arange(nby * per + 1)) * spacing
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        h, gx, gy = K.heights(X.ravel().copy(), Y.ravel().copy(), *self._args)
        h = h.reshape(X.shape)
        g = np.hypot(gx, gy).reshape(X.shape)
        bound = np.empty((nbx, nby))
        slope = np.empty((nbx, nby))
        for a in range(nbx):
            block_h = h[a * per:(a + 1) * per + 1]
            block_g = g[a * per:(a + 1) * per + 1]
            for b in range(nby):
                bound[a, b] = block_h[:, b * per:(b + 1) * per + 1].max()
                slope[a, b] = block_g[:, b * per:(b + 1) * per + 1].max()
        # sampled max gradient plus headroom for what the samples miss
        self.slope_grid = 1.25 * slope + 0.05
        self.bound_grid = bound + spacing * self.slope_grid + 0.01
        self.h_min = float(h.min() - spacing * self.slope_grid.max() - 0.01)
        return float(self.bound_grid.max())

    @property
    def _args(self):
        return (self.waves, self.tilt, self.features, self.tile_size, self.ntx, self.nty,
                self.tile_ptr, self.tile_idx)

    def height(self, x, y):
        """Ground height at map coordinates; accepts scalars or arrays."""
        xs = np.asarray(x, dtype=np.float64)
        ys = np.asarray(y, dtype=np.float64)
        shape = np.broadcast_shapes(xs.shape, ys.shape)
        xs = np.ascontiguousarray(np.broadcast_to(xs, shape)).ravel()
        ys = np.ascontiguousarray(np.broadcast_to(ys, shape)).ravel()
        h, _, _ = K.heights(xs, ys, *self._args)
        if shape == ():
            return float(h[0])
        return h.reshape(shape)

    def gradient(self, x: float, y: float) -> tuple[float, float]:
        _, gx, gy = K.height_grad(float(x), float(y), *self._args)
        return gx, gy

    def slope_deg(self, x: float, y: float) -> float:
        gx, gy = self.gradient(x, y)
        return math.degrees(math.atan(math.hypot(gx, gy)))

    def footprint_step(self, x: float, y: float, radius: float, rings: int = 3, spokes: int = 12) -> float:
        return K.footprint_step(float(x), float(y), float(radius), rings, spokes, *self._args)

    def contains(self, x: float, y: float) -> bool:
        return 0.0 <= x <= self.extent_x and 0.0 <= y <= self.extent_y

    def raster(self, resolution: float | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Dense height grid sampled at cell centres, rows along x."""
        res = resolution or self.config.resolution
        xs = (np.arange(int(round(self.extent_x / res))) + 0.5) * res
        ys = (np.arange(int(round(self.extent_y / res))) + 0.5) * res
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        return xs, ys, self.height(X, Y)

    def export_csv(self, path: str | Path, resolution: float | None = None) -> None:
        res = resolution or self.config.resolution
        xs, ys, H = self.raster(res)
        with open(path, "w") as fh:
            fh.write(f"# extent_x={self.extent_x!r},extent_y={self.extent_y!r},"
                     f"resolution={res!r},rows={H.shape[0]},cols={H.shape[1]},seed={self.seed}\n")
            np.savetxt(fh, H, delimiter=",", fmt="%.6f")


def crater_profile(rho: float, radius: float, depth: float, rim: float = 0.0) -> float:
    """Crater height offset at radial distance rho (zero outside the radius)."""
    if rho >= radius:
        return 0.0
    u = rho / radius
    return -depth * (1.0 - u * u) ** 2 + rim * math.sin(math.pi * u * u) ** 2


def _validate(config: TerrainConfig) -> None:
    if config.extent_x <= 0 or config.extent_y <= 0:
        raise ConfigurationError("terrain extents must be positive")
    if config.resolution <= 0:
        raise ConfigurationError("resolution must be positive")
    half = min(config.extent_x, config.extent_y) / 2.0
    radii = [c.radius for c in config.craters]
    if config.random_craters:
        radii.append(config.crater_radius[1])
    for r in radii:
        if r <= 0 or r >= half:
            raise ConfigurationError(f"crater radius {r} must be in (0, {half})")
    for rk in config.rocks:
        if rk.radius <= 0 or rk.height < 0:
            raise ConfigurationError("rock radius must be positive and height non-negative")
    for rg in config.ridges:
        if not 0 < rg.slope_deg < 90 or rg.height <= 0:
            raise ConfigurationError("ridge needs height > 0 and slope in (0, 90) deg")
    for sx, sy in config.spawn_points:
        if not (0 <= sx <= config.extent_x and 0 <= sy <= config.extent_y):
            raise ConfigurationError(f"spawn point {(sx, sy)} outside the arena")


def _rows_from_specs(config: TerrainConfig) -> list[np.ndarray]:
    rows = []
    for c in config.craters:
        rows.append(np.array([K.CRATER, c.x, c.y, c.radius, c.radius, c.depth, c.rim, 0.0]))
    for r in config.rocks:
        rows.append(np.array([K.ROCK, r.x, r.y, r.radius, r.radius, r.height, 0.0, 0.0]))
    for g in config.ridges:
        rows.append(np.array([K.RIDGE, g.x0, g.y0, 0.0, g.x1, g.y1, g.height,
                              math.tan(math.radians(g.slope_deg))]))
    return rows


def _clear_of_spawns(kind: int, row: np.ndarray, config: TerrainConfig) -> bool:
    return all(_dist_to_feature(kind, row, sx, sy) > config.spawn_clear_radius
               for sx, sy in config.spawn_points)


def generate_terrain(config: TerrainConfig, seed: int | None = None) -> GroundTruthTerrain:
    """Build the deterministic ground truth for `config` and `seed`."""
    _validate(config)
    seed = config.seed if seed is None else int(seed)
    rng = np.random.default_rng(seed)

    rows = _rows_from_specs(config)
    for row in rows:
        if not _clear_of_spawns(int(row[0]), row, config):
            raise ConfigurationError("explicit feature overlaps a spawn-clear zone")

    waves = np.zeros((0, 4))
    if config.base_amplitude > 0 and config.base_waves > 0:
        lo, hi = config.base_wavelength
        lam = rng.uniform(lo, hi, config.base_waves)
        ang = rng.uniform(0.0, 2 * math.pi, config.base_waves)
        phase = rng.uniform(0.0, 2 * math.pi, config.base_waves)
        amp = config.base_amplitude / math.sqrt(config.base_waves) * rng.uniform(0.5, 1.0, config.base_waves)
        k = 2 * math.pi / lam
        waves = np.column_stack([amp, k * np.cos(ang), k * np.sin(ang), phase])

    t = math.tan(math.radians(config.tilt_deg))
    psi = math.radians(config.tilt_heading_deg)
    tilt = np.array([t * math.cos(psi), t * math.sin(psi)])

    def place(n, make):
        placed = 0
        attempts = 0
        while placed < n and attempts < 200 * max(n, 1):
            attempts += 1
            row = make()
            if _clear_of_spawns(int(row[0]), row, config):
                rows.append(row)
                placed += 1

    def make_crater():
        r = rng.uniform(*config.crater_radius)
        d = r * rng.uniform(*config.crater_depth_ratio)
        x = rng.uniform(r, config.extent_x - r)
        y = rng.uniform(r, config.extent_y - r)
        return np.array([K.CRATER, x, y, r, r, d, d * config.crater_rim_ratio, 0.0])

    def make_rock():
        r = rng.uniform(*config.rock_radius)
        h = rng.uniform(*config.rock_height)
        x = rng.uniform(0.0, config.extent_x)
        y = rng.uniform(0.0, config.extent_y)
        return np.array([K.ROCK, x, y, r, r, h, 0.0, 0.0])

    place(config.random_craters, make_crater)
    place(config.random_rocks, make_rock)

    feats = np.array(rows) if rows else np.zeros((0, 8))
    return GroundTruthTerrain(config, seed, waves, tilt, feats)

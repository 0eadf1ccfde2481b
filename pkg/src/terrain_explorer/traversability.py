"""Geometric traversability: PCA slope, roughness and step height over a
square neighbourhood of filtered elevations, combined into a weighted cost."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .elevation_map import LocalMap, write_layer_csv


@dataclass(frozen=True)
class TraversabilityParams:
    weights: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    slope_crit_deg: float = 20.0
    roughness_crit: float = 0.15
    step_crit: float = 0.2
    t_max: float = 0.4
    half_width: int = 2

    def __post_init__(self):
        w = tuple(float(x) for x in self.weights)
        if len(w) != 3 or any(not 0.0 <= x <= 1.0 for x in w) or abs(sum(w) - 1.0) > 1e-9:
            raise ValueError("weights must lie in [0, 1] and sum to 1")
        if min(self.slope_crit_deg, self.roughness_crit, self.step_crit, self.t_max) <= 0:
            raise ValueError("thresholds must be positive")
        if self.half_width < 0:
            raise ValueError("half_width must be non-negative")
        object.__setattr__(self, "weights", w)


@dataclass(frozen=True)
class NeighborhoodWindow:
    center: tuple[int, int]
    half_width: int
    heights: np.ndarray  # (2n+1, 2n+1), NaN where missing
    complete: bool


@dataclass(frozen=True)
class TerrainAttributes:
    slope: float
    roughness: float
    step: float
    cost: float
    valid: bool


def extract_window(local: LocalMap, cell: tuple[int, int], n: int) -> NeighborhoodWindow:
    """Block of elevations around local cell (a, b); incomplete if any member
    is uninitialized or falls outside the local window."""
    a, b = cell
    size = 2 * n + 1
    heights = np.full((size, size), np.nan)
    complete = True
    elev = local.elevation_window()
    init = local.initialized_window()
    for u in range(size):
        for v in range(size):
            p, q = a - n + u, b - n + v
            if 0 <= p < local.size and 0 <= q < local.size and init[p, q]:
                heights[u, v] = elev[p, q]
            else:
                complete = False
    return NeighborhoodWindow((a, b), n, heights, complete)


def _window_array(window) -> np.ndarray:
    h = window.heights if isinstance(window, NeighborhoodWindow) else np.asarray(window, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] != h.shape[1] or h.shape[0] % 2 == 0:
        raise ValueError("window must be a square of odd side")
    if isinstance(window, NeighborhoodWindow) and not window.complete:
        raise ValueError("window is incomplete")
    return h


def _slope_from_moments(g, p, q, c):
    """Slope in degrees of the plane normal from the point covariance
    [[g, 0, p], [0, g, q], [p, q, c]].

    (q, -p, 0) is an eigenvector with eigenvalue g. The other two eigenvalues
    come from the 2x2 block [[g, s], [s, c]] with s = |(p, q)|, and the
    smaller of them is the smallest overall. Works elementwise on arrays.
    """
    g, p, q, c = np.broadcast_arrays(*(np.asarray(x, dtype=np.float64) for x in (g, p, q, c)))
    s = np.hypot(p, q)
    half_sum = 0.5 * (g + c)
    rad = np.hypot(0.5 * (g - c), s)
    mu_hi = half_sum + rad
    with np.errstate(invalid="ignore", divide="ignore"):
        mu_lo = np.where(mu_hi > 0, (g * c - s * s) / mu_hi, 0.0)
    lam1 = np.maximum(mu_hi, g)
    lam2 = np.minimum(mu_hi, g)
    degenerate = (lam2 - mu_lo) < 1e-12 * lam1
    slope = np.degrees(np.arctan2(s, g - mu_lo))
    # tie between the two smallest: the normal is ambiguous, take the
    # candidate closest to vertical
    flat_pair = degenerate & (s == 0)
    # with s == 0 the candidates are e_z (if c is among the smallest) or the
    # horizontal axes
    slope = np.where(flat_pair, np.where(c <= g, 0.0, 90.0), slope)
    slope = np.where(lam1 == 0, 0.0, slope)
    return slope


def slope_deg(window, resolution: float) -> float:
    """Angle between the smallest-variance principal axis and vertical."""
    h = _window_array(window)
    n = h.shape[0] // 2
    if n == 0:
        return 0.0
    k = np.arange(-n, n + 1) * resolution
    z = h - h[n, n]
    z = z - z.mean()
    size = (2 * n + 1) ** 2
    g = resolution * resolution * n * (n + 1) / 3.0
    p = float((k[:, None] * z).sum() / size)
    q = float((k[None, :] * z).sum() / size)
    c = float((z * z).sum() / size)
    return float(_slope_from_moments(g, p, q, c))


def roughness_m(window) -> float:
    h = _window_array(window)
    n = h.shape[0] // 2
    if n == 0:
        return 0.0
    return float(np.abs(h - h[n, n]).sum() / (h.size - 1))


def step_height_m(window) -> float:
    h = _window_array(window)
    n = h.shape[0] // 2
    return float(np.abs(h - h[n, n]).max())


def traversability_cost(s: float, r: float, d: float, params: TraversabilityParams) -> float:
    w1, w2, w3 = params.weights
    return w1 * s / params.slope_crit_deg + w2 * r / params.roughness_crit + w3 * d / params.step_crit


def cell_attributes(window, resolution: float, params: TraversabilityParams) -> TerrainAttributes:
    if isinstance(window, NeighborhoodWindow) and not window.complete:
        nan = math.nan
        return TerrainAttributes(nan, nan, nan, nan, False)
    s, r, d = slope_deg(window, resolution), roughness_m(window), step_height_m(window)
    return TerrainAttributes(s, r, d, traversability_cost(s, r, d, params), True)


@dataclass
class AttributeLayer:
    """Per-cell attributes over a local window. Arrays are indexed by local
    cell; `corner` is the store index of local (0, 0)."""

    slope: np.ndarray
    roughness: np.ndarray
    step: np.ndarray
    cost: np.ndarray
    valid: np.ndarray
    corner: tuple[int, int]
    origin: tuple[float, float]
    resolution: float

    def traversable(self, t_max: float) -> np.ndarray:
        return self.valid & (np.nan_to_num(self.cost, nan=np.inf) <= t_max)

    def at(self, a: int, b: int) -> TerrainAttributes:
        return TerrainAttributes(float(self.slope[a, b]), float(self.roughness[a, b]),
                                 float(self.step[a, b]), float(self.cost[a, b]), bool(self.valid[a, b]))

    def export_csv(self, path_prefix: str | Path) -> list[Path]:
        paths = []
        layers = {"slope": self.slope, "roughness": self.roughness, "step": self.step,
                  "cost": self.cost}
        for name, arr in layers.items():
            path = Path(f"{path_prefix}_{name}.csv")
            write_layer_csv(path, arr, self.valid, self.origin, self.resolution)
            paths.append(path)
        path = Path(f"{path_prefix}_valid.csv")
        write_layer_csv(path, self.valid.astype(np.float64), np.ones_like(self.valid),
                        self.origin, self.resolution)
        paths.append(path)
        return paths


def attributes_from_heights(elev: np.ndarray, init: np.ndarray, resolution: float,
                            params: TraversabilityParams):
    """Vectorised attributes for every cell of a height grid.

    Returns (slope, roughness, step, cost, valid); invalid cells hold NaN.
    """
    n = params.half_width
    rows, cols = elev.shape
    shape = (rows, cols)
    out = [np.full(shape, np.nan) for _ in range(4)]
    valid = np.zeros(shape, dtype=bool)
    size = 2 * n + 1
    if rows < size or cols < size:
        return (*out, valid)
    inner = (slice(n, rows - n), slice(n, cols - n))
    complete = sliding_window_view(init, (size, size)).all(axis=(2, 3))
    complete &= init[inner]
    if not complete.any():
        return (*out, valid)
    filled = np.where(init, elev, 0.0)
    win = sliding_window_view(filled, (size, size))[complete]  # (m, size, size)
    center = win[:, n, n]
    dev = win - center[:, None, None]
    absdev = np.abs(dev)
    if n == 0:
        slope = np.zeros(len(win))
        rough = np.zeros(len(win))
        step = absdev.reshape(len(win), -1).max(axis=1)
    else:
        k = np.arange(-n, n + 1) * resolution
        z = dev - dev.mean(axis=(1, 2))[:, None, None]
        m2 = size * size
        g = resolution * resolution * n * (n + 1) / 3.0
        p = np.einsum("i,mij->m", k, z) / m2
        q = np.einsum("j,mij->m", k, z) / m2
        c = np.einsum("mij,mij->m", z, z) / m2
        slope = _slope_from_moments(g, p, q, c)
        rough = absdev.sum(axis=(1, 2)) / (m2 - 1)
        step = absdev.max(axis=(1, 2))
    w1, w2, w3 = params.weights
    cost = w1 * slope / params.slope_crit_deg + w2 * rough / params.roughness_crit + w3 * step / params.step_crit
    for arr, vals in zip(out, (slope, rough, step, cost)):
        sub = arr[inner]
        sub[complete] = vals
    valid[inner] = complete
    return (*out, valid)


def attribute_layer(local: LocalMap, params: TraversabilityParams) -> AttributeLayer:
    """Attributes for every local cell with a complete neighbourhood."""
    slope, rough, step, cost, valid = attributes_from_heights(
        local.elevation_window(), local.initialized_window(), local.resolution, params)
    return AttributeLayer(slope, rough, step, cost, valid, local.corner, local.window_origin(),
                          local.resolution)

"""Confidence-aware local exploration planner.

One planning iteration samples footprint-safe vertices, grows a random graph
around the robot, runs Dijkstra from the robot, scores every shortest path by
volumetric gain times confidence gain and returns the best one, shortcut.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import _kernels as K
from .elevation_map import LocalMap, confidence_of
from .exploration import ExplorationGrid
from .grid import grid_index
from .traversability import AttributeLayer


@dataclass(frozen=True)
class PlannerParams:
    t_max: float = 0.4
    robot_radius: float = 0.3
    confidence_threshold: float = 0.8
    beta: float = 2.0
    vertex_budget: int = 200
    connection_radius: float = 2.0
    rejection_budget: int = 1000
    # corridor check spacing as a fraction of the map resolution
    check_fraction: float = 0.5
    gain_range: float = 30.0
    gain_vfov_deg: float = 15.0
    sensor_height: float = 0.8
    # ablation toggles
    traversability_sampling: bool = True
    confidence_gain: bool = True
    optimize_path: bool = True

    def __post_init__(self):
        if not 0.0 <= self.confidence_threshold <= 1.0:
            raise ValueError("confidence threshold must lie in [0, 1]")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.robot_radius <= 0 or self.connection_radius <= 0:
            raise ValueError("radii must be positive")
        if self.vertex_budget < 0 or self.rejection_budget < 1:
            raise ValueError("budgets must be non-negative")


@dataclass
class Vertex:
    id: int
    position: np.ndarray  # x, y, z
    heading: float
    confidence: float
    cell: tuple[int, int]


@dataclass
class LocalGraph:
    vertices: list[Vertex]
    edges: list[tuple[int, int, float]]
    status: str = "ok"  # ok | sampling_failed | pool_exhausted
    # False when the robot's own footprint is not clear; edges then ignore
    # the disc of radius `exempt` around the root
    root_safe: bool = True
    exempt: float = 0.0

    @property
    def root(self) -> Vertex:
        return self.vertices[0]

    def adjacency(self) -> list[list[tuple[int, float]]]:
        adj: list[list[tuple[int, float]]] = [[] for _ in self.vertices]
        for a, b, w in self.edges:
            adj[a].append((b, w))
            adj[b].append((a, w))
        return adj


@dataclass
class CandidatePath:
    vertices: list[int]
    length: float
    volumetric_gain: float = 0.0
    confidence_gain: float = 1.0

    @property
    def gain(self) -> float:
        return combined_gain(self)


@dataclass
class PlanResult:
    path: CandidatePath | None
    waypoints: np.ndarray  # (k, 3) map positions from the root, after shortcutting
    graph: LocalGraph
    candidates: list[CandidatePath] = field(default_factory=list)
    safe: np.ndarray | None = None
    corner: tuple[int, int] = (0, 0)
    resolution: float = 1.0

    def waypoints_for(self, path: CandidatePath, params: PlannerParams) -> np.ndarray:
        """Vertex positions along a path, shortcut if enabled."""
        pts = np.array([self.graph.vertices[v].position for v in path.vertices])
        if params.optimize_path and self.safe is not None:
            i0, j0 = self.corner
            step = params.check_fraction * self.resolution
            safe, res = self.safe, self.resolution

            r = self.graph.root.position
            ex = self.graph.exempt

            def clear(p, q):
                return K.corridor_safe(p[0], p[1], q[0], q[1], safe, i0, j0, res, step, r[0], r[1], ex)

            pts = optimize_path(pts, clear)
        return pts

    @property
    def found(self) -> bool:
        return self.path is not None


def footprint_offsets(robot_radius: float, resolution: float) -> list[tuple[int, int]]:
    """Lattice offsets within the robot disc, F = ceil(r / resolution)."""
    if robot_radius <= 0 or resolution <= 0:
        raise ValueError("radius and resolution must be positive")
    F = math.ceil(robot_radius / resolution)
    return [(di, dj) for di in range(-F, F + 1) for dj in range(-F, F + 1) if di * di + dj * dj <= F * F]


def footprint_kernel(robot_radius: float, resolution: float) -> np.ndarray:
    F = math.ceil(robot_radius / resolution)
    k = np.zeros((2 * F + 1, 2 * F + 1), dtype=bool)
    for di, dj in footprint_offsets(robot_radius, resolution):
        k[di + F, dj + F] = True
    return k


def safe_mask(layer: AttributeLayer, params: PlannerParams, initialized: np.ndarray | None = None) -> np.ndarray:
    """Local cells where a robot centred in the cell passes the check.

    With the traversability gate on, every footprint cell must be valid with
    cost <= t_max. With it off only the centre cell needs to be observed.
    """
    if not params.traversability_sampling:
        if initialized is None:
            raise ValueError("ungated sampling needs the initialized mask")
        return initialized.copy()
    ok = layer.traversable(params.t_max)
    return ndimage.binary_erosion(ok, structure=footprint_kernel(params.robot_radius, layer.resolution),
                                  border_value=0)


def sample_traversable_vertex(layer: AttributeLayer, params: PlannerParams, bounds, rng: np.random.Generator,
                              safe: np.ndarray | None = None, initialized: np.ndarray | None = None):
    """Draw uniform positions in bounds = (x_lo, y_lo, x_hi, y_hi) until one
    passes the footprint check. Returns (x, y) or None when the rejection
    budget runs out."""
    if safe is None:
        safe = safe_mask(layer, params, initialized)
    x_lo, y_lo, x_hi, y_hi = bounds
    i0, j0 = layer.corner
    for _ in range(params.rejection_budget):
        x, y = rng.uniform((x_lo, y_lo), (x_hi, y_hi))
        if K.point_safe(x, y, safe, i0, j0, layer.resolution):
            return float(x), float(y)
    return None


def footprint_ok(x: float, y: float, layer: AttributeLayer, params: PlannerParams) -> bool:
    """Direct check of every footprint cell; independent of the safe mask."""
    i, j = grid_index(x, y, layer.resolution)
    a0, b0 = i - layer.corner[0], j - layer.corner[1]
    rows, cols = layer.cost.shape
    for di, dj in footprint_offsets(params.robot_radius, layer.resolution):
        a, b = a0 + di, b0 + dj
        if not (0 <= a < rows and 0 <= b < cols):
            return False
        if not layer.valid[a, b] or not layer.cost[a, b] <= params.t_max:
            return False
    return True


def sampling_bounds(local: LocalMap, params: PlannerParams) -> tuple[float, float, float, float]:
    x0, y0 = local.window_origin()
    span = local.size * local.resolution
    m = params.robot_radius
    return x0 + m, y0 + m, x0 + span - m, y0 + span - m


def build_local_graph(root, layer: AttributeLayer, local: LocalMap, params: PlannerParams,
                      rng: np.random.Generator, safe: np.ndarray | None = None) -> LocalGraph:
    """Grow a random graph of footprint-safe vertices around the root.

    root is (x, y[, heading]). Vertex confidences start at the map confidence
    of their cell.
    """
    if safe is None:
        safe = safe_mask(layer, params, local.initialized_window())
    i0, j0 = layer.corner
    res = layer.resolution
    rx, ry = float(root[0]), float(root[1])
    heading = float(root[2]) if len(root) > 2 else 0.0
    root_vertex = _make_vertex(0, rx, ry, heading, local)
    root_safe = bool(K.point_safe(rx, ry, safe, i0, j0, res))
    exempt = -1.0 if root_safe else (math.ceil(params.robot_radius / res) + 1) * res
    bounds = sampling_bounds(local, params)
    pool = max(1, params.vertex_budget) * 40
    candidates = rng.uniform(bounds[:2], bounds[2:], size=(pool, 2))
    verts, parent, edges, status = K.build_graph(
        np.array([rx, ry]), candidates, safe, i0, j0, res, params.check_fraction * res,
        params.connection_radius, params.connection_radius, params.vertex_budget,
        params.rejection_budget, exempt)
    vertices = [root_vertex]
    for v in range(1, len(verts)):
        p = parent[v]
        h = math.atan2(verts[v, 1] - verts[p, 1], verts[v, 0] - verts[p, 0])
        vertices.append(_make_vertex(v, verts[v, 0], verts[v, 1], h, local))
    edge_list = [(int(a), int(b), float(math.dist(verts[a], verts[b]))) for a, b in edges]
    return LocalGraph(vertices, edge_list, ("ok", "sampling_failed", "pool_exhausted")[status],
                      root_safe, max(exempt, 0.0))


def _make_vertex(vid: int, x: float, y: float, heading: float, local: LocalMap) -> Vertex:
    cell = local.store.index(x, y)
    c = local.cell(*cell)
    z = c.elevation if c.initialized else math.nan
    return Vertex(vid, np.array([x, y, z]), heading, c.confidence, cell)


def update_vertex_confidence(graph: LocalGraph, local: LocalMap) -> LocalGraph:
    for v in graph.vertices:
        c = local.cell(*v.cell)
        if c.initialized:
            v.confidence = max(v.confidence, confidence_of(c.variance))
    return graph


def shortest_paths(graph: LocalGraph) -> list[CandidatePath]:
    """Dijkstra from the root; one path per reachable non-root vertex, in
    vertex-id order."""
    n = len(graph.vertices)
    adj = graph.adjacency()
    dist = [math.inf] * n
    prev = [-1] * n
    dist[0] = 0.0
    heap = [(0.0, 0)]
    done = [False] * n
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        for v, w in adj[u]:
            nd = d + w
            if nd < dist[v]:
                dist[v] = nd
                prev[v] = u
                heapq.heappush(heap, (nd, v))
    paths = []
    for v in range(1, n):
        if not math.isfinite(dist[v]):
            continue
        seq = [v]
        while seq[-1] != 0:
            seq.append(prev[seq[-1]])
        paths.append(CandidatePath(seq[::-1], dist[v]))
    return paths


def volumetric_gain(view, grid: ExplorationGrid, params: PlannerParams) -> float:
    """Volume of unknown voxels visible from a viewpoint."""
    return grid.visible_unknown(view, params.gain_range, params.gain_vfov_deg) * grid.voxel_volume


def confidence_gain(confidences, threshold: float, beta: float) -> float:
    """max over vertices of 1 (confident) or exp(beta * (threshold - c))."""
    best = 1.0
    for c in confidences:
        g = 1.0 if c >= threshold else math.exp(beta * (threshold - c))
        if g > best:
            best = g
    return best


def combined_gain(path: CandidatePath) -> float:
    return path.volumetric_gain * path.confidence_gain


def select_best(paths: list[CandidatePath]) -> CandidatePath | None:
    """First path with the strictly largest positive combined gain."""
    best, best_gain = None, 0.0
    for p in paths:
        g = combined_gain(p)
        if g > best_gain:
            best, best_gain = p, g
    return best


def optimize_path(points: np.ndarray, clear) -> np.ndarray:
    """Greedy shortcutting: from each kept point jump to the farthest later
    point whose straight corridor is clear."""
    if len(points) <= 2:
        return points
    keep = [0]
    a = 0
    while a < len(points) - 1:
        b = len(points) - 1
        while b > a + 1 and not clear(points[a], points[b]):
            b -= 1
        keep.append(b)
        a = b
    return points[keep]


def plan_local(root, local: LocalMap, layer: AttributeLayer, grid: ExplorationGrid,
               params: PlannerParams, rng: np.random.Generator) -> PlanResult:
    safe = safe_mask(layer, params, local.initialized_window())
    graph = build_local_graph(root, layer, local, params, rng, safe)
    update_vertex_confidence(graph, local)
    paths = shortest_paths(graph)
    out = PlanResult(None, np.zeros((0, 3)), graph, paths, safe, layer.corner, layer.resolution)
    if not paths:
        return out
    # per-vertex gains once per graph, consumed at path terminals
    vgain = {}
    for p in paths:
        t = p.vertices[-1]
        if t not in vgain:
            pos = graph.vertices[t].position
            vgain[t] = volumetric_gain((pos[0], pos[1], pos[2] + params.sensor_height), grid, params)
        p.volumetric_gain = vgain[t]
        if params.confidence_gain:
            p.confidence_gain = confidence_gain([graph.vertices[v].confidence for v in p.vertices],
                                                params.confidence_threshold, params.beta)
    best = select_best(paths)
    if best is not None:
        out.path = best
        out.waypoints = out.waypoints_for(best, params)
    return out


def trace_record(iteration: int, t: float, result: PlanResult) -> str:
    """One NDJSON line describing a planning iteration."""
    g = result.graph
    rec = {
        "iteration": iteration,
        "t": t,
        "status": g.status,
        "vertices": [[v.id, *map(_num, v.position), _num(v.confidence)] for v in g.vertices],
        "edges": [[a, b] for a, b, _ in g.edges],
        "paths": [{"terminal": p.vertices[-1], "length": _num(p.length), "g_vol": _num(p.volumetric_gain),
                   "g_conf": _num(p.confidence_gain)} for p in result.candidates],
        "selected": result.path.vertices if result.path else None,
        "waypoints": [[_num(c) for c in w] for w in result.waypoints],
    }
    return json.dumps(rec, separators=(",", ":"))


def _num(x) -> float | None:
    x = float(x)
    return round(x, 6) if math.isfinite(x) else None


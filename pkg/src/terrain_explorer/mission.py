"""Exploration episodes: sense, map, plan and drive until the battery budget
runs out, the robot tips over or it can no longer move."""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from .elevation_map import GlobalConfidenceMap, LocalMap
from .exploration import ExplorationGrid
from .grid import GridGeometry
from .metrics import ConfidenceHistogram
from .planner import PlannerParams, plan_local, trace_record
from .sensor import SensorModel, SensorPose, project_scan, rotation_from_rpy, simulate_scan
from .terrain import ConfigurationError, GroundTruthTerrain
from .traversability import TraversabilityParams, attribute_layer

COMPLETED = "completed"
TIPPED_OVER = "tipped_over"
STRANDED = "stranded"


@dataclass(frozen=True)
class BatteryModel:
    capacity_ah: float = 10.0
    initial_ah: float = 10.0
    c_rate: float = 1.44  # discharge current as a multiple of capacity, 1/h

    @property
    def current_a(self) -> float:
        return self.c_rate * self.capacity_ah


def soc_at(t: float, battery: BatteryModel = BatteryModel()) -> float:
    """State of charge in percent after t seconds at constant current."""
    if t < 0:
        raise ValueError("time must be non-negative")
    return 100.0 * battery.initial_ah / battery.capacity_ah - 100.0 * battery.c_rate * t / 3600.0


@dataclass(frozen=True)
class RobotState:
    position: np.ndarray
    heading: float = 0.0
    speed: float = 0.8
    radius: float = 0.3

    @property
    def xy(self) -> np.ndarray:
        return self.position[:2]


def place_robot(terrain: GroundTruthTerrain, x: float, y: float, heading: float = 0.0,
                speed: float = 0.8, radius: float = 0.3) -> RobotState:
    return RobotState(np.array([x, y, terrain.height(x, y)]), heading, speed, radius)


def step_execute(state: RobotState, target, dt: float, terrain: GroundTruthTerrain) -> tuple[RobotState, bool]:
    """Turn in place toward target, then drive toward it for dt seconds.

    Returns the new state and whether the target was reached.
    """
    tx, ty = float(target[0]), float(target[1])
    dx, dy = tx - state.position[0], ty - state.position[1]
    dist = math.hypot(dx, dy)
    if dist == 0.0:
        return state, True
    heading = math.atan2(dy, dx)
    travel = state.speed * dt
    if travel >= dist:
        x, y, arrived = tx, ty, True
    else:
        f = travel / dist
        x, y, arrived = state.position[0] + f * dx, state.position[1] + f * dy, False
    return replace(state, position=np.array([x, y, terrain.height(x, y)]), heading=heading), arrived


@dataclass(frozen=True)
class HazardLimits:
    max_slope_deg: float = 30.0
    max_step: float = 0.35


def hazard_check(state: RobotState, terrain: GroundTruthTerrain, limits: HazardLimits = HazardLimits()) -> str:
    x, y = state.position[0], state.position[1]
    if terrain.slope_deg(x, y) > limits.max_slope_deg:
        return TIPPED_OVER
    if terrain.footprint_step(x, y, state.radius) > limits.max_step:
        return TIPPED_OVER
    return "safe"


def sensor_pose(state: RobotState, terrain: GroundTruthTerrain, mount_height: float) -> SensorPose:
    """Sensor frame rigidly attached to a robot resting on the ground."""
    x, y = state.position[0], state.position[1]
    gx, gy = terrain.gradient(x, y)
    c, s = math.cos(state.heading), math.sin(state.heading)
    pitch = -math.atan(gx * c + gy * s)
    roll = math.atan(-gx * s + gy * c)
    R = rotation_from_rpy(roll, pitch, state.heading)
    return SensorPose(state.position + R @ np.array([0.0, 0.0, mount_height]), R)


@dataclass
class MissionConfig:
    duration: float = 2400.0
    dt: float = 0.1
    scan_interval: float = 1.0
    # longest stretch driven on one plan before replanning
    replan_interval: float = 3.0
    speed: float = 0.8
    idle_time: float = 1.0
    stranded_after: int = 10
    map_resolution: float = 0.1
    map_size: int = 151
    voxel_size: float = 0.4
    voxel_headroom: float = 3.0
    # beams are integrated into the voxel grid up to this range; None uses
    # the planner's gain range
    explore_range: float | None = None
    # cell size of the visited-ground grid used when every gain is zero
    visited_cell: float = 1.0
    # cells under the robot at spawn are seeded at its base height
    spawn_prior_radius: float = 1.0
    spawn_prior_variance: float = 0.04
    sensor: SensorModel = field(default_factory=SensorModel)
    traversability: TraversabilityParams = field(default_factory=TraversabilityParams)
    planner: PlannerParams = field(default_factory=PlannerParams)
    hazard: HazardLimits = field(default_factory=HazardLimits)
    battery: BatteryModel = field(default_factory=BatteryModel)

    def __post_init__(self):
        if self.dt <= 0 or self.scan_interval <= 0 or self.duration <= 0:
            raise ConfigurationError("time steps must be positive")
        if self.map_size % 2 == 0:
            raise ConfigurationError("map_size must be odd")


@dataclass
class MissionRecord:
    rows: list[dict]
    termination: str
    duration: float
    spawn: tuple[float, float, float]
    seed: int
    histogram: ConfidenceHistogram
    global_confidence: np.ndarray  # observed cells only, flat
    trajectory: np.ndarray  # (k, 4): t, x, y, heading at every step
    wall_clock: float = 0.0  # not serialized
    scans: int = 0
    dropped_observations: int = 0

    @property
    def completed(self) -> bool:
        return self.termination == COMPLETED

    def summary(self) -> dict:
        return {
            "record": "summary",
            "termination": self.termination,
            "duration": self.duration,
            "seed": self.seed,
            "spawn": list(self.spawn),
            "scans": self.scans,
            "dropped_observations": self.dropped_observations,
            "confidence_histogram": self.histogram.counts.tolist(),
            "observed_cells": int(self.global_confidence.size),
        }

    def to_jsonl(self) -> str:
        lines = [json.dumps({"record": "iteration", **r}, separators=(",", ":")) for r in self.rows]
        lines.append(json.dumps(self.summary(), separators=(",", ":")))
        return "\n".join(lines) + "\n"

    def save(self, stem: str | Path) -> None:
        stem = Path(stem)
        stem.parent.mkdir(parents=True, exist_ok=True)
        Path(f"{stem}.jsonl").write_text(self.to_jsonl())
        np.savez_compressed(f"{stem}.npz", global_confidence=self.global_confidence,
                            trajectory=self.trajectory)

    @classmethod
    def load(cls, stem: str | Path) -> "MissionRecord":
        rows, summary = [], None
        for line in Path(f"{stem}.jsonl").read_text().splitlines():
            rec = json.loads(line)
            kind = rec.pop("record")
            if kind == "summary":
                summary = rec
            else:
                rows.append(rec)
        if summary is None:
            raise ValueError(f"{stem}.jsonl has no summary record")
        data = np.load(f"{stem}.npz")
        return cls(rows, summary["termination"], summary["duration"], tuple(summary["spawn"]),
                   summary["seed"], ConfidenceHistogram(np.array(summary["confidence_histogram"])),
                   data["global_confidence"], data["trajectory"], scans=summary["scans"],
                   dropped_observations=summary["dropped_observations"])


class Episode:
    """State of one exploration run. run() drives it to termination."""

    def __init__(self, terrain: GroundTruthTerrain, config: MissionConfig, seed: int,
                 spawn: tuple[float, float, float], trace=None):
        self.terrain = terrain
        self.config = config
        self.seed = int(seed)
        self.spawn = tuple(float(v) for v in spawn)
        self.trace = trace
        self.rng = np.random.default_rng(self.seed)
        x, y, heading = self.spawn
        if not terrain.contains(x, y):
            raise ConfigurationError(f"spawn ({x}, {y}) is outside the arena")
        self.state = place_robot(terrain, x, y, heading, config.speed, config.planner.robot_radius)
        if hazard_check(self.state, terrain, config.hazard) != "safe":
            raise ConfigurationError(f"spawn ({x}, {y}) is not safe ground")
        store = GridGeometry.covering(terrain.extent_x, terrain.extent_y, config.map_resolution)
        self.local = LocalMap(store, config.map_size)
        self.local.recenter(x, y)
        self.global_map = GlobalConfidenceMap(store)
        self.explore = ExplorationGrid.covering(terrain.extent_x, terrain.extent_y,
                                                terrain.h_min - 2 * config.voxel_size,
                                                terrain.h_max + config.voxel_headroom,
                                                config.voxel_size)
        self.histogram = ConfidenceHistogram()
        self.t = 0.0
        self.rows: list[dict] = []
        self.traj: list[tuple[float, float, float, float]] = []
        self.scans = 0
        self.last_scan = -math.inf
        vc = config.visited_cell
        self.visited = np.zeros((math.ceil(terrain.extent_x / vc) + 1, math.ceil(terrain.extent_y / vc) + 1),
                                dtype=bool)
        self._seed_spawn_prior()

    def _seed_spawn_prior(self) -> None:
        cfg = self.config
        x, y = self.state.position[0], self.state.position[1]
        r = cfg.spawn_prior_radius
        res = cfg.map_resolution
        n = int(math.ceil(r / res)) + 1
        ci, cj = self.local.store.index(x, y)
        ii, jj = np.meshgrid(np.arange(ci - n, ci + n + 1), np.arange(cj - n, cj + n + 1), indexing="ij")
        cx, cy = self.local.store.center(ii, jj)
        inside = (np.hypot(cx - x, cy - y) <= r) & (ii >= 0) & (jj >= 0) \
            & (ii < self.local.store.size_x) & (jj < self.local.store.size_y)
        m = int(inside.sum())
        self.local.ingest(ii[inside], jj[inside], np.full(m, self.state.position[2]),
                          np.full(m, cfg.spawn_prior_variance))

    # sensing ---------------------------------------------------------------

    def sense(self) -> None:
        cfg = self.config
        pose = sensor_pose(self.state, self.terrain, cfg.sensor.mount_height)
        scan = simulate_scan(self.terrain, pose, cfg.sensor, self.rng, phase=self.scans)
        self.scans += 1
        self.last_scan = self.t
        self.local.recenter(self.state.position[0], self.state.position[1])
        i, j, z, var, pts = project_scan(scan, pose, self.local.store)
        self.local.ingest(i, j, z, var)
        reach = cfg.explore_range if cfg.explore_range is not None else cfg.planner.gain_range
        reach = min(reach, cfg.sensor.max_range)
        rel = pts - pose.position
        dist = np.linalg.norm(rel, axis=1)
        near = dist <= reach
        far_ends = pose.position + rel[~near] * (reach / dist[~near])[:, None]
        misses = pose.position + (scan.miss_dirs @ pose.rotation.T) * reach
        self.explore.integrate(pose.position, pts[near], np.vstack([misses, far_ends]))
        self.global_map.fold(self.local)
        self.histogram.add(self.local.confidence_window())

    # driving ---------------------------------------------------------------

    def _log_step(self) -> None:
        p = self.state.position
        self.traj.append((self.t, p[0], p[1], self.state.heading))
        vc = self.config.visited_cell
        self.visited[int(p[0] // vc), int(p[1] // vc)] = True

    def _reposition(self, result):
        """Fallback when every path has zero gain: head for the graph vertex
        farthest from ground already driven over, longest path on ties."""
        if not result.candidates:
            return None
        far = ndimage.distance_transform_edt(~self.visited) * self.config.visited_cell
        vc = self.config.visited_cell
        best, key = None, None
        for p in result.candidates:
            x, y = result.graph.vertices[p.vertices[-1]].position[:2]
            k = (far[int(x // vc), int(y // vc)], p.length)
            if key is None or k > key:
                best, key = p, k
        return result.waypoints_for(best, self.config.planner)

    def _advance(self, seconds: float, target=None) -> str | None:
        """Drive toward target (or wait) for up to `seconds`, scanning on
        schedule. Returns a termination cause or None."""
        cfg = self.config
        end = min(self.t + seconds, cfg.duration)
        arrived = target is None
        while self.t < end - 1e-9:
            dt = min(cfg.dt, end - self.t)
            if not arrived:
                self.state, arrived = step_execute(self.state, target, dt, self.terrain)
            self.t = round(self.t + dt, 9)
            self._log_step()
            if hazard_check(self.state, self.terrain, cfg.hazard) != "safe":
                return TIPPED_OVER
            if self.t - self.last_scan >= cfg.scan_interval - 1e-9:
                self.sense()
            if arrived and target is not None:
                break
        if self.t >= cfg.duration - 1e-9:
            return COMPLETED
        return None

    def _row(self, event: str, **extra) -> None:
        p = self.state.position
        row = {"t": round(self.t, 6), "x": p[0], "y": p[1], "z": p[2], "heading": self.state.heading,
               "soc": soc_at(self.t, self.config.battery),
               "explored_volume": self.explore.explored_volume, "event": event}
        row.update(extra)
        self.rows.append(row)

    def run(self) -> MissionRecord:
        cfg = self.config
        started = time.perf_counter()
        self._log_step()
        self.sense()
        no_path = 0
        iteration = 0
        termination = None
        while termination is None:
            if self.t - self.last_scan >= cfg.scan_interval - 1e-9:
                self.sense()
            layer = attribute_layer(self.local, cfg.traversability)
            pos = self.state.position
            result = plan_local((pos[0], pos[1], self.state.heading), self.local, layer, self.explore,
                                cfg.planner, self.rng)
            if self.trace is not None:
                self.trace.write(trace_record(iteration, self.t, result) + "\n")
            iteration += 1
            if result.found and len(result.waypoints) > 1:
                no_path = 0
                self._row("plan", gain=result.path.gain, status=result.graph.status)
                termination = self._advance(cfg.replan_interval, result.waypoints[1])
                continue
            fallback = self._reposition(result)
            if fallback is not None and len(fallback) > 1:
                no_path = 0
                self._row("reposition", status=result.graph.status)
                termination = self._advance(cfg.replan_interval, fallback[1])
            else:
                no_path += 1
                self._row("no_path", status=result.graph.status)
                if no_path >= cfg.stranded_after:
                    termination = STRANDED
                    break
                termination = self._advance(cfg.idle_time)
        self._row(termination)
        self.local.recenter(self.state.position[0], self.state.position[1])
        return MissionRecord(
            rows=self.rows, termination=termination, duration=round(self.t, 6), spawn=self.spawn,
            seed=self.seed, histogram=self.histogram, global_confidence=self.global_map.observed(),
            trajectory=np.array(self.traj), wall_clock=time.perf_counter() - started,
            scans=self.scans, dropped_observations=self.local.dropped)


def run_episode(terrain: GroundTruthTerrain, config: MissionConfig, seed: int,
                spawn: tuple[float, float, float], trace=None) -> MissionRecord:
    return Episode(terrain, config, seed, spawn, trace).run()


def replay_violations(record: MissionRecord, terrain: GroundTruthTerrain,
                      limits: HazardLimits = HazardLimits(), radius: float = 0.3) -> int:
    """Count executed poses that break the hazard limits, excluding the final
    pose of a tipped-over run."""
    traj = record.trajectory
    if record.termination == TIPPED_OVER:
        traj = traj[:-1]
    bad = 0
    for _, x, y, h in traj:
        st = RobotState(np.array([x, y, 0.0]), h, 0.0, radius)
        if hazard_check(st, terrain, limits) != "safe":
            bad += 1
    return bad

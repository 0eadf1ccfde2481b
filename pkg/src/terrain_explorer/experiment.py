"""Batch experiments: arenas, planner variants, trial matrix and reports."""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import yaml

from .metrics import (ConfidenceHistogram, derive_threshold, exploration_curve, low_confidence_ratio,
                      mean_curve, mean_or_none)
from .mission import COMPLETED, MissionConfig, MissionRecord, run_episode
from .planner import PlannerParams
from .sensor import SensorModel
from .terrain import ConfigurationError, GroundTruthTerrain, TerrainConfig, generate_terrain
from .traversability import TraversabilityParams

SCHEMA = "terrain-explorer-report/1"

# (traversability-gated sampling, confidence gain)
VARIANTS = {
    "baseline_gbp": (False, False),
    "only_trav": (True, False),
    "full": (True, True),
}

_SPAWNS = [(50.0, 50.0), (25.0, 25.0), (75.0, 25.0), (25.0, 75.0), (75.0, 75.0)]

ARENAS = {
    "moon1": dict(seed=11, base_amplitude=0.3, tilt_deg=1.0, tilt_heading_deg=30.0,
                  random_craters=25, random_rocks=300, spawn_points=_SPAWNS),
    "moon2": dict(seed=23, base_amplitude=0.4, random_craters=45, crater_depth_ratio=(0.3, 0.5),
                  random_rocks=700, rock_height=(0.3, 0.7), spawn_points=_SPAWNS),
}


def arena_config(name: str) -> TerrainConfig:
    if name not in ARENAS:
        raise ConfigurationError(f"unknown arena {name!r}; known: {sorted(ARENAS)}")
    return TerrainConfig.from_dict(ARENAS[name])


def desk_mission_config(**overrides) -> MissionConfig:
    """Mission defaults sized so a 2400 s episode runs in seconds."""
    base = MissionConfig(
        scan_interval=2.0,
        map_resolution=0.2,
        map_size=75,
        voxel_size=0.5,
        spawn_prior_radius=3.0,
        sensor=SensorModel(azimuth_steps=180, angular_std=0.005, reported_angular_std=0.1),
        traversability=TraversabilityParams(half_width=1),
        planner=PlannerParams(vertex_budget=40, gain_range=10.0, beta=6.0),
    )
    return apply_overrides(base, overrides)


def apply_overrides(obj, overrides: dict):
    """Copy of a (nested) dataclass with fields replaced from a dict."""
    if not overrides:
        return obj
    names = {f.name: f for f in dataclasses.fields(obj)}
    changes = {}
    for key, value in overrides.items():
        if key not in names:
            raise ConfigurationError(f"unknown parameter {key!r} for {type(obj).__name__}")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current) and isinstance(value, dict):
            changes[key] = apply_overrides(current, value)
        elif isinstance(current, tuple) and isinstance(value, list):
            changes[key] = tuple(value)
        else:
            changes[key] = value
    try:
        return dataclasses.replace(obj, **changes)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(str(exc)) from exc


def variant_config(base: MissionConfig, variant: str) -> MissionConfig:
    if variant not in VARIANTS:
        raise ConfigurationError(f"unknown variant {variant!r}; known: {sorted(VARIANTS)}")
    gate, conf = VARIANTS[variant]
    planner = dataclasses.replace(base.planner, traversability_sampling=gate, confidence_gain=conf)
    return dataclasses.replace(base, planner=planner)


def spawn_for(terrain_config: TerrainConfig, seed: int) -> tuple[float, float, float]:
    """Spawn pose for a trial seed; the same for every variant."""
    if not terrain_config.spawn_points:
        raise ConfigurationError("arena defines no spawn points")
    rng = np.random.default_rng([int(seed), 0x5EED])
    x, y = terrain_config.spawn_points[int(rng.integers(len(terrain_config.spawn_points)))]
    return float(x), float(y), float(rng.uniform(-math.pi, math.pi))


@dataclass
class ExperimentConfig:
    arenas: list[str] = field(default_factory=lambda: ["moon1", "moon2"])
    variants: list[str] = field(default_factory=lambda: list(VARIANTS))
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    tail: float = 0.05
    curve_dt: float = 10.0
    mission: dict = field(default_factory=dict)
    # arena name -> terrain parameters, for arenas beyond the presets
    custom_arenas: dict = field(default_factory=dict)

    def __post_init__(self):
        for v in self.variants:
            if v not in VARIANTS:
                raise ConfigurationError(f"unknown variant {v!r}")
        for a in self.arenas:
            if a not in ARENAS and a not in self.custom_arenas:
                raise ConfigurationError(f"unknown arena {a!r}")
        if not self.seeds:
            raise ConfigurationError("seed list is empty")
        if not 0 < self.tail < 1:
            raise ConfigurationError("tail must lie in (0, 1)")
        self.seeds = [int(s) for s in self.seeds]

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        unknown = set(data) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ConfigurationError(f"unknown experiment keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
        if not isinstance(data, dict):
            raise ConfigurationError(f"{path}: expected a mapping")
        return cls.from_dict(data.get("experiment", data))

    def terrain_config(self, arena: str) -> TerrainConfig:
        if arena in self.custom_arenas:
            return TerrainConfig.from_dict(self.custom_arenas[arena])
        return arena_config(arena)

    def mission_config(self) -> MissionConfig:
        return desk_mission_config(**self.mission)


@dataclass
class Trial:
    arena: str
    variant: str
    seed: int
    record: MissionRecord | None
    error: str | None = None

    @property
    def key(self) -> str:
        return f"{self.arena}_{self.variant}_s{self.seed}"


def run_trials(config: ExperimentConfig, out_dir: str | Path | None = None,
               progress: Callable[[Trial], None] | None = None) -> list[Trial]:
    """Run the arena x variant x seed matrix in a fixed order.

    With out_dir, each record is saved under records/ and trials.json lists
    every trial, including ones that failed to start.
    """
    base = config.mission_config()
    trials = []
    for arena in config.arenas:
        tcfg = config.terrain_config(arena)
        terrain = generate_terrain(tcfg)
        for variant in config.variants:
            mcfg = variant_config(base, variant)
            for seed in config.seeds:
                try:
                    rec = run_episode(terrain, mcfg, seed, spawn_for(tcfg, seed))
                    trial = Trial(arena, variant, seed, rec)
                except ConfigurationError as exc:
                    trial = Trial(arena, variant, seed, None, str(exc))
                if out_dir is not None and trial.record is not None:
                    trial.record.save(Path(out_dir) / "records" / trial.key)
                trials.append(trial)
                if progress is not None:
                    progress(trial)
    if out_dir is not None:
        manifest = [{"arena": t.arena, "variant": t.variant, "seed": t.seed, "key": t.key,
                     "error": t.error} for t in trials]
        Path(out_dir, "trials.json").write_text(json.dumps(manifest, indent=1) + "\n")
    return trials


def load_trials(out_dir: str | Path) -> list[Trial]:
    """Trials saved by run_trials."""
    out = Path(out_dir)
    manifest_path = out / "trials.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"{manifest_path} not found")
    trials = []
    for entry in json.loads(manifest_path.read_text()):
        rec = None if entry["error"] else MissionRecord.load(out / "records" / entry["key"])
        trials.append(Trial(entry["arena"], entry["variant"], int(entry["seed"]), rec, entry["error"]))
    return trials


def _order(trials: list[Trial]) -> list[Trial]:
    return sorted(trials, key=lambda t: (t.arena, list(VARIANTS).index(t.variant), t.seed))


def pooled_histogram(trials: list[Trial]) -> ConfidenceHistogram:
    hist = ConfidenceHistogram()
    for t in trials:
        if t.record is not None:
            hist = hist.merge(t.record.histogram)
    return hist


def summarize(trials: list[Trial], tail: float = 0.05, curve_dt: float = 10.0,
              horizon: float = 2400.0) -> dict:
    """Success rate, mean operating time, low-confidence ratio and the mean
    exploration curve per arena and variant.

    The low-confidence threshold is derived once from the histogram pooled
    over every trial, so all variants are scored against the same value.
    """
    trials = _order(trials)
    hist = pooled_histogram(trials)
    theta = derive_threshold(hist, tail) if hist.total else None
    groups: dict[tuple[str, str], list[Trial]] = {}
    for t in trials:
        groups.setdefault((t.arena, t.variant), []).append(t)
    arenas: dict[str, dict] = {}
    for (arena, variant), group in groups.items():
        records = [t.record for t in group if t.record is not None]
        ratios = [low_confidence_ratio(r.global_confidence, theta) if theta is not None else None
                  for r in records]
        curves = [exploration_curve(r.rows, curve_dt, horizon) for r in records]
        arenas.setdefault(arena, {})[variant] = {
            "trials": len(group),
            "successes": sum(r.termination == COMPLETED for r in records),
            "success_rate": f"{sum(r.termination == COMPLETED for r in records)}/{len(group)}",
            # failed configurations contribute zero operating time
            "average_time_s": float(np.mean([r.duration for r in records] + [0.0] * (len(group) - len(records)))),
            "low_confidence_ratio_pct": mean_or_none(ratios),
            "per_trial": [
                {"seed": t.seed, "termination": t.record.termination if t.record else "error",
                 "duration_s": t.record.duration if t.record else 0.0,
                 "low_confidence_ratio_pct": ratio if t.record else None,
                 "final_explored_volume_m3": t.record.rows[-1]["explored_volume"] if t.record else None,
                 "error": t.error}
                for t, ratio in zip(group, _spread(group, ratios))
            ],
            "curve": mean_curve(curves).tolist() if curves else [],
        }
    return {
        "schema": SCHEMA,
        "tail": tail,
        "derived_threshold": theta,
        "threshold_mass_pct": None if theta is None else
        100.0 * hist.counts[:int(round(theta * 10))].sum() / hist.total,
        "confidence_histogram": hist.counts.tolist(),
        "arenas": arenas,
    }


def _spread(group: list[Trial], values: list):
    """Align per-record values with trials, None where a trial failed."""
    it = iter(values)
    return [next(it) if t.record is not None else None for t in group]


def write_report(report: dict, out_dir: str | Path) -> list[Path]:
    """report.json plus one exploration-curve CSV per arena and variant."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    slim = json.loads(json.dumps(report))
    for arena, variants in slim["arenas"].items():
        for variant, entry in variants.items():
            path = out / f"curve_{arena}_{variant}.csv"
            with open(path, "w", newline="") as fh:
                fh.write(f"# schema={SCHEMA},arena={arena},variant={variant}\n")
                writer = csv.writer(fh)
                writer.writerow(["t_s", "explored_volume_m3"])
                writer.writerows(entry.pop("curve"))
            paths.append(path)
    path = out / "report.json"
    path.write_text(json.dumps(slim, indent=2, sort_keys=True) + "\n")
    paths.append(path)
    return paths


def run_experiment(config: ExperimentConfig, out_dir: str | Path | None = None,
                   progress: Callable[[Trial], None] | None = None) -> dict:
    trials = run_trials(config, out_dir, progress)
    report = summarize(trials, config.tail, config.curve_dt, config.mission_config().duration)
    if out_dir is not None:
        write_report(report, out_dir)
    return report


def load_terrain(arena: str, config: ExperimentConfig | None = None) -> GroundTruthTerrain:
    cfg = config.terrain_config(arena) if config is not None else arena_config(arena)
    return generate_terrain(cfg)

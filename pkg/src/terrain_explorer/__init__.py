"""Confidence-aware exploration of uneven terrain: simulated range sensing,
Kalman elevation mapping, geometric traversability, a traversability-gated
graph planner with a confidence gain, mission simulation and metrics."""

from .elevation_map import ElevationCell, GlobalConfidenceMap, LocalMap, confidence_of, predict, update
from .experiment import ARENAS, VARIANTS, ExperimentConfig, run_experiment
from .metrics import ConfidenceHistogram, derive_threshold, exploration_curve, low_confidence_ratio
from .mission import BatteryModel, MissionConfig, MissionRecord, run_episode, soc_at
from .planner import PlannerParams, plan_local
from .sensor import SensorModel, SensorPose, simulate_scan
from .terrain import ConfigurationError, GroundTruthTerrain, TerrainConfig, generate_terrain
from .traversability import TraversabilityParams, attribute_layer

__version__ = "0.1.0"

__all__ = [
    "ARENAS", "VARIANTS", "BatteryModel", "ConfidenceHistogram", "ConfigurationError",
    "ElevationCell", "ExperimentConfig", "GlobalConfidenceMap", "GroundTruthTerrain", "LocalMap",
    "MissionConfig", "MissionRecord", "PlannerParams", "SensorModel", "SensorPose", "TerrainConfig",
    "TraversabilityParams", "attribute_layer", "confidence_of", "derive_threshold",
    "exploration_curve", "generate_terrain", "low_confidence_ratio", "plan_local", "predict",
    "run_episode", "run_experiment", "simulate_scan", "soc_at", "update",
]

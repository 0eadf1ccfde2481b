"""Simulated spinning range sensor and the point-to-height measurement model."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .grid import GridGeometry
from .terrain import ConfigurationError, GroundTruthTerrain


def rotation_from_rpy(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Sensor-to-map rotation, applied as yaw * pitch * roll."""
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    Rz = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
    Ry = np.array([[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]])
    Rx = np.array([[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]])
    return Rz @ Ry @ Rx


@dataclass(frozen=True)
class SensorPose:
    """Sensor position in the map frame and sensor-to-map rotation."""

    position: np.ndarray
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=np.float64).reshape(3)
        rot = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        if not np.allclose(rot @ rot.T, np.eye(3), atol=1e-9, rtol=0.0):
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(rot) - 1.0) > 1e-9:
            raise ValueError("rotation is not proper (det != +1)")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "rotation", rot)

    def to_map(self, points_s: np.ndarray) -> np.ndarray:
        return points_s @ self.rotation.T + self.position


@dataclass(frozen=True)
class RangeMeasurement:
    point: np.ndarray  # in the sensor frame [m]
    covariance: np.ndarray  # 3x3 range-noise covariance [m^2]


@dataclass(frozen=True)
class HeightObservation:
    cell: tuple[int, int]
    z: float
    variance: float


@dataclass
class SensorModel:
    rings: int = 16
    elevation_min_deg: float = -15.0
    elevation_max_deg: float = 15.0
    azimuth_steps: int = 360
    max_range: float = 30.0
    noise_std: tuple[float, float, float] = (0.02, 0.02, 0.02)
    # beam direction jitter [rad]; displaces a return by range * error
    # perpendicular to the beam
    angular_std: float = 0.0
    # angular std assumed in the reported covariance; None uses angular_std.
    # A larger value gives a conservative model of the same error shape.
    reported_angular_std: float | None = None
    mount_height: float = 0.8
    march_step: float = 0.1
    march_tol: float = 1e-5
    # fraction of the azimuth sweep fired per scan; successive scans rotate
    azimuth_fraction: float = 1.0

    def __post_init__(self):
        if self.max_range <= 0 or not math.isfinite(self.max_range):
            raise ConfigurationError("max_range must be finite and positive")
        if self.rings < 1 or self.azimuth_steps < 1:
            raise ConfigurationError("need at least one ring and one azimuth step")
        if any(s < 0 for s in self.noise_std) or self.angular_std < 0 \
                or (self.reported_angular_std is not None and self.reported_angular_std < 0):
            raise ConfigurationError("noise parameters must be non-negative")
        if not 0 < self.azimuth_fraction <= 1:
            raise ConfigurationError("azimuth_fraction must be in (0, 1]")
        self.noise_std = tuple(float(s) for s in self.noise_std)

    def beam_directions(self, phase: int = 0) -> np.ndarray:
        """Unit beam directions in the sensor frame, ring-major order."""
        if self.rings == 1:
            elev = np.array([math.radians(self.elevation_min_deg)])
        else:
            elev = np.radians(np.linspace(self.elevation_min_deg, self.elevation_max_deg, self.rings))
        n_fire = max(1, int(round(self.azimuth_steps * self.azimuth_fraction)))
        stride = self.azimuth_steps / n_fire
        offset = (phase % max(1, int(round(stride)))) if stride > 1 else 0
        az_idx = np.floor(np.arange(n_fire) * stride).astype(np.int64) + offset
        az = 2 * math.pi * (az_idx % self.azimuth_steps) / self.azimuth_steps
        E, A = np.meshgrid(elev, az, indexing="ij")
        return np.stack([np.cos(E) * np.cos(A), np.cos(E) * np.sin(A), np.sin(E)], axis=-1).reshape(-1, 3)

    def covariance(self, points_s: np.ndarray) -> np.ndarray:
        """Range-noise covariance reported with each point, shape (M, 3, 3)."""
        pts = np.atleast_2d(points_s)
        base = np.diag(np.square(self.noise_std))
        cov = np.broadcast_to(base, (len(pts), 3, 3)).copy()
        ang = self.angular_std if self.reported_angular_std is None else self.reported_angular_std
        if ang > 0:
            rho = np.linalg.norm(pts, axis=1)
            u = pts / np.maximum(rho, 1e-12)[:, None]
            lateral = np.eye(3)[None] - u[:, :, None] * u[:, None, :]
            cov += (ang * rho)[:, None, None] ** 2 * lateral
        return cov


class Scan:
    """Returns of one sweep: sensor-frame points with their covariances, plus
    the directions of beams that found nothing within range."""

    def __init__(self, points: np.ndarray, covariances: np.ndarray, miss_dirs: np.ndarray):
        self.points = points
        self.covariances = covariances
        self.miss_dirs = miss_dirs

    def __len__(self) -> int:
        return len(self.points)

    def __getitem__(self, k: int) -> RangeMeasurement:
        return RangeMeasurement(self.points[k], self.covariances[k])

    def __iter__(self):
        return (self[k] for k in range(len(self)))


def simulate_scan(terrain: GroundTruthTerrain, pose: SensorPose, model: SensorModel,
                  rng: np.random.Generator | None, phase: int = 0) -> Scan:
    """Cast every beam against the heightfield and perturb the returns.

    With rng=None the scan is noiseless.
    """
    dirs_s = model.beam_directions(phase)
    dirs_m = np.ascontiguousarray(dirs_s @ pose.rotation.T)
    origins = np.ascontiguousarray(np.broadcast_to(pose.position, dirs_m.shape))
    t = K.raymarch(origins, dirs_m, float(model.max_range), float(model.march_step),
                   float(model.march_tol), terrain.bound_grid, terrain.slope_grid, terrain.bound_size, terrain.extent_x, terrain.extent_y,
                   *terrain._args)
    hit = np.isfinite(t)
    points = dirs_s[hit] * t[hit][:, None]
    if rng is not None and len(points):
        noise = rng.standard_normal(points.shape) * np.asarray(model.noise_std)
        if model.angular_std > 0:
            jitter = rng.standard_normal(points.shape) * model.angular_std
            u = dirs_s[hit]
            jitter -= (jitter * u).sum(axis=1)[:, None] * u
            noise += jitter * t[hit][:, None]
        points = points + noise
    return Scan(points, model.covariance(points), dirs_s[~hit])


def height_variance(rotation: np.ndarray, covariance: np.ndarray) -> float:
    """J Sigma J^T where J is the derivative of the map-frame height with
    respect to the sensor-frame point, i.e. the third row of the rotation."""
    J = np.asarray(rotation)[2]
    return float(J @ np.asarray(covariance) @ J)


def project_measurement(meas: RangeMeasurement, pose: SensorPose,
                        grid: GridGeometry) -> HeightObservation | None:
    """Height, height variance and cell of one return; None outside the grid."""
    p = pose.rotation @ meas.point + pose.position
    i, j = grid.index(p[0], p[1])
    if not grid.contains(i, j):
        return None
    return HeightObservation((i, j), float(p[2]), height_variance(pose.rotation, meas.covariance))


def project_scan(scan: Scan, pose: SensorPose, grid: GridGeometry):
    """Vectorised project_measurement over a scan.

    Returns (i, j, z, variance, map_points) for the returns inside the grid.
    """
    p = pose.to_map(scan.points) if len(scan) else np.zeros((0, 3))
    J = pose.rotation[2]
    var = np.einsum("i,mij,j->m", J, scan.covariances, J) if len(scan) else np.zeros(0)
    i, j = grid.indices(p[:, 0], p[:, 1])
    inside = (i >= 0) & (j >= 0) & (i < grid.size_x) & (j < grid.size_y)
    return i[inside], j[inside], p[inside, 2], var[inside], p

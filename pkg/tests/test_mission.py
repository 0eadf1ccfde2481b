import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from terrain_explorer.experiment import desk_mission_config, variant_config
from terrain_explorer.mission import (COMPLETED, TIPPED_OVER, BatteryModel, HazardLimits, MissionRecord,
                                      RobotState, hazard_check, place_robot, replay_violations, run_episode,
                                      sensor_pose, soc_at, step_execute)
from terrain_explorer.terrain import (ConfigurationError, CraterSpec, RidgeSpec, TerrainConfig,
                                      generate_terrain)


@pytest.fixture(scope="module")
def ridge_terrain():
    cfg = TerrainConfig(extent_x=30.0, extent_y=30.0, base_amplitude=0.1,
                        ridges=[RidgeSpec(18.0, 0.0, 18.0, 30.0, 2.0, 40.0)],
                        craters=[CraterSpec(10.0, 22.0, 2.5, 0.8)])
    return generate_terrain(cfg, 2)


def short_config(**kw):
    kw.setdefault("duration", 60.0)
    return desk_mission_config(**kw)


def test_soc_examples():
    assert soc_at(0.0) == 100.0
    assert soc_at(1000.0) == 60.0
    assert soc_at(2400.0) == 4.0


@given(st.floats(0, 5000), st.floats(0, 5000))
def test_soc_is_linear(a, b):
    slope = -100.0 * 1.44 / 3600.0
    assert soc_at(a) - soc_at(b) == pytest.approx(slope * (a - b), abs=1e-9)


def test_soc_with_partial_charge():
    assert soc_at(0.0, BatteryModel(capacity_ah=10.0, initial_ah=5.0)) == 50.0
    with pytest.raises(ValueError):
        soc_at(-1.0)


def test_step_execute_examples(flat_terrain):
    s = place_robot(flat_terrain, 5.0, 5.0, 0.0, speed=1.0)
    s1, arrived = step_execute(s, (5.0, 8.0), 1.0, flat_terrain)
    assert not arrived
    assert np.allclose(s1.position, [5.0, 6.0, 0.0])
    assert s1.heading == pytest.approx(math.pi / 2)
    s2, arrived = step_execute(s1, (5.0, 6.5), 1.0, flat_terrain)
    assert arrived and np.allclose(s2.position[:2], [5.0, 6.5])
    s3, arrived = step_execute(s2, (5.0, 6.5), 1.0, flat_terrain)
    assert arrived and s3 is s2


def test_hazard_examples(ridge_terrain):
    assert hazard_check(place_robot(ridge_terrain, 5.0, 5.0), ridge_terrain) == "safe"
    # the ridge flank is 40 degrees steep
    flank = 18.0 - 1.0 / math.tan(math.radians(40.0))
    assert hazard_check(place_robot(ridge_terrain, flank, 15.0), ridge_terrain) == TIPPED_OVER
    lenient = HazardLimits(max_slope_deg=45.0, max_step=1.0)
    assert hazard_check(place_robot(ridge_terrain, flank, 15.0), ridge_terrain, lenient) == "safe"


def test_sensor_pose_on_flat_ground(flat_terrain):
    s = place_robot(flat_terrain, 3.0, 4.0, 0.7)
    pose = sensor_pose(s, flat_terrain, 0.8)
    assert np.allclose(pose.position, [3.0, 4.0, 0.8])
    assert np.allclose(pose.rotation[2], [0.0, 0.0, 1.0])
    assert pose.rotation[1, 0] == pytest.approx(math.sin(0.7))


def test_flat_arena_mission_completes(flat_terrain):
    rec = run_episode(flat_terrain, short_config(), 0, (10.0, 10.0, 0.0))
    assert rec.termination == COMPLETED
    assert rec.duration == 60.0
    assert rec.rows[-1]["soc"] == pytest.approx(soc_at(60.0))
    assert rec.global_confidence.size > 0
    assert replay_violations(rec, flat_terrain) == 0


def test_explored_volume_is_monotone(flat_terrain):
    rec = run_episode(flat_terrain, short_config(), 1, (8.0, 12.0, 1.0))
    vols = [r["explored_volume"] for r in rec.rows]
    assert vols[-1] > 0
    assert all(b >= a for a, b in zip(vols, vols[1:]))
    ts = [r["t"] for r in rec.rows]
    assert all(b >= a for a, b in zip(ts, ts[1:]))


def test_rerun_is_byte_identical(mixed_terrain, tmp_path):
    cfg = short_config(duration=40.0)
    a = run_episode(mixed_terrain, cfg, 3, (20.0, 20.0, 0.3))
    b = run_episode(mixed_terrain, cfg, 3, (20.0, 20.0, 0.3))
    assert a.to_jsonl() == b.to_jsonl()
    a.save(tmp_path / "a")
    b.save(tmp_path / "b")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    assert np.array_equal(a.trajectory, b.trajectory)
    assert np.array_equal(a.global_confidence, b.global_confidence)


def test_gated_run_never_enters_hazards(ridge_terrain):
    cfg = variant_config(short_config(duration=300.0), "full")
    rec = run_episode(ridge_terrain, cfg, 0, (14.0, 15.0, 0.0))
    assert rec.termination != TIPPED_OVER
    assert replay_violations(rec, ridge_terrain) == 0
    xs = rec.trajectory[:, 1]
    assert xs.max() > 14.5


def test_invalid_spawn_is_rejected(ridge_terrain):
    flank = 18.0 - 1.0 / math.tan(math.radians(40.0))
    with pytest.raises(ConfigurationError):
        run_episode(ridge_terrain, short_config(), 0, (flank, 15.0, 0.0))
    with pytest.raises(ConfigurationError):
        run_episode(ridge_terrain, short_config(), 0, (-1.0, 15.0, 0.0))


def test_record_save_load_round_trip(flat_terrain, tmp_path):
    rec = run_episode(flat_terrain, short_config(duration=20.0), 2, (10.0, 10.0, 0.0))
    rec.save(tmp_path / "r")
    back = MissionRecord.load(tmp_path / "r")
    assert back.to_jsonl() == rec.to_jsonl()
    assert back.summary() == rec.summary()
    assert np.array_equal(back.trajectory, rec.trajectory)


def test_invalid_mission_config():
    with pytest.raises(ConfigurationError):
        short_config(map_size=74)
    with pytest.raises(ConfigurationError):
        short_config(dt=0.0)


def test_replay_flags_hazardous_poses(ridge_terrain):
    flank = 18.0 - 1.0 / math.tan(math.radians(40.0))
    rec = MissionRecord([], COMPLETED, 1.0, (5.0, 5.0, 0.0), 0, None, np.zeros(0),
                        np.array([[0.0, 5.0, 5.0, 0.0], [0.1, flank, 15.0, 0.0]]))
    assert replay_violations(rec, ridge_terrain) == 1
    rec.termination = TIPPED_OVER
    assert replay_violations(rec, ridge_terrain) == 0

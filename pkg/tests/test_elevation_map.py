import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from terrain_explorer.elevation_map import (ElevationCell, GlobalConfidenceMap, LocalMap, confidence_of,
                                            ingest_scan, predict, read_layer_csv, update)
from terrain_explorer.grid import GridGeometry
from terrain_explorer.sensor import HeightObservation, SensorModel, SensorPose, project_scan, simulate_scan

obs_seq = st.lists(st.tuples(st.floats(-5, 5), st.floats(1e-4, 1.0)), min_size=1, max_size=50)


def O(z, v):
    return SimpleNamespace(z=z, variance=v)


def batch_fusion(seq):
    """Inverse-variance weighted mean and variance."""
    w = np.array([1.0 / v for _, v in seq])
    z = np.array([z for z, _ in seq])
    return float((w * z).sum() / w.sum()), float(1.0 / w.sum())


def test_first_observation_initializes():
    c = update(ElevationCell(), O(1.5, 0.04))
    assert c == ElevationCell(1.5, 0.04, 1, True)


def test_two_observation_example():
    c = update(update(ElevationCell(), O(1.0, 0.04)), O(2.0, 0.04))
    assert c.elevation == pytest.approx(1.5)
    assert c.variance == pytest.approx(0.02)
    assert c.observation_count == 2


def test_predict_is_identity_without_process_noise():
    c = ElevationCell(0.7, 0.3, 4, True)
    assert predict(c) == c
    with pytest.raises(ValueError):
        predict(ElevationCell())


def test_zero_variance_on_both_sides_keeps_prior():
    c = update(ElevationCell(2.0, 0.0, 1, True), O(5.0, 0.0))
    assert c.elevation == 2.0 and c.variance == 0.0


def test_negative_measurement_variance_rejected():
    with pytest.raises(ValueError):
        update(ElevationCell(), O(0.0, -1e-3))


@given(obs_seq)
def test_sequential_filter_matches_batch_fusion(seq):
    cell = ElevationCell()
    for z, v in seq:
        cell = update(cell, O(z, v))
    h, var = batch_fusion(seq)
    assert cell.elevation == pytest.approx(h, rel=1e-9, abs=1e-12)
    assert cell.variance == pytest.approx(var, rel=1e-9)


@given(obs_seq)
def test_kernel_ingest_matches_scalar_filter(seq):
    store = GridGeometry(0.1, 5, 5)
    local = LocalMap(store, 5)
    n = len(seq)
    local.ingest(np.full(n, 2), np.full(n, 3), np.array([z for z, _ in seq]), np.array([v for _, v in seq]))
    cell = ElevationCell()
    for z, v in seq:
        cell = update(cell, O(z, v))
    got = local.cell(2, 3)
    assert got.observation_count == n
    assert got.elevation == pytest.approx(cell.elevation, rel=1e-12, abs=1e-12)
    assert got.variance == pytest.approx(cell.variance, rel=1e-12)


@given(obs_seq)
def test_variance_and_confidence_are_monotone(seq):
    cell = ElevationCell()
    prev_var, prev_conf = math.inf, 0.0
    zs = []
    for z, v in seq:
        cell = update(cell, O(z, v))
        zs.append(z)
        assert cell.variance <= prev_var
        assert cell.confidence >= prev_conf
        assert min(zs) - 1e-9 <= cell.elevation <= max(zs) + 1e-9
        prev_var, prev_conf = cell.variance, cell.confidence


@pytest.mark.parametrize("var, conf", [(0.0, 1.0), (1.5, 0.0), (0.3, 0.7), (1.0, 0.0)])
def test_confidence_examples(var, conf):
    assert confidence_of(var) == pytest.approx(conf, abs=1e-15)


def test_confidence_of_negative_variance_raises():
    with pytest.raises(ValueError):
        confidence_of(-0.01)


def test_uninitialized_cell_has_zero_confidence():
    assert ElevationCell().confidence == 0.0


def test_ingest_scan_drops_out_of_window():
    local = LocalMap(GridGeometry(0.1, 50, 50), 11)
    local.recenter_cell(25, 25)
    obs = [HeightObservation((25, 25), 1.0, 0.01), HeightObservation((30, 30), 2.0, 0.01),
           HeightObservation((31, 25), 3.0, 0.01)]
    ingest_scan(local, obs)
    assert local.initialized[25, 25] and local.initialized[30, 30]
    assert not local.initialized[31, 25]
    assert local.dropped == 1


def test_cells_persist_across_recentering():
    local = LocalMap(GridGeometry(0.1, 100, 100), 11)
    local.recenter_cell(20, 20)
    local.ingest(np.array([22]), np.array([21]), np.array([0.4]), np.array([0.02]))
    local.recenter_cell(80, 80)
    assert local.initialized_window().sum() == 0
    local.recenter_cell(21, 21)
    a, b = local.to_local(22, 21)
    assert local.local_cell(int(a), int(b)).elevation == 0.4


def test_window_pads_beyond_arena_edge():
    local = LocalMap(GridGeometry(0.1, 10, 10), 5)
    local.recenter_cell(0, 0)
    local.ingest(np.array([0]), np.array([0]), np.array([1.0]), np.array([0.1]))
    init = local.initialized_window()
    assert init.shape == (5, 5)
    assert init[2, 2] and init.sum() == 1
    assert np.isnan(local.confidence_window()[0, 0])


def test_global_fold_keeps_maximum_and_is_idempotent():
    store = GridGeometry(0.1, 20, 20)
    local = LocalMap(store, 21)
    local.recenter_cell(10, 10)
    local.ingest(np.array([3, 4]), np.array([3, 4]), np.array([0.0, 0.0]), np.array([0.5, 0.2]))
    g = GlobalConfidenceMap(store)
    g.fold(local)
    snapshot = g.values.copy()
    g.fold(local)
    assert np.array_equal(np.isnan(snapshot), np.isnan(g.values))
    assert np.array_equal(snapshot[np.isfinite(snapshot)], g.values[np.isfinite(g.values)])
    assert g.as_dict() == {(3, 3): 0.5, (4, 4): pytest.approx(0.8)}
    # a worse later estimate cannot lower the stored value
    local.variance[4, 4] = 0.9
    g.fold(local)
    assert g.as_dict()[(4, 4)] == pytest.approx(0.8)
    assert len(g) == 2


def test_export_csv_marks_unobserved_cells_empty(tmp_path):
    local = LocalMap(GridGeometry(0.2, 30, 30), 5)
    local.recenter_cell(10, 10)
    local.ingest(np.array([10]), np.array([11]), np.array([0.25]), np.array([0.04]))
    paths = local.export_csv(tmp_path / "m")
    meta, conf = read_layer_csv(paths[2])
    assert meta["rows"] == 5 and meta["resolution"] == 0.2
    assert conf[2, 3] == pytest.approx(0.96)
    assert np.isnan(conf).sum() == 24
    lines = paths[0].read_text().splitlines()
    assert lines[3] == ",,,0.25,"


def test_flat_ground_estimate_within_reported_spread(flat_terrain):
    """Repeated noisy scans of flat ground: the fused error stays within
    three predicted standard deviations in nearly every cell."""
    model = SensorModel(rings=8, elevation_min_deg=-40, elevation_max_deg=-10, azimuth_steps=72,
                        noise_std=(0.03, 0.03, 0.03))
    store = GridGeometry.covering(20.0, 20.0, 0.2)
    local = LocalMap(store, 75)
    local.recenter(10.0, 10.0)
    pose = SensorPose([10.0, 10.0, 0.8])
    rng = np.random.default_rng(3)
    for _ in range(30):
        local.ingest(*project_scan(simulate_scan(flat_terrain, pose, model, rng), pose, store)[:4])
    init = local.initialized
    err = np.abs(local.elevation[init])
    sd = np.sqrt(local.variance[init])
    assert init.sum() > 200
    assert np.mean(err <= 3 * sd) >= 0.98

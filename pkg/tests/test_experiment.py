import json
import random

import pytest

from terrain_explorer.experiment import (ExperimentConfig, Trial, apply_overrides, arena_config,
                                         desk_mission_config, load_trials, run_experiment, run_trials,
                                         spawn_for, summarize, variant_config)
from terrain_explorer.terrain import ConfigurationError, generate_terrain

FLAT = {"extent_x": 20.0, "extent_y": 20.0, "spawn_points": [[10.0, 10.0], [6.0, 14.0]]}


def flat_config(**kw):
    base = dict(arenas=["flat"], variants=["full"], seeds=[0], custom_arenas={"flat": FLAT},
                mission={"duration": 30.0})
    base.update(kw)
    return ExperimentConfig(**base)


def test_flat_experiment_succeeds(tmp_path):
    report = run_experiment(flat_config(), tmp_path)
    entry = report["arenas"]["flat"]["full"]
    assert entry["success_rate"] == "1/1"
    assert entry["average_time_s"] == 30.0
    assert (tmp_path / "report.json").exists()
    assert (tmp_path / "curve_flat_full.csv").read_text().startswith("# schema=")
    assert report["derived_threshold"] is not None


def test_report_is_reproducible(tmp_path):
    cfg = flat_config(variants=["baseline_gbp", "full"], seeds=[0, 1])
    run_experiment(cfg, tmp_path / "a")
    run_experiment(cfg, tmp_path / "b")
    for name in ["report.json", "curve_flat_full.csv", "curve_flat_baseline_gbp.csv"]:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_summary_ignores_trial_order(tmp_path):
    trials = run_trials(flat_config(variants=["only_trav", "full"], seeds=[0, 1]))
    shuffled = trials[:]
    random.Random(4).shuffle(shuffled)
    assert json.dumps(summarize(trials)) == json.dumps(summarize(shuffled))


def test_load_trials_round_trip(tmp_path):
    cfg = flat_config(seeds=[0, 1])
    trials = run_trials(cfg, tmp_path)
    back = load_trials(tmp_path)
    assert [t.key for t in back] == [t.key for t in trials]
    assert json.dumps(summarize(back)) == json.dumps(summarize(trials))
    with pytest.raises(FileNotFoundError):
        load_trials(tmp_path / "missing")


def test_failed_trial_counts_as_zero_time():
    trials = run_trials(flat_config())
    trials.append(Trial("flat", "full", 9, None, "spawn is not safe ground"))
    entry = summarize(trials)["arenas"]["flat"]["full"]
    assert entry["success_rate"] == "1/2"
    assert entry["average_time_s"] == 15.0
    assert entry["per_trial"][-1]["termination"] == "error"


def test_spawn_is_shared_across_variants():
    cfg = arena_config("moon1")
    assert spawn_for(cfg, 3) == spawn_for(cfg, 3)
    assert {spawn_for(cfg, s)[:2] for s in range(40)} <= {tuple(p) for p in cfg.spawn_points}


def test_preset_spawns_are_safe():
    from terrain_explorer.mission import hazard_check, place_robot
    for name in ["moon1", "moon2"]:
        cfg = arena_config(name)
        terrain = generate_terrain(cfg)
        for x, y in cfg.spawn_points:
            assert hazard_check(place_robot(terrain, x, y), terrain) == "safe"


def test_variant_toggles():
    base = desk_mission_config()
    assert not variant_config(base, "baseline_gbp").planner.traversability_sampling
    only = variant_config(base, "only_trav").planner
    assert only.traversability_sampling and not only.confidence_gain
    with pytest.raises(ConfigurationError):
        variant_config(base, "nope")


def test_nested_overrides():
    cfg = desk_mission_config(planner={"beta": 3.0}, sensor={"noise_std": [0.01, 0.01, 0.01]})
    assert cfg.planner.beta == 3.0 and cfg.planner.vertex_budget == 40
    assert cfg.sensor.noise_std == (0.01, 0.01, 0.01)
    with pytest.raises(ConfigurationError):
        apply_overrides(cfg, {"planner": {"nonsense": 1}})
    with pytest.raises(ConfigurationError):
        desk_mission_config(planner={"beta": -1.0})


@pytest.mark.parametrize("kw", [dict(variants=["nope"]), dict(arenas=["nowhere"]), dict(seeds=[]),
                                dict(tail=1.5)])
def test_invalid_experiment_config(kw):
    with pytest.raises(ConfigurationError):
        ExperimentConfig(**kw)


def test_yaml_config(tmp_path):
    path = tmp_path / "exp.yaml"
    path.write_text("experiment:\n  arenas: [moon2]\n  seeds: [4, 7]\n  mission:\n    duration: 100\n")
    cfg = ExperimentConfig.load(path)
    assert cfg.arenas == ["moon2"] and cfg.seeds == [4, 7]
    assert cfg.mission_config().duration == 100
    path.write_text("bogus: 1\n")
    with pytest.raises(ConfigurationError):
        ExperimentConfig.load(path)

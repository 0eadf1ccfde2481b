import json

import numpy as np
import yaml

from terrain_explorer.cli import main

FLAT = {"extent_x": 20.0, "extent_y": 20.0, "spawn_points": [[10.0, 10.0]]}


def write_config(tmp_path):
    path = tmp_path / "exp.yaml"
    path.write_text(yaml.safe_dump({"arenas": ["flat"], "variants": ["full"], "seeds": [0, 1],
                                    "custom_arenas": {"flat": FLAT}, "mission": {"duration": 20.0}}))
    return path


def test_run_then_metrics(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", str(write_config(tmp_path)), "--out", str(out), "--trials", "1", "--quiet"]) == 0
    table = capsys.readouterr().out
    assert "derived low-confidence threshold" in table and "1/1" in table
    report = json.loads((out / "report.json").read_text())
    assert report["arenas"]["flat"]["full"]["trials"] == 1

    again = tmp_path / "again"
    assert main(["metrics", str(out), "--out", str(again), "--tail", "0.05"]) == 0
    assert (again / "report.json").read_text() == (out / "report.json").read_text()


def test_metrics_on_missing_directory(tmp_path, capsys):
    assert main(["metrics", str(tmp_path / "none")]) == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "FileNotFoundError" and err["command"] == "metrics"


def test_unknown_variant_is_a_structured_error(tmp_path, capsys):
    code = main(["run", "--out", str(tmp_path), "--variant", "warp_drive", "--quiet"])
    assert code == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "ConfigurationError" and "warp_drive" in err["message"]


def test_too_many_trials(tmp_path, capsys):
    assert main(["run", "--out", str(tmp_path), "--seed-list", "1,2", "--trials", "3"]) == 2
    assert json.loads(capsys.readouterr().err)["error"] == "CliError"


def test_terrain_export(tmp_path):
    path = tmp_path / "moon1.csv"
    assert main(["terrain", "moon1", "--out", str(path), "--resolution", "2.0"]) == 0
    lines = path.read_text().splitlines()
    assert lines[0].startswith("#")
    grid = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    assert grid.shape == (50, 50)
    assert np.isfinite(grid).all()


def test_terrain_unknown_arena(tmp_path, capsys):
    assert main(["terrain", "atlantis", "--out", str(tmp_path / "x.csv")]) == 2
    assert "atlantis" in json.loads(capsys.readouterr().err)["message"]

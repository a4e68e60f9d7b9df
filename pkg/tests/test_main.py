from __future__ import annotations

import json
import os

import pytest

from experiments import RunResult
from file_manager import read_manifest
from main import exit_code_for, main, parse_output_options

CONFIG = {
    "experiment": "simulate",
    "params": {"a": 0.5, "b": 1.0, "c": 1.0, "r": 1.0},
    "grid": {"L": 1.0, "T": 0.5, "nx": 21, "nt": 50},
    "init": {"u": [1.0]},
}


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for name in ("KDVDUO_THREADS", "KDVDUO_OUTPUT_DIR", "S3_BUCKET_NAME", "MONGO_CONNECTION_STRING"):
        monkeypatch.delenv(name, raising=False)


def _write_config(tmp_path, **fields):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({**CONFIG, **fields}), encoding="utf-8")
    return str(path)


@pytest.mark.parametrize("text, flags", [
    ("json", (False, False)),
    ("json,s3", (True, False)),
    ("MONGO, s3", (True, True)),
    ("json,parquet", (False, False)),
])
def test_parse_output_options(text, flags):
    assert parse_output_options(text) == flags


def test_exit_code_prefers_failures():
    ok = RunResult("a", "", "ok")
    stuck = RunResult("b", "", "no_convergence")
    failed = RunResult("c", "", "failed")
    assert exit_code_for([ok]) == 0
    assert exit_code_for([ok, stuck]) == 2
    assert exit_code_for([stuck, failed]) == 1


def test_simulate_command_writes_run_directory(tmp_path):
    out = tmp_path / "runs"
    code = main(["simulate", "--config", _write_config(tmp_path), "--out", str(out), "--seed", "3"])
    assert code == 0
    (run_id,) = os.listdir(out)
    assert run_id.endswith("-simulate-seed3")
    manifest = read_manifest(str(out / run_id))
    assert manifest["status"] == "ok"
    assert manifest["config"]["seed"] == 3


def test_subcommand_overrides_config_experiment(tmp_path):
    out = tmp_path / "runs"
    path = _write_config(tmp_path, p_grid=[1.0, 2.0])
    assert main(["witness", "-c", path, "--out", str(out)]) == 0
    (run_id,) = os.listdir(out)
    assert read_manifest(str(out / run_id))["experiment"] == "witness-scan"


def test_non_convergence_exits_with_two(tmp_path):
    path = _write_config(tmp_path, target={"u": [1.0, 0.5]},
                         tolerances={"hum_tol": 1e-14, "hum_maxit": 1})
    assert main(["control", "-c", path, "--out", str(tmp_path / "runs")]) == 2


def test_sweep_command(tmp_path, monkeypatch):
    monkeypatch.setenv("KDVDUO_THREADS", "2")
    out = tmp_path / "runs"
    path = _write_config(tmp_path, experiment="witness-scan", p_grid=[1.0])
    assert main(["sweep", "-c", path, "--axis", "L", "--values", "1,2", "--out", str(out)]) == 0
    (sweep_id,) = os.listdir(out)
    assert os.path.exists(out / sweep_id / "sweep.csv")


@pytest.mark.parametrize("argv", [
    ["teleport", "--config", "run.json"],
    ["simulate"],
    ["sweep", "--config", "run.json", "--axis", "nx"],
])
def test_usage_errors_exit_with_one(argv):
    assert main(argv) == 1


def test_help_exits_cleanly():
    assert main(["--help"]) == 0


def test_missing_config_file(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "missing.json")]) == 1


def test_invalid_config_exits_with_one(tmp_path):
    path = _write_config(tmp_path, grid={"L": 1.0, "T": 0.5, "nx": 21})
    assert main(["simulate", "--config", path, "--out", str(tmp_path / "runs")]) == 1


def test_sweep_needs_axis(tmp_path):
    path = _write_config(tmp_path)
    assert main(["sweep", "--config", path, "--values", "1,2", "--out", str(tmp_path / "runs")]) == 1

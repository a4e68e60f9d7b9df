from __future__ import annotations

import csv
import os

import numpy as np
import pytest

import experiments
from config import ExperimentConfig
from critical_lengths import CANDIDATE_CAVEAT
from errors import ConfigError
from experiments import parse_values, run_experiment, sweep
from file_manager import read_manifest

PARAMS = {"a": 0.5, "b": 1.0, "c": 1.0, "r": 1.0}
GRID = {"L": 1.0, "T": 0.5, "nx": 21, "nt": 50}


def _config(**fields):
    data = {"experiment": "simulate", "params": dict(PARAMS), "grid": dict(GRID)}
    data.update(fields)
    return ExperimentConfig.from_dict(data)


def _rows(path):
    with open(path, encoding="utf-8", newline="") as f:
        return list(csv.reader(f))


def test_simulate_zero_data_stays_zero(tmp_path):
    cfg = _config()
    result = run_experiment(cfg, str(tmp_path), run_id="zero")
    assert result.status == "ok"
    assert result.exit_code == 0
    rows = _rows(os.path.join(result.run_dir, "trajectory.csv"))
    assert rows[0] == ["t", "x", "u", "v"]
    assert all(float(row[2]) == 0.0 and float(row[3]) == 0.0 for row in rows[1:])
    assert result.summary["final_norm"] == 0.0
    for name in ("traces.csv", "energy.csv", "trajectory.gp"):
        assert os.path.exists(os.path.join(result.run_dir, name))


def test_manifest_echoes_resolved_config(tmp_path):
    cfg = _config(init={"u": [1.0]}, seed=4)
    result = run_experiment(cfg, str(tmp_path), run_id="echo")
    manifest = read_manifest(result.run_dir)
    assert manifest["run_id"] == "echo"
    assert manifest["status"] == "ok"
    assert manifest["config"] == cfg.to_dict()
    assert manifest["operations"] == {"solve_forward_linear": "ok"}
    assert manifest["summary"]["final_norm"] <= manifest["summary"]["initial_norm"] * (1 + 1e-8)


def test_same_config_and_seed_give_identical_tables(tmp_path):
    cfg = _config(init={"u": [1.0, 0.5], "v": [0.2]})
    first = run_experiment(cfg, str(tmp_path), run_id="first")
    second = run_experiment(cfg, str(tmp_path), run_id="second")
    for name in ("trajectory.csv", "traces.csv", "energy.csv"):
        with open(os.path.join(first.run_dir, name), "rb") as a, \
                open(os.path.join(second.run_dir, name), "rb") as b:
            assert a.read() == b.read()


def test_nonlinear_simulation_records_picard_iterations(tmp_path):
    cfg = _config(params={**PARAMS, "a1": 1.0, "a2": 1.0}, init={"u": [1.0]}, amplitude=0.05)
    result = run_experiment(cfg, str(tmp_path), run_id="nl")
    assert result.status == "ok"
    assert result.summary["picard_iterations"] > 1
    assert result.manifest["operations"]["solve_nonlinear"] == "ok"


def test_adjoint_run_reports_duality(tmp_path):
    cfg = _config(experiment="adjoint", target={"u": [1.0], "v": [0.5]})
    result = run_experiment(cfg, str(tmp_path), run_id="adjoint")
    assert result.status == "ok"
    assert result.summary["duality_gap"] <= 1e-8
    assert os.path.exists(os.path.join(result.run_dir, "adjoint_traces.csv"))


def test_witness_scan_table(tmp_path):
    cfg = _config(experiment="witness-scan", p_grid=[0.0, 1.0, 2.0])
    result = run_experiment(cfg, str(tmp_path), run_id="witness")
    rows = _rows(os.path.join(result.run_dir, "witness.csv"))
    assert rows[0] == ["p", "sigma_min"]
    assert [float(row[0]) for row in rows[1:]] == [-2.0, -1.0, 1.0, 2.0]
    assert result.summary["skipped"] == 1


def test_critical_atlas_lists_smallest_length(tmp_path):
    cfg = _config(experiment="critical-atlas", L_max=5.0, p_grid=[1.0, 2.0],
                  tolerances={"lanczos_steps": 0})
    result = run_experiment(cfg, str(tmp_path), run_id="atlas")
    rows = _rows(os.path.join(result.run_dir, "atlas.csv"))
    assert rows[0][:2] == ["L", "alpha_index"]
    assert rows[1][1] == "5"
    assert float(rows[1][0]) == pytest.approx(3.5124, abs=1e-4)
    assert rows[1][-1] == ""
    assert "observability_margin" not in result.manifest["operations"]
    assert result.summary["smallest_L"] == pytest.approx(3.5124, abs=1e-4)
    assert result.summary["caveat"] == CANDIDATE_CAVEAT
    assert 0 <= result.summary["witness_dips"] <= result.summary["candidates"]


def test_exhausted_hum_budget_maps_to_no_convergence(tmp_path):
    cfg = _config(experiment="control", target={"u": [1.0, 0.5], "v": [0.3]},
                  tolerances={"hum_tol": 1e-14, "hum_maxit": 1})
    result = run_experiment(cfg, str(tmp_path), run_id="budget")
    assert result.status == "no_convergence"
    assert result.exit_code == 2
    manifest = read_manifest(result.run_dir)
    assert manifest["status"] == "no_convergence"
    assert manifest["operations"]["solve_hum"] == "no_convergence"
    assert manifest["summary"]["cg_iterations"] == 1


def test_unexpected_failure_still_writes_manifest(tmp_path, monkeypatch):
    def explode(cfg, run_dir, ops):
        ops["solve_forward_linear"] = "running"
        raise RuntimeError("boom")

    monkeypatch.setitem(experiments.HANDLERS, "simulate", explode)
    with pytest.raises(RuntimeError):
        run_experiment(_config(), str(tmp_path), run_id="broken")
    manifest = read_manifest(str(tmp_path / "broken"))
    assert manifest["status"] == "failed"
    assert manifest["operations"] == {"solve_forward_linear": "failed"}
    assert manifest["summary"] == {"error": "boom"}


def test_sweep_writes_one_row_per_value(tmp_path):
    cfg = _config(experiment="witness-scan", p_grid=[1.0, 2.0])
    results = sweep(cfg, "L", [1.0, 2.0, 3.0], str(tmp_path), threads=2, sweep_id="sweep")
    assert [r.status for r in results] == ["ok", "ok", "ok"]
    assert sorted(os.listdir(tmp_path / "sweep"))[:3] == ["point-000", "point-001", "point-002"]
    rows = _rows(str(tmp_path / "sweep" / "sweep.csv"))
    assert rows[0] == list(experiments.SWEEP_HEADER)
    assert [float(row[0]) for row in rows[1:]] == [1.0, 2.0, 3.0]
    manifest = read_manifest(str(tmp_path / "sweep" / "point-001"))
    assert manifest["config"]["grid"]["L"] == 2.0

    parent = read_manifest(str(tmp_path / "sweep"))
    assert parent["run_id"] == "sweep"
    assert parent["axis"] == "L"
    assert parent["values"] == [1.0, 2.0, 3.0]
    assert parent["status"] == "ok"
    assert [point["run_id"] for point in parent["points"]] == ["point-000", "point-001", "point-002"]
    assert parent["summary"]["statuses"] == {"ok": 3}
    # witness-scan points carry no margin
    assert "witness_margin" not in parent["summary"]


def test_margin_sweep_over_length_reports_witness_agreement(tmp_path):
    cfg = _config(experiment="gramian-margin", p_grid=[1.0, 2.0], tolerances={"lanczos_steps": 8})
    results = sweep(cfg, "L", [1.0, 1.5, 2.0, 2.5], str(tmp_path), sweep_id="lengths")
    assert all("min_sigma" in r.summary for r in results)
    agreement = read_manifest(str(tmp_path / "lengths"))["summary"]["witness_margin"]
    assert -1.0 <= agreement["spearman"] <= 1.0
    assert agreement["argmin_sigma"] in (1.0, 1.5, 2.0, 2.5)
    assert agreement["argmin_margin"] in (1.0, 1.5, 2.0, 2.5)
    assert isinstance(agreement["colocated"], bool)


def test_witness_margin_agreement():
    values = [3.0, 3.25, 3.5, 3.75, 4.0]
    sigmas = [0.3, 0.1, 0.01, 0.05, 0.4]
    margins = [1e-2, 1e-3, 1e-5, 1e-4, 2e-2]
    agreement = experiments.witness_margin_agreement(values, margins, sigmas)
    assert agreement["spearman"] == pytest.approx(1.0)
    assert agreement["argmin_sigma"] == agreement["argmin_margin"] == 3.5
    assert agreement["colocated"]

    shifted = experiments.witness_margin_agreement(values, [1e-5, 1e-3, 1e-2, 1e-4, 2e-2], sigmas)
    assert not shifted["colocated"]
    assert experiments.witness_margin_agreement(values[:3], [None, 1.0, 2.0], sigmas[:3]) is None


@pytest.mark.parametrize("axis, values", [
    ("nx", [1.0]),
    ("L", []),
    ("L", [2.0, 1.0]),
    ("T", [0.0, 1.0]),
])
def test_sweep_rejects_bad_axes_and_values(tmp_path, axis, values):
    with pytest.raises(ConfigError):
        sweep(_config(), axis, values, str(tmp_path))


def test_parse_values():
    assert parse_values("1, 2.5,4") == [1.0, 2.5, 4.0]
    assert np.allclose(parse_values("1:2:5"), [1.0, 1.25, 1.5, 1.75, 2.0])
    for text in ("", "a,b", "1:2"):
        with pytest.raises(ConfigError):
            parse_values(text)


@pytest.mark.slow
def test_verify_suite_writes_every_check(tmp_path):
    cfg = _config(experiment="verify-suite")
    result = run_experiment(cfg, str(tmp_path), run_id="verify")
    rows = _rows(os.path.join(result.run_dir, "checks.csv"))
    assert len(rows) == 1 + result.summary["checks_passed"] + result.summary["checks_failed"]
    assert rows[0] == ["name", "passed", "value", "threshold"]
    failed = [row[0] for row in rows[1:] if row[1] != "true"]
    assert failed == []
    assert result.summary["checks_failed"] == 0

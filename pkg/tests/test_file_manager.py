from __future__ import annotations

import os
from datetime import datetime

import numpy as np
import pytest

from core import Grid, Trajectory
from errors import IoError
from file_manager import (
    MANIFEST_NAME,
    create_run_dir,
    format_cell,
    make_run_id,
    read_manifest,
    trajectory_rows,
    write_csv_table,
    write_gnuplot_script,
    write_manifest,
    write_series,
    write_trajectory,
)

try:
    from zoneinfo import ZoneInfo  # Python 3.9+
except ImportError:  # pragma: no cover
    from backports.zoneinfo import ZoneInfo  # type: ignore


@pytest.mark.parametrize("value, text", [
    (0.1, "0.10000000000000001"),
    (np.float64(2.5), "2.5"),
    (True, "true"),
    (np.bool_(False), "false"),
    (7, "7"),
    (np.int64(-3), "-3"),
    (None, ""),
    ("OneControl", "OneControl"),
])
def test_format_cell(value, text):
    assert format_cell(value) == text


def test_run_id_is_timestamped():
    when = datetime(2024, 5, 17, 8, 30, 0, tzinfo=ZoneInfo("UTC"))
    assert make_run_id("control", 3, when) == "2024-05-17-08-30-00-control-seed3"


def test_csv_uses_crlf_and_quotes(tmp_path):
    path = write_csv_table(str(tmp_path / "table.csv"), ("name", "value"),
                           [["a,b", 1.0], ["plain", True]])
    raw = open(path, "rb").read()
    assert raw == b'name,value\r\n"a,b",1\r\nplain,true\r\n'


def test_csv_write_failure_raises_io_error(tmp_path):
    with pytest.raises(IoError):
        write_csv_table(str(tmp_path / "missing" / "table.csv"), ("a",), [[1]])


def test_gnuplot_script_references_columns(tmp_path):
    csv_path = write_csv_table(str(tmp_path / "witness.csv"), ("p", "sigma_min"), [[1.0, 0.5]])
    script = write_gnuplot_script(csv_path, "p", ("sigma_min",), ("p", "sigma_min"),
                                  title="witness", logscale_y=True)
    text = open(script, encoding="utf-8").read()
    assert script.endswith("witness.gp")
    assert "using 1:2" in text
    assert "set logscale y" in text


def test_manifest_round_trip(tmp_path):
    run_dir = create_run_dir(str(tmp_path), "run-1")
    write_manifest(run_dir, {"run_id": "run-1", "value": np.float64(1.5), "rows": np.arange(3)})
    assert os.path.exists(os.path.join(run_dir, MANIFEST_NAME))
    manifest = read_manifest(run_dir)
    assert manifest == {"run_id": "run-1", "value": 1.5, "rows": [0, 1, 2]}


def test_trajectory_rows_subsample_long_runs():
    g = Grid(L=1.0, T=1.0, nx=5, nt=250)
    traj = Trajectory(np.zeros((g.nt + 1, g.nx)), np.ones((g.nt + 1, g.nx)))
    rows = trajectory_rows(traj, g)
    times = sorted({row[0] for row in rows})
    assert times[0] == 0.0 and times[-1] == pytest.approx(1.0)
    assert len(times) <= 102
    assert len(rows) == len(times) * g.nx


def test_trajectory_and_series_files(tmp_path):
    g = Grid(L=1.0, T=1.0, nx=5, nt=4)
    traj = Trajectory(np.zeros((5, 5)), np.zeros((5, 5)))
    path = write_trajectory(str(tmp_path), "trajectory", traj, g)
    lines = open(path, encoding="utf-8", newline="").read().split("\r\n")
    assert lines[0] == "t,x,u,v"
    assert len([line for line in lines if line]) == 1 + 5 * 5

    series = write_series(str(tmp_path), "energy", g, {"x_norm": np.arange(5.0)})
    lines = open(series, encoding="utf-8", newline="").read().split("\r\n")
    assert lines[0] == "t,x_norm"
    assert lines[-2] == "1,4"

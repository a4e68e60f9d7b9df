"""Run directories, manifests, CSV tables and plot scripts."""
from __future__ import annotations

import csv
import json
import logging
import os
from datetime import datetime
from typing import Any, Dict, Iterable, List, Sequence

import numpy as np

try:
    from zoneinfo import ZoneInfo  # Python 3.9+
except ImportError:  # pragma: no cover
    from backports.zoneinfo import ZoneInfo  # type: ignore

from core import Grid, Trajectory
from errors import IoError

MANIFEST_NAME = "manifest.json"
MAX_DUMPED_SLICES = 100


def utc_now() -> datetime:
    return datetime.now(ZoneInfo("UTC"))


def make_run_id(experiment: str, seed: int, when: datetime = None) -> str:
    when = when or utc_now()
    return f"{when.strftime('%Y-%m-%d-%H-%M-%S')}-{experiment}-seed{seed}"


def create_run_dir(base: str, name: str) -> str:
    path = os.path.join(base, name)
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as e:
        raise IoError(f"cannot create run directory {path}: {e}") from e
    return path


def _json_default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, datetime):
        return value.isoformat()
    raise TypeError(f"{type(value).__name__} is not JSON serialisable")


def write_manifest(run_dir: str, manifest: Dict[str, Any]) -> str:
    path = os.path.join(run_dir, MANIFEST_NAME)
    try:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(manifest, f, ensure_ascii=False, indent=2, default=_json_default)
    except OSError as e:
        raise IoError(f"cannot write manifest {path}: {e}") from e
    logging.info("Wrote manifest: %s", path)
    return path


def read_manifest(run_dir: str) -> Dict[str, Any]:
    with open(os.path.join(run_dir, MANIFEST_NAME), "r", encoding="utf-8") as f:
        return json.load(f)


def format_cell(value: Any) -> str:
    """Floats with 17 significant digits, booleans as true/false."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if value is None:
        return ""
    return str(value)


def write_csv_table(path: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    """RFC 4180 table (CRLF line endings)."""
    count = 0
    try:
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\r\n")
            writer.writerow(list(header))
            for row in rows:
                writer.writerow([format_cell(v) for v in row])
                count += 1
    except OSError as e:
        raise IoError(f"cannot write table {path}: {e}") from e
    logging.info("Wrote %s rows to table: %s", count, path)
    return path


def write_gnuplot_script(csv_path: str, x_column: str, y_columns: Sequence[str],
                         header: Sequence[str], title: str = "", logscale_y: bool = False) -> str:
    """Companion gnuplot script plotting ``y_columns`` against ``x_column``."""
    script_path = os.path.splitext(csv_path)[0] + ".gp"
    data_name = os.path.basename(csv_path)
    x_index = list(header).index(x_column) + 1
    plots = [
        f"'{data_name}' using {x_index}:{list(header).index(name) + 1} with linespoints title '{name}'"
        for name in y_columns
    ]
    lines = [
        "set datafile separator ','",
        "set key autotitle columnhead",
        f"set title '{title}'",
        f"set xlabel '{x_column}'",
    ]
    if logscale_y:
        lines.append("set logscale y")
    lines.append("plot " + ", \\\n     ".join(plots))
    try:
        with open(script_path, "w", encoding="utf-8") as f:
            f.write("\n".join(lines) + "\n")
    except OSError as e:
        raise IoError(f"cannot write plot script {script_path}: {e}") from e
    return script_path


def trajectory_rows(traj: Trajectory, g: Grid) -> List[List[float]]:
    """Long-format (t, x, u, v) rows over at most MAX_DUMPED_SLICES + 1 time nodes."""
    stride = max(1, -(-g.nt // MAX_DUMPED_SLICES))
    steps = list(range(0, g.nt + 1, stride))
    if steps[-1] != g.nt:
        steps.append(g.nt)
    t = g.t
    x = g.x
    rows = []
    for n in steps:
        for i in range(g.nx):
            rows.append([t[n], x[i], traj.u[n, i], traj.v[n, i]])
    return rows


def write_trajectory(run_dir: str, name: str, traj: Trajectory, g: Grid) -> str:
    header = ("t", "x", "u", "v")
    path = write_csv_table(os.path.join(run_dir, f"{name}.csv"), header, trajectory_rows(traj, g))
    write_gnuplot_script(path, "x", ("u", "v"), header, title=f"{name} (all sampled times)")
    return path


def write_series(run_dir: str, name: str, g: Grid, series: Dict[str, np.ndarray]) -> str:
    """Time series sharing the grid's time nodes, one column each."""
    names = list(series)
    header = ["t"] + names
    rows = [[g.t[n]] + [series[key][n] for key in names] for n in range(g.nt + 1)]
    path = write_csv_table(os.path.join(run_dir, f"{name}.csv"), header, rows)
    write_gnuplot_script(path, "t", names, header, title=name)
    return path

"""Experiment runner: one run directory per experiment, sweeps over a worker pool."""
from __future__ import annotations

import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy.stats import spearmanr

from config import ExperimentConfig, __version__
from core import BoundaryData, x_norm
from critical_lengths import CANDIDATE_CAVEAT, WITNESS_DIP, enumerate_candidates, spectral_witness
from errors import ConfigError, DegenerateSymbol, NoConvergence
from file_manager import (
    create_run_dir,
    make_run_id,
    utc_now,
    write_csv_table,
    write_gnuplot_script,
    write_manifest,
    write_series,
    write_trajectory,
)
from hum_control import (
    ControlConfig,
    check_one_control_condition,
    observability_margin,
    solve_hum,
    trace_constant_estimate,
)
from linear_solvers import duality_residual, solve_adjoint, solve_forward_linear, trace_combinations
from nonlinear import PicardSettings, control_nonlinear, solve_nonlinear
from time_sobolev import SobolevSpec, embedding_constant_estimate
from verification import CHECKS_HEADER, run_checks

SWEEP_AXES = ("L", "T", "amplitude")
SWEEP_HEADER = ("value", "status", "margin", "terminal_error", "relative_error", "min_sigma")

STATUS_EXIT_CODES = {"ok": 0, "no_convergence": 2, "failed": 1}


@dataclass
class RunResult:
    run_id: str
    run_dir: str
    status: str
    summary: Dict[str, Any] = field(default_factory=dict)
    manifest: Dict[str, Any] = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        return STATUS_EXIT_CODES[self.status]


def _trace_series(traces) -> Dict[str, np.ndarray]:
    series = {}
    for name in ("u", "v"):
        for k in range(3):
            for endpoint, label in ((0, "0"), (1, "L")):
                series[f"{name}_x{k}_{label}"] = traces.series(name, k, endpoint)
    return series


def _norm_series(traj, cfg: ExperimentConfig) -> np.ndarray:
    return np.array([x_norm(traj.slice(n), cfg.params, cfg.grid) for n in range(len(traj))])


# Experiment handlers. Each returns the summary metrics and marks its
# operations in ``ops``.

def _simulate(cfg: ExperimentConfig, run_dir: str, ops: Dict[str, str]) -> Dict[str, Any]:
    p, g = cfg.params, cfg.grid
    init = cfg.state(cfg.init)
    bd = BoundaryData.zeros(g)
    summary: Dict[str, Any] = {}
    if p.a1 == 0 and p.a2 == 0 and not cfg.self_terms:
        traj, traces = solve_forward_linear(p, g, init, bd)
        ops["solve_forward_linear"] = "ok"
    else:
        settings = PicardSettings(tol=cfg.tolerances["picard_tol"],
                                  maxit=int(cfg.tolerances["picard_maxit"]),
                                  damping=cfg.damping, self_terms=cfg.self_terms)
        ops["solve_nonlinear"] = "running"
        traj, traces, iterations = solve_nonlinear(p, g, init, bd, settings)
        ops["solve_nonlinear"] = "ok"
        summary["picard_iterations"] = iterations
    write_trajectory(run_dir, "trajectory", traj, g)
    write_series(run_dir, "traces", g, _trace_series(traces))
    write_series(run_dir, "energy", g, {"x_norm": _norm_series(traj, cfg)})
    summary.update({
        "initial_norm": x_norm(init, p, g),
        "final_norm": x_norm(traj.final, p, g),
        "max_abs": traj.max_abs(),
    })
    return summary


def _adjoint(cfg: ExperimentConfig, run_dir: str, ops: Dict[str, str]) -> Dict[str, Any]:
    p, g = cfg.params, cfg.grid
    final = cfg.state(cfg.target).interior()
    traj, traces = solve_adjoint(p, g, final, mode=cfg.adjoint_mode)
    ops["solve_adjoint"] = "ok"
    write_trajectory(run_dir, "adjoint", traj, g)
    combos = traces.duals if traces.duals is not None else trace_combinations(traces, p)
    write_series(run_dir, "adjoint_traces", g, {**_trace_series(traces), **{
        f"dual_{name}": series for name, series in combos.items()}})

    rng = np.random.default_rng(cfg.seed)
    inputs = BoundaryData.from_channels(g, {
        name: 0.1 * np.sin((k + 1) * math.pi * g.t / g.T) * rng.standard_normal()
        for k, name in enumerate(("h0", "h1", "h2", "g0", "g1", "g2"))
    })
    lhs, rhs = duality_residual(p, g, inputs, final, mode=cfg.adjoint_mode)
    ops["duality_residual"] = "ok"
    return {
        "final_norm": x_norm(final, p, g),
        "initial_norm": x_norm(traj.initial, p, g),
        "duality_lhs": lhs,
        "duality_rhs": rhs,
        "duality_gap": abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300),
    }


def _critical_atlas(cfg: ExperimentConfig, run_dir: str, ops: Dict[str, str]) -> Dict[str, Any]:
    p = cfg.params
    candidates = enumerate_candidates(p, cfg.L_max, include_zero=cfg.include_zero)
    ops["enumerate_candidates"] = "ok"
    p_values = cfg.p_values()
    steps = int(cfg.tolerances["lanczos_steps"])
    rows = []
    for cand in candidates:
        witness = spectral_witness(p, cand.L, p_values)
        margin = None
        if steps > 0:
            margin = observability_margin(p, cfg.grid.with_length(cand.L), cfg.control,
                                          steps=steps, seed=cfg.seed)
        rows.append([cand.L, cand.alpha, *cand.index, cand.consistent, cand.degenerate,
                     max(cand.vieta_residuals), cand.p.real, cand.p.imag,
                     witness.min_sigma, witness.argmin_p, margin])
    ops["spectral_witness"] = "ok"
    if steps > 0:
        ops["observability_margin"] = "ok"
    header = ("L", "alpha_index", "k", "l", "m", "n", "s", "consistent", "degenerate",
              "vieta_residual", "p_real", "p_imag", "sigma_min", "argmin_p", "margin")
    path = write_csv_table(os.path.join(run_dir, "atlas.csv"), header, rows)
    write_gnuplot_script(path, "L", ("sigma_min",), header, title="critical lengths", logscale_y=True)
    dips = sum(1 for row in rows if row[-3] < WITNESS_DIP)
    if candidates and dips < len(candidates):
        logging.warning("⚠️ %d of %d candidates show no witness dip: %s",
                        len(candidates) - dips, len(candidates), CANDIDATE_CAVEAT)
    return {
        "candidates": len(candidates),
        "smallest_L": candidates[0].L if candidates else None,
        "all_consistent": all(c.consistent for c in candidates),
        "witness_dips": dips,
        "caveat": CANDIDATE_CAVEAT,
    }


def _witness_scan(cfg: ExperimentConfig, run_dir: str, ops: Dict[str, str]) -> Dict[str, Any]:
    witness = spectral_witness(cfg.params, cfg.grid.L, cfg.p_values())
    ops["spectral_witness"] = "ok"
    header = ("p", "sigma_min")
    path = write_csv_table(os.path.join(run_dir, "witness.csv"), header, witness.lambda_scan)
    write_gnuplot_script(path, "p", ("sigma_min",), header, title=f"witness L={cfg.grid.L:g}",
                         logscale_y=True)
    return {"min_sigma": witness.min_sigma, "argmin_p": witness.argmin_p,
            "skipped": len(witness.skipped)}


def _gramian_margin(cfg: ExperimentConfig, run_dir: str, ops: Dict[str, str]) -> Dict[str, Any]:
    p, g = cfg.params, cfg.grid
    margin = observability_margin(p, g, cfg.control, steps=int(cfg.tolerances["lanczos_steps"]),
                                  seed=cfg.seed)
    ops["observability_margin"] = "ok"
    summary: Dict[str, Any] = {"observability_margin": margin}
    try:
        summary["min_sigma"] = spectral_witness(p, g.L, cfg.p_values()).min_sigma
        ops["spectral_witness"] = "ok"
    except DegenerateSymbol as e:
        logging.warning("⚠️ No witness for L=%g: %s", g.L, e)
        ops["spectral_witness"] = "failed"
    if cfg.control is ControlConfig.ONE_CONTROL:
        beta_hat = embedding_constant_estimate(SobolevSpec(1.0 / 3.0, g.T), nt=g.nt)
        c_hat = trace_constant_estimate(p, g)
        holds, bound = check_one_control_condition(p, g.L, g.T, beta_hat, c_hat)
        ops["check_one_control_condition"] = "ok"
        summary.update({"beta_hat": beta_hat, "C_T_hat": c_hat, "length_bound": bound,
                        "condition_holds": holds})
    return summary


def _hum_outputs(run_dir: str, cfg: ExperimentConfig, controls: BoundaryData, traj) -> None:
    write_series(run_dir, "controls", cfg.grid,
                 {name: controls.channel(name) for name in cfg.control.active_channels})
    write_trajectory(run_dir, "controlled", traj, cfg.grid)


def _control(cfg: ExperimentConfig, run_dir: str, ops: Dict[str, str]) -> Dict[str, Any]:
    p, g = cfg.params, cfg.grid
    ops["solve_hum"] = "running"
    controls, traj, report = solve_hum(p, g, cfg.control, cfg.state(cfg.init), cfg.state(cfg.target),
                                       tol=cfg.tolerances["hum_tol"],
                                       maxit=int(cfg.tolerances["hum_maxit"]),
                                       shift=cfg.tolerances["shift"])
    ops["solve_hum"] = "ok"
    _hum_outputs(run_dir, cfg, controls, traj)
    history = [[k, r] for k, r in enumerate(report.cg_residual_history)]
    path = write_csv_table(os.path.join(run_dir, "cg_history.csv"), ("iteration", "residual"), history)
    write_gnuplot_script(path, "iteration", ("residual",), ("iteration", "residual"),
                         title="CG residual", logscale_y=True)
    return report.to_dict()


def _nonlinear_control(cfg: ExperimentConfig, run_dir: str, ops: Dict[str, str]) -> Dict[str, Any]:
    p, g = cfg.params, cfg.grid
    settings = PicardSettings(tol=cfg.tolerances["picard_tol"],
                              maxit=int(cfg.tolerances["picard_maxit"]),
                              damping=cfg.damping, self_terms=cfg.self_terms)
    ops["control_nonlinear"] = "running"
    controls, traj, report = control_nonlinear(
        p, g, cfg.control, cfg.state(cfg.init), cfg.state(cfg.target), settings,
        hum_tol=cfg.tolerances["hum_tol"], outer_tol=cfg.tolerances["outer_tol"],
        outer_maxit=int(cfg.tolerances["outer_maxit"]), hum_maxit=int(cfg.tolerances["hum_maxit"]),
        shift=cfg.tolerances["shift"])
    ops["control_nonlinear"] = "ok"
    _hum_outputs(run_dir, cfg, controls, traj)
    return report.to_dict()


def _verify_suite(cfg: ExperimentConfig, run_dir: str, ops: Dict[str, str]) -> Dict[str, Any]:
    results = run_checks(cfg.params, cfg.grid.L, cfg.grid.T, level=cfg.verify_level, seed=cfg.seed)
    for result in results:
        ops[result.name] = "ok" if result.passed else "failed"
    write_csv_table(os.path.join(run_dir, "checks.csv"), CHECKS_HEADER, [r.row() for r in results])
    passed = sum(r.passed for r in results)
    return {"checks_passed": passed, "checks_failed": len(results) - passed}


HANDLERS: Dict[str, Callable[[ExperimentConfig, str, Dict[str, str]], Dict[str, Any]]] = {
    "simulate": _simulate,
    "adjoint": _adjoint,
    "critical-atlas": _critical_atlas,
    "witness-scan": _witness_scan,
    "gramian-margin": _gramian_margin,
    "control": _control,
    "nonlinear-control": _nonlinear_control,
    "verify-suite": _verify_suite,
}


def _failure_summary(error: NoConvergence) -> Dict[str, Any]:
    summary: Dict[str, Any] = {"iterations": error.iterations, "residual": error.residual,
                               "error": str(error)}
    if error.report is not None and hasattr(error.report, "to_dict"):
        summary.update(error.report.to_dict())
    return summary


def run_experiment(cfg: ExperimentConfig, base_dir: str, run_id: Optional[str] = None) -> RunResult:
    """Run one experiment and write its manifest, also when it fails.

    NoConvergence outcomes are returned with status "no_convergence"; any
    other exception is re-raised after the manifest is written.
    """
    run_id = run_id or make_run_id(cfg.experiment, cfg.seed)
    run_dir = create_run_dir(base_dir, run_id)
    started_at = utc_now()
    start = time.perf_counter()
    ops: Dict[str, str] = {}
    error: Optional[Exception] = None
    logging.info("🚀 Running %s (%s)", cfg.experiment, run_id)
    try:
        summary = HANDLERS[cfg.experiment](cfg, run_dir, ops)
        status = "ok"
    except NoConvergence as e:
        logging.error("❌ %s", e)
        summary = _failure_summary(e)
        status = "no_convergence"
    except Exception as e:
        summary = {"error": str(e)}
        status = "failed"
        error = e
    for name, op_status in ops.items():
        if op_status == "running":
            ops[name] = status

    manifest = {
        "run_id": run_id,
        "experiment": cfg.experiment,
        "config": cfg.to_dict(),
        "code_version": __version__,
        "started_at": started_at.isoformat(),
        "wall_time": time.perf_counter() - start,
        "status": status,
        "operations": ops,
        "summary": summary,
    }
    write_manifest(run_dir, manifest)
    if error is not None:
        raise error
    return RunResult(run_id=run_id, run_dir=run_dir, status=status, summary=summary,
                     manifest=manifest)


def _with_value(cfg: ExperimentConfig, axis: str, value: float) -> ExperimentConfig:
    if axis == "L":
        return replace(cfg, grid=cfg.grid.with_length(value))
    if axis == "T":
        return replace(cfg, grid=cfg.grid.with_horizon(value))
    return replace(cfg, amplitude=value)


def _sweep_row(value: float, result: RunResult) -> List[Any]:
    summary = result.summary
    return [value, result.status, summary.get("observability_margin"),
            summary.get("terminal_error"), summary.get("relative_error"),
            summary.get("min_sigma")]


def witness_margin_agreement(values: Sequence[float], margins: Sequence[Optional[float]],
                             sigmas: Sequence[Optional[float]]) -> Optional[Dict[str, Any]]:
    """Spearman correlation of witness σ_min against the Gramian margin along a sweep.

    Points missing either number are dropped; fewer than three points give
    None. The minima are co-located when their sweep positions differ by at
    most one point.
    """
    kept = [(v, m, s) for v, m, s in zip(values, margins, sigmas)
            if m is not None and s is not None and np.isfinite(m) and np.isfinite(s)]
    if len(kept) < 3:
        return None
    kept_values, kept_margins, kept_sigmas = (np.array(col, dtype=float) for col in zip(*kept))
    rho = float(spearmanr(kept_sigmas, kept_margins)[0])
    i_sigma = int(np.argmin(kept_sigmas))
    i_margin = int(np.argmin(kept_margins))
    return {
        "spearman": rho,
        "argmin_sigma": float(kept_values[i_sigma]),
        "argmin_margin": float(kept_values[i_margin]),
        "colocated": abs(i_sigma - i_margin) <= 1,
    }


def _sweep_status(statuses: Sequence[str]) -> str:
    for status in ("failed", "no_convergence"):
        if status in statuses:
            return status
    return "ok"


def sweep(cfg: ExperimentConfig, axis: str, values: Sequence[float], base_dir: str,
          threads: int = 1, sweep_id: Optional[str] = None) -> List[RunResult]:
    """Run ``cfg`` once per value of ``axis`` and aggregate into sweep.csv.

    Each point gets its own run directory under the sweep directory; points
    run on a thread pool of ``threads`` workers and share no mutable state.
    The sweep directory carries its own manifest.json listing the points.
    """
    if axis not in SWEEP_AXES:
        raise ConfigError(f"axis: unknown value '{axis}' (expected one of {', '.join(SWEEP_AXES)})")
    values = [float(v) for v in values]
    if not values:
        raise ConfigError("values: empty sweep")
    if any(not (v > 0) for v in values):
        raise ConfigError("values: sweep values must be positive")
    if values != sorted(values):
        raise ConfigError("values: sweep values must be sorted")
    points = [_with_value(cfg, axis, v) for v in values]

    sweep_id = sweep_id or make_run_id(f"sweep-{axis}-{cfg.experiment}", cfg.seed)
    sweep_dir = create_run_dir(base_dir, sweep_id)
    started_at = utc_now()
    start = time.perf_counter()
    names = [f"point-{k:03d}" for k in range(len(points))]
    logging.info("🚀 Sweep over %s: %d points, %d workers", axis, len(points), threads)
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(lambda item: run_experiment(item[0], sweep_dir, item[1]),
                                zip(points, names)))

    rows = [_sweep_row(v, r) for v, r in zip(values, results)]
    path = write_csv_table(os.path.join(sweep_dir, "sweep.csv"), SWEEP_HEADER, rows)
    write_gnuplot_script(path, "value", ("margin", "min_sigma"), SWEEP_HEADER,
                         title=f"sweep over {axis}", logscale_y=True)

    statuses = [r.status for r in results]
    summary: Dict[str, Any] = {"points": len(results),
                               "statuses": {s: statuses.count(s) for s in sorted(set(statuses))}}
    if axis == "L":
        agreement = witness_margin_agreement(values, [row[2] for row in rows], [row[5] for row in rows])
        if agreement is not None:
            summary["witness_margin"] = agreement
            logging.info("Witness/margin along L: spearman %.3f, co-located %s",
                         agreement["spearman"], agreement["colocated"])
    write_manifest(sweep_dir, {
        "run_id": sweep_id,
        "experiment": "sweep",
        "axis": axis,
        "values": values,
        "config": cfg.to_dict(),
        "code_version": __version__,
        "started_at": started_at.isoformat(),
        "wall_time": time.perf_counter() - start,
        "status": _sweep_status(statuses),
        "points": [{"name": name, "value": v, "run_id": r.run_id, "status": r.status}
                   for name, v, r in zip(names, values, results)],
        "summary": summary,
    })
    return results


def parse_values(text: str) -> List[float]:
    """Comma-separated numbers, or start:stop:num for an evenly spaced list."""
    text = (text or "").strip()
    if not text:
        raise ConfigError("values: empty sweep")
    try:
        if ":" in text:
            start, stop, num = text.split(":")
            return [float(v) for v in np.linspace(float(start), float(stop), int(num))]
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise ConfigError(f"values: cannot parse '{text}' ({e})") from e

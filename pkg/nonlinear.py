"""Nonlinear coupled system by Picard iteration, and nonlinear boundary control.

The quadratic terms are moved to the right-hand side and lagged: every
iterate is one linear solve whose sources are the quadratic terms of the
previous iterate. The transport term (r/c) v_x stays in the linear solver.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from core import (
    BoundaryData,
    Grid,
    SourcePair,
    StatePair,
    Trajectory,
    ValidatedParams,
    check_state,
    check_trajectory,
    trapezoid_weights,
    x_norm,
)
from errors import InvalidParams, NoConvergence
from hum_control import ControlConfig, HumReport, solve_hum
from linear_solvers import CoupledLinearSolver, TraceSet, extract_traces


@dataclass(frozen=True)
class PicardSettings:
    tol: float = 1e-10
    maxit: int = 50
    damping: float = 1.0
    self_terms: bool = False

    def __post_init__(self):
        if not (self.tol > 0):
            raise InvalidParams(f"tol>0 (tol={self.tol})")
        if self.maxit < 1:
            raise InvalidParams(f"maxit>=1 (maxit={self.maxit})")
        if not (0 < self.damping <= 1):
            raise InvalidParams(f"damping in (0, 1] (damping={self.damping})")


def _quadratic_terms(p: ValidatedParams, u: np.ndarray, v: np.ndarray, dx: float,
                     self_terms: bool) -> Tuple[np.ndarray, np.ndarray]:
    axis = u.ndim - 1
    u_x = np.gradient(u, dx, axis=axis, edge_order=2)
    v_x = np.gradient(v, dx, axis=axis, edge_order=2)
    uv_x = np.gradient(u * v, dx, axis=axis, edge_order=2)
    f = -p.a1 * v * v_x - p.a2 * uv_x
    s = -(p.a2 * p.b / p.c) * u * u_x - (p.a1 * p.b / p.c) * uv_x
    if self_terms:
        f = f - u * u_x
        s = s - v * v_x / p.c
    return f, s


def nonlinearity(p: ValidatedParams, slice: StatePair, g: Grid,
                 self_terms: bool = False) -> Tuple[np.ndarray, np.ndarray]:
    """Quadratic right-hand sides (f, s) of one time slice.

    f = -a1 v v_x - a2 (uv)_x, s = -(a2 b/c) u u_x - (a1 b/c)(uv)_x, with
    -u u_x and -(1/c) v v_x added when ``self_terms`` is set.
    """
    check_state(slice, g, "slice")
    return _quadratic_terms(p, slice.u, slice.v, g.dx, self_terms)


def trajectory_nonlinearity(p: ValidatedParams, traj: Trajectory, g: Grid,
                            self_terms: bool = False) -> SourcePair:
    check_trajectory(traj, g)
    return SourcePair(*_quadratic_terms(p, traj.u, traj.v, g.dx, self_terms))


def sup_x_distance(lhs: Trajectory, rhs: Trajectory, p: ValidatedParams, g: Grid) -> float:
    """max over time nodes of the 𝒳-norm of the difference."""
    w = trapezoid_weights(g)
    du = lhs.u - rhs.u
    dv = lhs.v - rhs.v
    per_time = (p.b / p.c) * (du * du) @ w + (dv * dv) @ w
    return float(np.sqrt(np.max(per_time)))


def solve_nonlinear(p: ValidatedParams, g: Grid, init: StatePair, bd: BoundaryData,
                    settings: PicardSettings, extra_source: Optional[SourcePair] = None,
                    solver: Optional[CoupledLinearSolver] = None,
                    history: Optional[List[float]] = None) -> Tuple[Trajectory, TraceSet, int]:
    """Picard iteration for the nonlinear system.

    The first iterate is the linear solution. Iteration stops when the
    quadratic sources vanish identically or when successive iterates differ
    by less than ``settings.tol`` in the sup-in-time 𝒳 norm.

    Args:
        extra_source: forcing added to the quadratic terms.
        solver: linear solver to reuse.
        history: if given, receives the successive differences.

    Raises:
        NoConvergence: when ``settings.maxit`` iterates do not settle.
    """
    solver = solver or CoupledLinearSolver(p, g)
    traj = solver.forward(init, bd, extra_source)
    iterations = 1
    source = trajectory_nonlinearity(p, traj, g, settings.self_terms)
    if source.max_abs() == 0:
        return traj, extract_traces(traj, g), iterations

    diff = float("inf")
    while iterations < settings.maxit:
        iterations += 1
        total = source if extra_source is None else source + extra_source
        new = solver.forward(init, bd, total)
        if settings.damping < 1:
            theta = settings.damping
            new = Trajectory(theta * new.u + (1 - theta) * traj.u,
                             theta * new.v + (1 - theta) * traj.v)
        diff = sup_x_distance(new, traj, p, g)
        if history is not None:
            history.append(diff)
        logging.debug("Picard iteration %d: difference %.3e", iterations, diff)
        traj = new
        if diff < settings.tol:
            return traj, extract_traces(traj, g), iterations
        source = trajectory_nonlinearity(p, traj, g, settings.self_terms)
    raise NoConvergence(iterations, diff, what="Picard iteration")


def duhamel_endpoint(p: ValidatedParams, g: Grid, traj: Trajectory, self_terms: bool = False,
                     solver: Optional[CoupledLinearSolver] = None) -> StatePair:
    """Terminal value of the quadratic terms of ``traj`` carried by the linear flow.

    Zero initial and boundary data; the sign is that of the quadratic terms
    on the left-hand side, so a nonlinear terminal state equals the linear
    one minus this value.
    """
    solver = solver or CoupledLinearSolver(p, g)
    source = trajectory_nonlinearity(p, traj, g, self_terms)
    if source.max_abs() == 0:
        return StatePair.zeros(g.nx)
    pushed = solver.forward(StatePair.zeros(g.nx), BoundaryData.zeros(g), source)
    return -1.0 * pushed.final


@dataclass
class NonlinearControlReport:
    outer_iterations: int
    terminal_error: float
    relative_error: float
    error_history: List[float] = field(default_factory=list)
    picard_iterations: List[int] = field(default_factory=list)
    hum: Optional[HumReport] = None
    converged: bool = True

    def to_dict(self) -> Dict:
        return {
            "outer_iterations": self.outer_iterations,
            "terminal_error": self.terminal_error,
            "relative_error": self.relative_error,
            "error_history": list(self.error_history),
            "picard_iterations": list(self.picard_iterations),
            "hum": None if self.hum is None else self.hum.to_dict(),
            "converged": self.converged,
        }


def control_nonlinear(p: ValidatedParams, g: Grid, cfg: ControlConfig, init: StatePair,
                      target: StatePair, settings: PicardSettings, hum_tol: float = 1e-3,
                      outer_tol: float = 1e-3, outer_maxit: int = 20, hum_maxit: int = 300,
                      shift: float = 0.0) -> Tuple[BoundaryData, Trajectory, NonlinearControlReport]:
    """Controls for the nonlinear system by a fixed point on the Duhamel term.

    Each outer step asks the linear controller for the target shifted by the
    Duhamel term of the current trajectory and re-solves the nonlinear
    system under the new controls. Success means a relative terminal error
    at most ``outer_tol + hum_tol``, relative to the mismatch between the
    target and the free linear evolution of ``init``.

    Raises:
        NoConvergence: after ``outer_maxit`` outer steps; ``report`` is attached.
    """
    if outer_maxit < 1:
        raise InvalidParams(f"outer_maxit>=1 (outer_maxit={outer_maxit})")
    solver = CoupledLinearSolver(p, g)
    free = solver.forward(init, BoundaryData.zeros(g))
    scale = x_norm((target - free.final).interior(), p, g)
    threshold = outer_tol + hum_tol

    duhamel = StatePair.zeros(g.nx)
    report = NonlinearControlReport(outer_iterations=0, terminal_error=float("inf"),
                                    relative_error=float("inf"))
    controls = BoundaryData.zeros(g)
    traj = free
    for outer in range(1, outer_maxit + 1):
        controls, _, hum_report = solve_hum(p, g, cfg, init, target + duhamel, tol=hum_tol,
                                            maxit=hum_maxit, shift=shift)
        traj, _, picard = solve_nonlinear(p, g, init, controls, settings, solver=solver)
        error = x_norm((traj.final - target).interior(), p, g)
        relative = error / scale if scale > 0 else error
        report.outer_iterations = outer
        report.terminal_error = error
        report.relative_error = relative
        report.error_history.append(relative)
        report.picard_iterations.append(picard)
        report.hum = hum_report
        logging.debug("Outer iteration %d: relative terminal error %.3e (Picard %d)",
                      outer, relative, picard)
        if relative <= threshold:
            return controls, traj, report
        duhamel = duhamel_endpoint(p, g, traj, settings.self_terms, solver=solver)
    report.converged = False
    raise NoConvergence(report.outer_iterations, report.relative_error,
                        what="nonlinear control fixed point", report=report)

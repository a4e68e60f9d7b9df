"""Boundary controls by the Hilbert Uniqueness Method.

The Gramian maps adjoint final data z to the terminal state reached from
rest under the controls synthesised from the adjoint traces of z. It is
symmetric and positive semidefinite under the pairing dx * Σ over interior
nodes, so it is inverted by conjugate gradients.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.linalg import eigh_tridiagonal

from core import BoundaryData, Grid, StatePair, Trajectory, ValidatedParams, check_state, x_norm
from errors import InvalidParams, MissingTrace, NoConvergence
from linear_solvers import (
    LEFT,
    RIGHT,
    CoupledLinearSolver,
    TraceSet,
    solve_adjoint,
    trace_combinations,
    unweighted_pairing,
)
from time_sobolev import HOMOGENEOUS, INHOMOGENEOUS, SobolevSpec, fractional_time_operator, mean_of, sobolev_norm

DIRICHLET_CHANNELS = ("h0", "h1", "g0", "g1")
SMOOTHING_POWER = -1.0 / 3.0


class ControlConfig(Enum):
    """Which boundary channels carry controls; the others are held at zero."""

    FOUR_CONTROL = "FourControl"
    ONE_CONTROL = "OneControl"
    ALT_MOP = "AltMOP"
    ALT_B = "AltB"
    ALT_G2 = "AltG2"

    @property
    def active_channels(self) -> Tuple[str, ...]:
        return _ACTIVE[self]

    @classmethod
    def from_name(cls, name: str) -> "ControlConfig":
        for member in cls:
            if name in (member.value, member.name):
                return member
        raise InvalidParams(f"unknown control configuration '{name}'")


_ACTIVE = {
    ControlConfig.FOUR_CONTROL: ("h2", "g0", "g1", "g2"),
    ControlConfig.ONE_CONTROL: ("h2",),
    ControlConfig.ALT_MOP: ("h1", "g1", "h2", "g2"),
    ControlConfig.ALT_B: ("h0", "h1", "h2", "g2"),
    ControlConfig.ALT_G2: ("g2",),
}


@dataclass
class HumReport:
    cg_iterations: int
    cg_residual_history: List[float]
    terminal_error: float
    relative_error: float
    observability_margin: float
    control_norms: Dict[str, float] = field(default_factory=dict)
    removed_means: Dict[str, float] = field(default_factory=dict)
    converged: bool = True

    def to_dict(self) -> Dict:
        return {
            "cg_iterations": self.cg_iterations,
            "cg_residual_history": list(self.cg_residual_history),
            "terminal_error": self.terminal_error,
            "relative_error": self.relative_error,
            "observability_margin": self.observability_margin,
            "control_norms": dict(self.control_norms),
            "removed_means": dict(self.removed_means),
            "converged": self.converged,
        }


def _channel_series(traces: TraceSet, p: ValidatedParams) -> Dict[str, np.ndarray]:
    if traces.duals is not None:
        return traces.duals
    if traces.v is None:
        raise MissingTrace("control formulas need traces of both components")
    return trace_combinations(traces, p)


def control_formulas(traces: TraceSet, cfg: ControlConfig, p: ValidatedParams,
                     T: float) -> BoundaryData:
    """Controls built from adjoint traces.

    Dirichlet channels receive (-Δ_t)^{-1/3} of their trace combination
    (homogeneous symbol, so the mean is dropped); Neumann channels receive
    the combination itself. Channels inactive under ``cfg`` are zero.

    Args:
        traces: adjoint traces; exact channel duals are used when attached.
        cfg: control configuration.
        p: system parameters.
        T: time horizon of the traces.
    """
    series = _channel_series(traces, p)
    smoothing = SobolevSpec(SMOOTHING_POWER, T, HOMOGENEOUS)
    channels = {}
    for name in cfg.active_channels:
        if name not in series:
            raise MissingTrace(f"no trace combination for channel {name}")
        data = np.asarray(series[name], dtype=float)
        if name in DIRICHLET_CHANNELS:
            data = fractional_time_operator(data, SMOOTHING_POWER, smoothing, endpoint="zero")
        channels[name] = data
    length = traces.u.shape[-1]
    return BoundaryData(**{
        name: channels.get(name, np.zeros(length))
        for name in ("h0", "h1", "h2", "g0", "g1", "g2")
    })


def removed_means(traces: TraceSet, cfg: ControlConfig, p: ValidatedParams) -> Dict[str, float]:
    """Means of the Dirichlet trace combinations dropped by the smoothing."""
    series = _channel_series(traces, p)
    return {name: mean_of(series[name]) for name in cfg.active_channels
            if name in DIRICHLET_CHANNELS}


def control_norms(controls: BoundaryData, cfg: ControlConfig, T: float) -> Dict[str, float]:
    """H^{1/3}(0,T) norms of Dirichlet controls and L²(0,T) norms of Neumann ones."""
    norms = {}
    for name in cfg.active_channels:
        s = 1.0 / 3.0 if name in DIRICHLET_CHANNELS else 0.0
        norms[name] = sobolev_norm(controls.channel(name), SobolevSpec(s, T, INHOMOGENEOUS))
    return norms


class GramianOperator:
    """z ↦ terminal state reached from rest under the HUM controls of z.

    ``weight`` enters on both sides: the adjoint starts from weight·z and the
    reached state is scaled by weight again, so Γ and its Rayleigh quotients
    scale with weight². One forward factorisation serves both sweeps; the
    instance is not shared between threads.
    """

    def __init__(self, p: ValidatedParams, g: Grid, cfg: ControlConfig, weight: float = 1.0):
        if not (weight > 0):
            raise InvalidParams(f"pairing weight must be positive (weight={weight})")
        self.p = p
        self.g = g
        self.cfg = cfg
        self.weight = weight
        self.solver = CoupledLinearSolver(p, g)
        self.matvecs = 0

    @property
    def dimension(self) -> int:
        return 2 * (self.g.nx - 2)

    def adjoint_traces(self, z: StatePair) -> TraceSet:
        check_state(z, self.g, "z")
        _, traces = solve_adjoint(self.p, self.g, (self.weight * z).interior(),
                                  mode="transpose", solver=self.solver)
        return traces

    def controls_for(self, z: StatePair) -> BoundaryData:
        return control_formulas(self.adjoint_traces(z), self.cfg, self.p, self.g.T)

    def apply(self, z: StatePair) -> StatePair:
        controls = self.controls_for(z)
        traj = self.solver.forward(StatePair.zeros(self.g.nx), controls)
        self.matvecs += 1
        return self.weight * traj.final.interior()

    def pairing(self, lhs: StatePair, rhs: StatePair) -> float:
        return self.weight * unweighted_pairing(lhs, rhs, self.g)

    # Interior nodes of (u, v) as one flat vector

    def to_vector(self, z: StatePair) -> np.ndarray:
        return np.concatenate([z.u[1:-1], z.v[1:-1]])

    def from_vector(self, vec: np.ndarray) -> StatePair:
        n = self.g.nx - 2
        u = np.zeros(self.g.nx)
        v = np.zeros(self.g.nx)
        u[1:-1] = vec[:n]
        v[1:-1] = vec[n:]
        return StatePair(u, v)

    def apply_vector(self, vec: np.ndarray) -> np.ndarray:
        return self.to_vector(self.apply(self.from_vector(vec)))


def gramian_apply(p: ValidatedParams, g: Grid, cfg: ControlConfig, z: StatePair) -> StatePair:
    return GramianOperator(p, g, cfg).apply(z)


def _smallest_ritz(diagonal: List[float], off_diagonal: List[float]) -> float:
    if not diagonal:
        return float("nan")
    if len(diagonal) == 1:
        return float(diagonal[0])
    values = eigh_tridiagonal(np.asarray(diagonal), np.asarray(off_diagonal[:len(diagonal) - 1]),
                              eigvals_only=True, select="i", select_range=(0, 0))
    return float(values[0])


def _conjugate_gradient(gram: GramianOperator, rhs: StatePair, tol: float, maxit: int,
                        shift: float):
    """CG on (Γ + shift·I) z = rhs in the Euclidean form of the pairing.

    Returns (z, relative residual history, smallest Ritz value, converged).
    The Ritz value comes from the Lanczos tridiagonal implied by the CG
    coefficients, with the shift removed.
    """
    p, g = gram.p, gram.g
    b = gram.to_vector(rhs)
    scale = x_norm(rhs, p, g)

    def weighted(vec):
        return x_norm(gram.from_vector(vec), p, g)

    z = np.zeros_like(b)
    r = b.copy()
    d = r.copy()
    rr = float(r @ r)
    history = [1.0]
    diagonal: List[float] = []
    off_diagonal: List[float] = []
    prev_alpha = None
    prev_beta = None
    for it in range(1, maxit + 1):
        Ad = gram.apply_vector(d) + shift * d
        curvature = float(d @ Ad)
        if curvature <= 0:
            logging.debug("CG stopped on nonpositive curvature %.3e at iteration %d", curvature, it)
            break
        alpha = rr / curvature
        z += alpha * d
        r -= alpha * Ad
        rr_new = float(r @ r)
        beta = rr_new / rr

        entry = 1.0 / alpha
        if prev_alpha is not None:
            entry += prev_beta / prev_alpha
        diagonal.append(entry)
        off_diagonal.append(np.sqrt(beta) / alpha)
        prev_alpha, prev_beta = alpha, beta

        history.append(weighted(r) / scale)
        logging.debug("CG iteration %d: relative residual %.3e", it, history[-1])
        if history[-1] <= tol:
            return z, history, _smallest_ritz(diagonal, off_diagonal) - shift, True
        d = r + beta * d
        rr = rr_new
    return z, history, _smallest_ritz(diagonal, off_diagonal) - shift, False


def solve_hum(p: ValidatedParams, g: Grid, cfg: ControlConfig, init: StatePair, target: StatePair,
              tol: float = 1e-3, maxit: int = 300, shift: float = 0.0
              ) -> Tuple[BoundaryData, Trajectory, HumReport]:
    """Controls steering ``init`` to ``target`` (interior nodes) at time T.

    Args:
        tol: relative 𝒳-norm tolerance on the terminal mismatch.
        maxit: CG iteration budget.
        shift: optional Tikhonov shift added to the Gramian.

    Returns:
        (controls, controlled trajectory, report).

    Raises:
        NoConvergence: CG budget exhausted; ``report`` carries the partial run.
    """
    if not (tol > 0):
        raise InvalidParams(f"tol>0 (tol={tol})")
    if maxit < 1:
        raise InvalidParams(f"maxit>=1 (maxit={maxit})")
    if shift < 0:
        raise InvalidParams(f"shift>=0 (shift={shift})")
    check_state(init, g, "init")
    check_state(target, g, "target")
    gram = GramianOperator(p, g, cfg)
    free = gram.solver.forward(init, BoundaryData.zeros(g))
    rhs = (target - free.final).interior()
    scale = x_norm(rhs, p, g)
    if scale == 0:
        report = HumReport(cg_iterations=0, cg_residual_history=[0.0], terminal_error=0.0,
                           relative_error=0.0, observability_margin=float("nan"),
                           control_norms={name: 0.0 for name in cfg.active_channels})
        return BoundaryData.zeros(g), free, report

    logging.debug("HUM solve (%s): L=%g T=%g, mismatch %.3e", cfg.value, g.L, g.T, scale)
    z, history, margin, converged = _conjugate_gradient(gram, rhs, tol, maxit, shift)
    z_state = gram.from_vector(z)
    traces = gram.adjoint_traces(z_state)
    controls = control_formulas(traces, cfg, p, g.T)
    traj = gram.solver.forward(init, controls)
    terminal_error = x_norm((traj.final - target).interior(), p, g)
    report = HumReport(
        cg_iterations=len(history) - 1,
        cg_residual_history=history,
        terminal_error=terminal_error,
        relative_error=terminal_error / scale,
        observability_margin=margin,
        control_norms=control_norms(controls, cfg, g.T),
        removed_means=removed_means(traces, cfg, p),
        converged=converged,
    )
    if not converged:
        raise NoConvergence(report.cg_iterations, history[-1], what="Gramian conjugate gradient",
                            report=report)
    return controls, traj, report


def observability_margin(p: ValidatedParams, g: Grid, cfg: ControlConfig, steps: int = 60,
                         seed: int = 0, weight: float = 1.0) -> float:
    """Smallest Ritz value of the Gramian after ``steps`` Lanczos steps.

    The Lanczos basis is fully re-orthogonalised. The value is the Rayleigh
    quotient pairing(Γz, z)/pairing(z, z) minimised over the Krylov space, an
    upper bound for the smallest eigenvalue.
    """
    if steps < 1:
        raise InvalidParams(f"steps>=1 (steps={steps})")
    gram = GramianOperator(p, g, cfg, weight=weight)
    n = gram.dimension
    m = min(steps, n)
    rng = np.random.default_rng(seed)
    q = rng.standard_normal(n)
    q /= np.linalg.norm(q)
    basis = np.zeros((m, n))
    alphas: List[float] = []
    betas: List[float] = []
    for j in range(m):
        basis[j] = q
        w = gram.apply_vector(q)
        alpha = float(q @ w)
        alphas.append(alpha)
        active = basis[:j + 1]
        for _ in range(2):
            w -= active.T @ (active @ w)
        beta = float(np.linalg.norm(w))
        if beta <= 1e-12 * max(1.0, abs(alpha)) or j == m - 1:
            break
        betas.append(beta)
        q = w / beta
    margin = _smallest_ritz(alphas, betas)
    logging.debug("Lanczos margin (%s, L=%g, T=%g): %.6e after %d steps",
                  cfg.value, g.L, g.T, margin, len(alphas))
    return margin


def check_one_control_condition(p: ValidatedParams, L: float, T: float, beta_hat: float,
                                C_T_hat: float) -> Tuple[bool, float]:
    """Sufficient smallness condition L < min{b,c} T / (max{b,c} β̂ Ĉ_T)."""
    if not (beta_hat > 0 and C_T_hat > 0):
        raise InvalidParams(f"estimates must be positive (beta={beta_hat}, C_T={C_T_hat})")
    bound = min(p.b, p.c) * T / (max(p.b, p.c) * beta_hat * C_T_hat)
    return L < bound, float(bound)


# Adjoint estimates

def _trace_norm_squared(traces: TraceSet, T: float) -> float:
    total = 0.0
    for name in ("u", "v"):
        for endpoint in (LEFT, RIGHT):
            total += sobolev_norm(traces.series(name, 1, endpoint), SobolevSpec(0.0, T)) ** 2
            total += sobolev_norm(traces.series(name, 2, endpoint), SobolevSpec(SMOOTHING_POWER, T)) ** 2
    return total


def trace_constant_estimate(p: ValidatedParams, g: Grid, modes: int = 3) -> float:
    """Ĉ_T: largest sharp-trace norm of the adjoint over sine-mode final data.

    First derivatives are measured in L²(0,T) and second derivatives in
    H^{-1/3}(0,T), at both endpoints and for both components.
    """
    if modes < 1:
        raise InvalidParams(f"modes>=1 (modes={modes})")
    x = g.x
    worst = 0.0
    for k in range(1, modes + 1):
        profile = np.sin(k * np.pi * x / g.L)
        profile[[0, -1]] = 0.0
        for final in (StatePair(profile, np.zeros(g.nx)), StatePair(np.zeros(g.nx), profile)):
            _, traces = solve_adjoint(p, g, final, mode="reflection")
            ratio = np.sqrt(_trace_norm_squared(traces, g.T)) / x_norm(final, p, g)
            worst = max(worst, float(ratio))
    return worst


def adjoint_energy_check(p: ValidatedParams, g: Grid, final: StatePair,
                         slack: float = 0.05) -> Tuple[bool, float, float]:
    """Energy bound of the adjoint final data by the solution and its traces.

    ‖z‖² ≤ (C/T)‖(φ,ψ)‖²_{L²(0,T;𝒳)} + ½‖φ_x(L)‖² + (b/2c)‖ψ_x(L)‖²
           + ½‖φ_x(L)+(ab/c)ψ_x(L)‖² + (b/2c)‖aφ_x(L)+ψ_x(L)/c‖²
    with C = max{b,c}/min{b,c}.

    Returns:
        (holds within ``slack``, left side, right side).
    """
    check_state(final, g, "final")
    final = final.interior()
    traj, traces = solve_adjoint(p, g, final, mode="reflection")
    C = max(p.b, p.c) / min(p.b, p.c)
    solution = g.dt * sum(x_norm(traj.slice(n), p, g) ** 2 for n in range(g.nt))
    phi_x = traces.series("u", 1, RIGHT)
    psi_x = traces.series("v", 1, RIGHT)

    def sq(series):
        return sobolev_norm(series, SobolevSpec(0.0, g.T)) ** 2

    ab_c = p.a * p.b / p.c
    rhs = (C / g.T * solution + 0.5 * sq(phi_x) + p.b / (2.0 * p.c) * sq(psi_x)
           + 0.5 * sq(phi_x + ab_c * psi_x) + p.b / (2.0 * p.c) * sq(p.a * phi_x + psi_x / p.c))
    lhs = x_norm(final, p, g) ** 2
    return lhs <= (1.0 + slack) * rhs, float(lhs), float(rhs)

"""Crank-Nicolson solvers for the scalar Airy problem, the coupled linear
system and its adjoint, plus boundary trace extraction.

Unknowns are stacked component by component: q = (u_0..u_N, v_0..v_N).
Rows 0 and N of every component are Dirichlet rows. Rows 1..N-1 carry the
PDE. The third-derivative stencil is the centered five-point one; the node
left of x=0 comes from odd reflection through the Dirichlet value and the
node right of x=L from the centered Neumann condition, so u_x(L) enters the
row at N-1 as data.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.integrate import trapezoid
from scipy.sparse.linalg import splu

from core import (
    BoundaryData,
    Grid,
    SourcePair,
    StatePair,
    SystemParams,
    Trajectory,
    ValidatedParams,
    check_boundary,
    check_sources,
    check_state,
    x_norm,
)
from diagonalization import compute_decoupling, from_diagonal, to_diagonal, transform_boundary_and_sources
from errors import DimensionMismatch, GridTooCoarse, InvalidParams, NoConvergence, SingularStep, Unstable

GROWTH_LIMIT = 1e12
LEFT, RIGHT = 0, 1


# Stencils

def third_derivative_matrix(g: Grid) -> sp.csr_matrix:
    """Interior rows of the discrete u_xxx; rows 0 and N are empty."""
    n = g.nx
    N = n - 1
    h3 = 2.0 * g.dx ** 3
    rows, cols, vals = [], [], []

    def put(i, j, value):
        rows.append(i)
        cols.append(j)
        vals.append(value / h3)

    # u_{-1} = 2u_0 - u_1 removes u_0 from the first row
    put(1, 1, 1.0)
    put(1, 2, -2.0)
    put(1, 3, 1.0)
    for i in range(2, N - 1):
        put(i, i - 2, -1.0)
        put(i, i - 1, 2.0)
        put(i, i + 1, -2.0)
        put(i, i + 2, 1.0)
    # u_{N+1} = u_{N-1} + 2 dx u_x(L); the data part is added by the stepper
    i = N - 1
    put(i, i - 2, -1.0)
    put(i, i - 1, 2.0)
    put(i, i + 1, -2.0)
    put(i, i, 1.0)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def first_derivative_matrix(g: Grid) -> sp.csr_matrix:
    n = g.nx
    i = np.arange(1, n - 1)
    rows = np.concatenate([i, i])
    cols = np.concatenate([i + 1, i - 1])
    vals = np.concatenate([np.ones(i.size), -np.ones(i.size)]) / (2.0 * g.dx)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


# Stepper

@dataclass
class TransposeSensitivity:
    """Gradients of J = <q^nt, terminal> (Euclidean) with respect to every input.

    ``states[n]`` is dJ/dq^n; ``left``/``right``/``neumann`` have one column
    per component; ``sources`` is dJ/d(src) on the full node grid.
    """

    states: np.ndarray
    initial: np.ndarray
    left: np.ndarray
    right: np.ndarray
    neumann: np.ndarray
    sources: np.ndarray


class CrankNicolsonStepper:
    """One-step operator A q^{n+1} = B q^n + boundary and source terms.

    ``dispersion`` is the m x m matrix multiplying the third derivatives,
    ``transport`` the per-component coefficient of the first derivative.
    The sparse LU factorisation of A is computed once and reused by both
    the forward and the transposed sweeps.
    """

    def __init__(self, dispersion: np.ndarray, transport: Sequence[float], g: Grid):
        dispersion = np.atleast_2d(np.asarray(dispersion, dtype=float))
        m = dispersion.shape[0]
        if dispersion.shape != (m, m) or len(transport) != m:
            raise DimensionMismatch("dispersion must be square and match transport")
        self.g = g
        self.m = m
        self.size = m * g.nx
        self.half_dt = 0.5 * g.dt
        nx = g.nx

        K = sp.kron(sp.csr_matrix(dispersion), third_derivative_matrix(g))
        K = K + sp.kron(sp.diags(np.asarray(transport, dtype=float)), first_derivative_matrix(g))
        mask = np.ones(nx)
        mask[[0, -1]] = 0.0
        self.mask = np.tile(mask, m)
        P = sp.diags(self.mask)
        eye = sp.identity(self.size, format="csr")
        A = P @ (eye + self.half_dt * K) + sp.diags(1.0 - self.mask)
        self.B = (P @ (eye - self.half_dt * K)).tocsr()
        self.BT = self.B.T.tocsr()

        self.left_rows = np.arange(m) * nx
        self.right_rows = np.arange(m) * nx + nx - 1
        self.ghost_rows = np.arange(m) * nx + nx - 2
        self.ghost_coef = dispersion / g.dx ** 2
        try:
            self._lu = splu(A.tocsc())
        except RuntimeError as exc:
            raise SingularStep(0, str(exc)) from exc
        logging.debug("Factorised %dx%d Crank-Nicolson matrix (m=%d, dt=%.3e, dx=%.3e)",
                      self.size, self.size, m, g.dt, g.dx)

    def step(self, q: np.ndarray, left_new: np.ndarray, right_new: np.ndarray,
             neumann_sum: np.ndarray, src_sum: Optional[np.ndarray]) -> np.ndarray:
        """Advance one step; ``*_sum`` are old-plus-new level values."""
        rhs = self.B @ q
        rhs[self.ghost_rows] -= self.half_dt * (self.ghost_coef @ neumann_sum)
        if src_sum is not None:
            rhs += self.half_dt * self.mask * src_sum
        rhs[self.left_rows] = left_new
        rhs[self.right_rows] = right_new
        return self._lu.solve(rhs)

    def run(self, q0: np.ndarray, left: np.ndarray, right: np.ndarray, neumann: np.ndarray,
            src: Optional[np.ndarray] = None) -> np.ndarray:
        """Forward sweep; returns the (nt+1, m*nx) array of states."""
        nt = self.g.nt
        out = np.empty((nt + 1, self.size))
        out[0] = q0
        scale = max(np.max(np.abs(q0)), np.max(np.abs(left)), np.max(np.abs(right)),
                    np.max(np.abs(neumann)), 0.0 if src is None else np.max(np.abs(src)))
        q = q0
        for n in range(nt):
            src_sum = None if src is None else src[n] + src[n + 1]
            q = self.step(q, left[n + 1], right[n + 1], neumann[n] + neumann[n + 1], src_sum)
            self._check_growth(q, scale, n + 1)
            out[n + 1] = q
        return out

    def _check_growth(self, q: np.ndarray, scale: float, step: int) -> None:
        peak = float(np.max(np.abs(q)))
        if not np.isfinite(peak):
            raise Unstable(step, float("inf"))
        if peak > GROWTH_LIMIT * scale and scale > 0:
            raise Unstable(step, peak / scale)
        if scale == 0 and peak > 0:
            raise Unstable(step, float("inf"))

    def run_transpose(self, terminal: np.ndarray) -> TransposeSensitivity:
        """Exact transpose of ``run`` for the functional J = <q^nt, terminal>."""
        nt = self.g.nt
        m = self.m
        states = np.empty((nt + 1, self.size))
        left = np.zeros((nt + 1, m))
        right = np.zeros((nt + 1, m))
        neumann = np.zeros((nt + 1, m))
        sources = np.zeros((nt + 1, self.size))
        adj = np.array(terminal, dtype=float)
        states[nt] = adj
        for n in range(nt, 0, -1):
            lam = self._lu.solve(adj, trans="T")
            left[n] += lam[self.left_rows]
            right[n] += lam[self.right_rows]
            ghost = -self.half_dt * (self.ghost_coef.T @ lam[self.ghost_rows])
            neumann[n] += ghost
            neumann[n - 1] += ghost
            weighted = self.half_dt * self.mask * lam
            sources[n] += weighted
            sources[n - 1] += weighted
            adj = self.BT @ lam
            states[n - 1] = adj
        return TransposeSensitivity(states=states, initial=states[0].copy(), left=left,
                                    right=right, neumann=neumann, sources=sources)


# Traces

@dataclass(frozen=True)
class TraceSet:
    """Boundary traces d^k/dx^k at x=0 and x=L, k = 0, 1, 2.

    ``u`` and ``v`` have shape (3, 2, nt+1) indexed [k, endpoint, n]; ``v``
    is None for scalar problems. ``duals`` optionally holds, per boundary
    channel, the exact discrete dual of that channel (discrete-transpose
    adjoint only).
    """

    u: np.ndarray
    v: Optional[np.ndarray] = None
    duals: Optional[Dict[str, np.ndarray]] = field(default=None, compare=False)

    def series(self, name: str, k: int, endpoint: int) -> np.ndarray:
        data = self.u if name == "u" else self.v
        if data is None:
            raise DimensionMismatch(f"no traces stored for {name}")
        return data[k, endpoint]


def _endpoint_traces(values: np.ndarray, dx: float) -> np.ndarray:
    """Traces of a (nt+1, nx) field; second-order one-sided stencils."""
    out = np.empty((3, 2, values.shape[0]))
    out[0, LEFT] = values[:, 0]
    out[0, RIGHT] = values[:, -1]
    out[1, LEFT] = (-3.0 * values[:, 0] + 4.0 * values[:, 1] - values[:, 2]) / (2.0 * dx)
    out[1, RIGHT] = (3.0 * values[:, -1] - 4.0 * values[:, -2] + values[:, -3]) / (2.0 * dx)
    out[2, LEFT] = (2.0 * values[:, 0] - 5.0 * values[:, 1] + 4.0 * values[:, 2]
                    - values[:, 3]) / dx ** 2
    out[2, RIGHT] = (2.0 * values[:, -1] - 5.0 * values[:, -2] + 4.0 * values[:, -3]
                     - values[:, -4]) / dx ** 2
    return out


def extract_traces(traj: Trajectory, g: Grid) -> TraceSet:
    if g.nx < 5 or traj.u.shape[1] < 5:
        raise GridTooCoarse(f"trace stencils need at least 5 nodes, got {traj.u.shape[1]}")
    if traj.u.shape[1] != g.nx:
        raise DimensionMismatch(f"trajectory has {traj.u.shape[1]} nodes, grid has {g.nx}")
    return TraceSet(u=_endpoint_traces(traj.u, g.dx), v=_endpoint_traces(traj.v, g.dx))


def extract_scalar_traces(values: np.ndarray, g: Grid) -> TraceSet:
    if values.shape[1] < 5:
        raise GridTooCoarse(f"trace stencils need at least 5 nodes, got {values.shape[1]}")
    return TraceSet(u=_endpoint_traces(np.asarray(values, dtype=float), g.dx))


# Scalar Airy problem

def solve_airy_ibvp(alpha: float, g: Grid, u0: np.ndarray, h0: np.ndarray, h1: np.ndarray,
                    h2: np.ndarray, f: Optional[np.ndarray] = None) -> Tuple[np.ndarray, TraceSet]:
    """Solve u_t + alpha u_xxx = f, u(0)=h0, u(L)=h1, u_x(L)=h2, u(., 0)=u0.

    Args:
        alpha: nonzero dispersion coefficient.
        g: grid.
        u0: initial values, length nx.
        h0, h1, h2: boundary series, length nt+1.
        f: optional (nt+1, nx) source.

    Returns:
        (values, traces) with values of shape (nt+1, nx).
    """
    if alpha == 0:
        raise InvalidParams("alpha != 0")
    u0 = np.asarray(u0, dtype=float)
    if u0.shape != (g.nx,):
        raise DimensionMismatch(f"u0 has shape {u0.shape}, grid needs ({g.nx},)")
    series = [np.asarray(s, dtype=float).reshape(-1, 1) for s in (h0, h1, h2)]
    if any(s.shape[0] != g.nt + 1 for s in series):
        raise DimensionMismatch(f"boundary series must have {g.nt + 1} samples")
    if f is not None:
        f = np.asarray(f, dtype=float)
        if f.shape != (g.nt + 1, g.nx):
            raise DimensionMismatch(f"source shape {f.shape} does not match grid")
    stepper = CrankNicolsonStepper(np.array([[alpha]]), [0.0], g)
    values = stepper.run(u0, series[0], series[1], series[2], f)
    return values, extract_scalar_traces(values, g)


def cubic_characteristic_roots(a_coef: float, L: float, rho: float) -> Tuple[complex, complex, complex]:
    """Roots lambda of s + a lambda^3 = 0 with s = i a rho^3 L^3."""
    lam0 = 1j * L * rho
    lam1 = -1j * L * rho * (1.0 + 1j * np.sqrt(3.0)) / 2.0
    lam2 = -1j * L * rho * (1.0 - 1j * np.sqrt(3.0)) / 2.0
    return complex(lam0), complex(lam1), complex(lam2)


# Coupled system

class CoupledLinearSolver:
    """Crank-Nicolson solver for the coupled linear system on one grid.

    Holds a single factorisation; each instance belongs to one caller.
    """

    def __init__(self, p: ValidatedParams, g: Grid):
        self.p = p
        self.g = g
        dispersion = np.array([[1.0, p.a], [p.a * p.b / p.c, 1.0 / p.c]])
        self.stepper = CrankNicolsonStepper(dispersion, [0.0, p.r / p.c], g)

    def forward(self, init: StatePair, bd: BoundaryData,
                src: Optional[SourcePair] = None) -> Trajectory:
        check_state(init, self.g, "init")
        check_boundary(bd, self.g)
        stacked_src = None
        if src is not None:
            check_sources(src, self.g)
            stacked_src = np.hstack([src.f, src.s])
        states = self.stepper.run(init.stacked(), bd.left(), bd.right(), bd.neumann(), stacked_src)
        nx = self.g.nx
        return Trajectory(states[:, :nx], states[:, nx:])

    def transpose(self, terminal: StatePair) -> TransposeSensitivity:
        check_state(terminal, self.g, "terminal")
        return self.stepper.run_transpose(terminal.stacked())


def solve_forward_linear(p: ValidatedParams, g: Grid, init: StatePair, bd: BoundaryData,
                         src: Optional[SourcePair] = None) -> Tuple[Trajectory, TraceSet]:
    """Monolithic solve of the coupled linear system with boundary data ``bd``."""
    traj = CoupledLinearSolver(p, g).forward(init, bd, src)
    return traj, extract_traces(traj, g)


def solve_forward_via_diagonalization(p: ValidatedParams, g: Grid, init: StatePair,
                                      bd: BoundaryData, src: Optional[SourcePair] = None,
                                      tol: float = 1e-10, maxit: int = 50
                                      ) -> Tuple[Trajectory, TraceSet, int]:
    """Solve through the two decoupled scalar equations.

    The transport term -(r/c) v_x is a lagged source, refined by Picard
    iteration within every time step until successive slices differ by less
    than ``tol`` (relative to max(1, slice size)).

    Returns:
        (trajectory, traces, iterations) where iterations is the largest
        per-step Picard count.
    """
    check_state(init, g, "init")
    check_boundary(bd, g)
    src = src if src is not None else SourcePair.zeros(g)
    check_sources(src, g)
    d = compute_decoupling(p)
    bd_t, src_t = transform_boundary_and_sources(bd, src, d, p)
    init_t = to_diagonal(init, d)
    nx = g.nx

    steppers = [
        CrankNicolsonStepper(np.array([[alpha]]), [0.0], g)
        for alpha in (d.alpha_plus, d.alpha_minus)
    ]
    D1 = first_derivative_matrix(g)
    rc = p.r / p.c
    # a source w in the v equation maps to (M_inv[0,1] w, M_inv[1,1] w)
    mix = d.M_inv[:, 1]

    def coupling(state: np.ndarray) -> np.ndarray:
        v = d.M[1, 0] * state[0] + d.M[1, 1] * state[1]
        return -rc * (D1 @ v)

    lefts, rights, neumanns = bd_t.left(), bd_t.right(), bd_t.neumann()
    out = np.empty((g.nt + 1, 2, nx))
    out[0] = [init_t.u, init_t.v]
    worst = 1
    for n in range(g.nt):
        current = out[n]
        w_old = coupling(current) if p.r != 0 else None
        base = [src_t.f[n] + src_t.f[n + 1], src_t.s[n] + src_t.s[n + 1]]
        guess = current.copy()
        iterations = 0
        while True:
            iterations += 1
            w_sum = None
            if p.r != 0:
                w_sum = w_old + coupling(guess)
            new = np.empty_like(current)
            for j, stepper in enumerate(steppers):
                src_sum = base[j] if w_sum is None else base[j] + mix[j] * w_sum
                new[j] = stepper.step(current[j], lefts[n + 1, j:j + 1], rights[n + 1, j:j + 1],
                                      neumanns[n, j:j + 1] + neumanns[n + 1, j:j + 1], src_sum)
            if p.r == 0:
                break
            diff = float(np.max(np.abs(new - guess)))
            guess = new
            if diff <= tol * max(1.0, float(np.max(np.abs(new)))):
                break
            if iterations >= maxit:
                raise NoConvergence(iterations, diff, what=f"transport Picard at step {n + 1}")
        out[n + 1] = new
        worst = max(worst, iterations)

    traj_t = Trajectory(out[:, 0, :], out[:, 1, :])
    slices = [from_diagonal(traj_t.slice(n), d) for n in range(g.nt + 1)]
    traj = Trajectory.from_slices(slices)
    logging.debug("Diagonalised solve finished, max Picard iterations per step: %d", worst)
    return traj, extract_traces(traj, g), worst


# Adjoint system

def reflected_params(p: SystemParams) -> SystemParams:
    """Coefficients under which the adjoint system, reflected in x and t,
    reads as the forward system."""
    return SystemParams(a=p.a * p.b / p.c, b=p.c * p.c / p.b, c=p.c, r=p.r, a1=p.a1, a2=p.a2)


def channel_duals(sens: TransposeSensitivity, g: Grid) -> Dict[str, np.ndarray]:
    """Per-channel duals under the pairings dx*sum (state) and dt*sum (time)."""
    scale = g.dx / g.dt
    return {
        "h0": scale * sens.left[:, 0], "g0": scale * sens.left[:, 1],
        "h1": scale * sens.right[:, 0], "g1": scale * sens.right[:, 1],
        "h2": scale * sens.neumann[:, 0], "g2": scale * sens.neumann[:, 1],
    }


def solve_adjoint(p: ValidatedParams, g: Grid, final: StatePair, mode: str = "transpose",
                  solver: Optional[CoupledLinearSolver] = None) -> Tuple[Trajectory, TraceSet]:
    """Solve the adjoint system backward from ``final`` at t = T.

    Args:
        mode: "transpose" applies the exact transpose of the forward step and
            attaches channel duals to the traces; "reflection" solves the
            reflected problem x -> L-x, t -> T-t with the forward solver.
        solver: optional forward solver to reuse in transpose mode.
    """
    check_state(final, g, "final")
    if mode == "reflection":
        pr = reflected_params(p)
        mirrored = StatePair(final.u[::-1], final.v[::-1])
        traj_r, _ = solve_forward_linear(pr, g, mirrored, BoundaryData.zeros(g))
        traj = Trajectory(traj_r.u[::-1, ::-1], traj_r.v[::-1, ::-1])
        return traj, extract_traces(traj, g)
    if mode != "transpose":
        raise InvalidParams(f"unknown adjoint mode '{mode}'")

    solver = solver or CoupledLinearSolver(p, g)
    sens = solver.transpose(final)
    nx = g.nx
    u = sens.states[:, :nx].copy()
    v = sens.states[:, nx:].copy()
    # boundary components of dJ/dq^n are data sensitivities, not adjoint values
    u[:-1, [0, -1]] = 0.0
    v[:-1, [0, -1]] = 0.0
    traj = Trajectory(u, v)
    base = extract_traces(traj, g)
    return traj, TraceSet(u=base.u, v=base.v, duals=channel_duals(sens, g))


def transpose_sensitivities(p: ValidatedParams, g: Grid, terminal: StatePair) -> TransposeSensitivity:
    return CoupledLinearSolver(p, g).transpose(terminal)


# Diagnostics

def trace_combinations(traces: TraceSet, p: SystemParams) -> Dict[str, np.ndarray]:
    """Boundary combinations of adjoint traces paired with each channel.

    Integration by parts of forward against adjoint solutions gives
    d/dt (∫uφ + ∫vψ) = Σ channel(t) * combination(t).
    """
    phi = traces.u
    psi = traces.v
    ab_c = p.a * p.b / p.c
    inv_c = 1.0 / p.c
    return {
        "h0": phi[2, LEFT] + ab_c * psi[2, LEFT],
        "g0": p.a * phi[2, LEFT] + inv_c * psi[2, LEFT],
        "h1": -(phi[2, RIGHT] + ab_c * psi[2, RIGHT]),
        "g1": -(p.a * phi[2, RIGHT] + inv_c * psi[2, RIGHT]),
        "h2": phi[1, RIGHT] + ab_c * psi[1, RIGHT],
        "g2": p.a * phi[1, RIGHT] + inv_c * psi[1, RIGHT],
    }


def unweighted_pairing(lhs: StatePair, rhs: StatePair, g: Grid) -> float:
    """dx * sum over interior nodes of u φ + v ψ."""
    return float(g.dx * (np.dot(lhs.u[1:-1], rhs.u[1:-1]) + np.dot(lhs.v[1:-1], rhs.v[1:-1])))


def duality_residual(p: ValidatedParams, g: Grid, bd: BoundaryData, final: StatePair,
                     mode: str = "transpose") -> Tuple[float, float]:
    """Both sides of the duality identity for zero initial data.

    Returns:
        (pairing of the terminal state with ``final``, sum of boundary integrals).
    """
    traj, _ = solve_forward_linear(p, g, StatePair.zeros(g.nx), bd)
    _, traces = solve_adjoint(p, g, final.interior(), mode=mode)
    lhs = unweighted_pairing(traj.final, final, g)
    combos = traces.duals if traces.duals is not None else trace_combinations(traces, p)
    rhs = 0.0
    for name, series in combos.items():
        data = bd.channel(name)
        if mode == "transpose":
            rhs += g.dt * float(np.dot(data, series))
        else:
            rhs += float(trapezoid(data * series, dx=g.dt))
    return lhs, rhs


def time_space_h1_norm(traj: Trajectory, p: SystemParams, g: Grid) -> float:
    """Discrete L²(0,T; H¹) norm with the state-space weights."""
    w = np.full(g.nx, g.dx)
    w[[0, -1]] *= 0.5
    du = np.gradient(traj.u, g.dx, axis=1, edge_order=2)
    dv = np.gradient(traj.v, g.dx, axis=1, edge_order=2)
    per_time = ((p.b / p.c) * ((traj.u ** 2 + du ** 2) @ w) + (traj.v ** 2 + dv ** 2) @ w)
    return float(np.sqrt(g.dt * np.sum(per_time[:-1])))


def gain_of_regularity_ratio(p: ValidatedParams, g: Grid, init: StatePair) -> float:
    """‖(u, v)‖_{L²(0,T;H¹)} / x_norm(init) for homogeneous boundary data."""
    traj, _ = solve_forward_linear(p, g, init, BoundaryData.zeros(g))
    return time_space_h1_norm(traj, p, g) / x_norm(init, p, g)

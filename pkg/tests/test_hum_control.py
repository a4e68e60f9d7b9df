from __future__ import annotations

import numpy as np
import pytest

from core import BoundaryData, Grid, StatePair, SystemParams, sine_state, validate_params, x_norm
from errors import InvalidParams, MissingTrace, NoConvergence
from hum_control import (
    ControlConfig,
    GramianOperator,
    HumReport,
    adjoint_energy_check,
    check_one_control_condition,
    control_formulas,
    gramian_apply,
    observability_margin,
    solve_hum,
    trace_constant_estimate,
)
from linear_solvers import CoupledLinearSolver, TraceSet, solve_adjoint
from verification import gramian_asymmetry


@pytest.mark.parametrize("name, member", [
    ("FourControl", ControlConfig.FOUR_CONTROL),
    ("ONE_CONTROL", ControlConfig.ONE_CONTROL),
    ("AltG2", ControlConfig.ALT_G2),
])
def test_control_config_from_name(name, member):
    assert ControlConfig.from_name(name) is member


def test_unknown_control_config():
    with pytest.raises(InvalidParams):
        ControlConfig.from_name("FiveControl")


def test_one_control_uses_a_single_channel():
    assert ControlConfig.ONE_CONTROL.active_channels == ("h2",)
    assert len(ControlConfig.FOUR_CONTROL.active_channels) == 4


def test_inactive_channels_stay_zero(params, small_grid, rng):
    final = sine_state(small_grid, [1.0, 0.3], [0.2])
    _, traces = solve_adjoint(params, small_grid, final)
    controls = control_formulas(traces, ControlConfig.ONE_CONTROL, params, small_grid.T)
    assert np.any(controls.h2 != 0.0)
    for name in ("h0", "h1", "g0", "g1", "g2"):
        assert np.all(controls.channel(name) == 0.0)


def test_dirichlet_controls_end_at_zero(params, small_grid):
    final = sine_state(small_grid, [1.0], [1.0])
    _, traces = solve_adjoint(params, small_grid, final)
    controls = control_formulas(traces, ControlConfig.FOUR_CONTROL, params, small_grid.T)
    assert controls.g0[-1] == 0.0
    assert controls.g1[-1] == 0.0


def test_control_formulas_need_both_components(params, small_grid):
    scalar_only = TraceSet(u=np.zeros((3, 2, small_grid.nt + 1)))
    with pytest.raises(MissingTrace):
        control_formulas(scalar_only, ControlConfig.FOUR_CONTROL, params, small_grid.T)


def test_gramian_is_symmetric_and_positive(skew_params, small_grid, rng):
    for cfg in (ControlConfig.FOUR_CONTROL, ControlConfig.ONE_CONTROL):
        asymmetry, negative = gramian_asymmetry(skew_params, small_grid, cfg, rng)
        assert asymmetry <= 1e-9
        assert negative >= -1e-12


def test_gramian_output_lives_on_interior(params, small_grid, rng):
    z = sine_state(small_grid, [1.0], [0.0])
    out = gramian_apply(params, small_grid, ControlConfig.FOUR_CONTROL, z)
    assert out.u[0] == 0.0 and out.v[-1] == 0.0
    gram = GramianOperator(params, small_grid, ControlConfig.FOUR_CONTROL)
    vec = gram.to_vector(z)
    assert vec.size == gram.dimension
    assert np.array_equal(gram.from_vector(vec).u, z.interior().u)


def test_gramian_rejects_nonpositive_weight(params, small_grid):
    with pytest.raises(InvalidParams):
        GramianOperator(params, small_grid, ControlConfig.FOUR_CONTROL, weight=0.0)


def test_zero_mismatch_needs_no_control(params, small_grid):
    zero = StatePair.zeros(small_grid.nx)
    controls, traj, report = solve_hum(params, small_grid, ControlConfig.FOUR_CONTROL, zero, zero)
    assert controls.max_abs() == 0.0
    assert traj.max_abs() == 0.0
    assert report.cg_iterations == 0
    assert np.isnan(report.observability_margin)


def test_four_control_reaches_target(params, control_grid):
    target = 0.1 * sine_state(control_grid, [1.0], None)
    init = StatePair.zeros(control_grid.nx)
    controls, traj, report = solve_hum(params, control_grid, ControlConfig.FOUR_CONTROL,
                                       init, target, tol=1e-3, maxit=300)
    assert report.converged
    assert report.relative_error <= 1e-3
    assert report.cg_iterations <= 300
    assert report.observability_margin > 0
    assert set(report.control_norms) == set(ControlConfig.FOUR_CONTROL.active_channels)

    replay = CoupledLinearSolver(params, control_grid).forward(init, controls)
    error = x_norm((replay.final - target).interior(), params, control_grid)
    assert abs(error - report.terminal_error) <= 1e-12 * max(1.0, report.terminal_error) + 1e-14


def test_exhausted_budget_raises_with_report(params, control_grid):
    target = 0.1 * sine_state(control_grid, [1.0, 0.5], [0.3])
    with pytest.raises(NoConvergence) as excinfo:
        solve_hum(params, control_grid, ControlConfig.FOUR_CONTROL,
                  StatePair.zeros(control_grid.nx), target, tol=1e-14, maxit=1)
    report = excinfo.value.report
    assert isinstance(report, HumReport)
    assert not report.converged
    assert report.to_dict()["cg_iterations"] == 1


def test_solve_hum_validates_arguments(params, small_grid):
    zero = StatePair.zeros(small_grid.nx)
    with pytest.raises(InvalidParams):
        solve_hum(params, small_grid, ControlConfig.FOUR_CONTROL, zero, zero, tol=0.0)
    with pytest.raises(InvalidParams):
        solve_hum(params, small_grid, ControlConfig.FOUR_CONTROL, zero, zero, shift=-1.0)


def test_margin_is_positive_and_scales_with_weight(params, small_grid):
    base = observability_margin(params, small_grid, ControlConfig.FOUR_CONTROL, steps=20, seed=3)
    doubled = observability_margin(params, small_grid, ControlConfig.FOUR_CONTROL, steps=20, seed=3,
                                   weight=2.0)
    assert base > 0
    assert doubled == pytest.approx(4.0 * base, rel=1e-6)


def test_weight_enters_both_sides_of_the_gramian(params, small_grid):
    z = sine_state(small_grid, [1.0, 0.5], [0.3])
    plain = GramianOperator(params, small_grid, ControlConfig.FOUR_CONTROL).apply(z)
    scaled = GramianOperator(params, small_grid, ControlConfig.FOUR_CONTROL, weight=3.0).apply(z)
    assert np.allclose(scaled.u, 9.0 * plain.u, rtol=1e-12, atol=1e-14)
    assert np.allclose(scaled.v, 9.0 * plain.v, rtol=1e-12, atol=1e-14)


def test_four_controls_dominate_one(skew_params, small_grid, rng):
    four = GramianOperator(skew_params, small_grid, ControlConfig.FOUR_CONTROL)
    one = GramianOperator(skew_params, small_grid, ControlConfig.ONE_CONTROL)
    for _ in range(20):
        z = four.from_vector(rng.standard_normal(four.dimension))
        q_four = four.pairing(four.apply(z), z)
        q_one = one.pairing(one.apply(z), z)
        assert q_four >= q_one - 1e-10 * abs(q_four)


def test_free_evolution_superposition(params, control_grid):
    init = sine_state(control_grid, [0.2], [0.1, 0.05])
    target = 0.1 * sine_state(control_grid, [1.0], None)
    free = CoupledLinearSolver(params, control_grid).forward(init, BoundaryData.zeros(control_grid))
    controls, traj, _ = solve_hum(params, control_grid, ControlConfig.FOUR_CONTROL, init, target)
    shifted, from_rest, _ = solve_hum(params, control_grid, ControlConfig.FOUR_CONTROL,
                                      StatePair.zeros(control_grid.nx), target - free.final)
    scale = max(1.0, controls.max_abs())
    for name in ControlConfig.FOUR_CONTROL.active_channels:
        assert np.max(np.abs(controls.channel(name) - shifted.channel(name))) <= 1e-10 * scale
    assert np.allclose(traj.final.u, from_rest.final.u + free.final.u, atol=1e-10)


def test_one_control_short_interval_long_time_converges(params):
    g = Grid(L=1.0, T=10.0, nx=21, nt=400)
    target = 0.1 * sine_state(g, [1.0], None)
    _, _, report = solve_hum(params, g, ControlConfig.ONE_CONTROL, StatePair.zeros(g.nx), target,
                             tol=1e-2, maxit=500)
    assert report.converged
    assert report.relative_error <= 1e-2


def test_one_control_long_interval_short_time_loses_observability(params):
    g = Grid(L=10.0, T=1.0, nx=81, nt=200)
    steps = GramianOperator(params, g, ControlConfig.ONE_CONTROL).dimension
    margin = observability_margin(params, g, ControlConfig.ONE_CONTROL, steps=steps)
    assert margin < 1e-8


def test_one_control_condition():
    p = validate_params(SystemParams(a=0.5, b=2.0, c=1.0, r=1.0))
    holds, bound = check_one_control_condition(p, 1.0, 10.0, 1.0, 1.0)
    assert bound == pytest.approx(5.0)
    assert holds
    holds, _ = check_one_control_condition(p, 10.0, 1.0, 1.0, 1.0)
    assert not holds
    with pytest.raises(InvalidParams):
        check_one_control_condition(p, 1.0, 1.0, 0.0, 1.0)


def test_trace_constant_estimate_is_positive(params, small_grid):
    c_hat = trace_constant_estimate(params, small_grid, modes=2)
    assert np.isfinite(c_hat) and c_hat > 0


def test_adjoint_energy_bound(params):
    g = Grid(L=1.0, T=1.0, nx=81, nt=200)
    passed, lhs, rhs = adjoint_energy_check(params, g, sine_state(g, [1.0, 0.5], [0.25]))
    assert lhs > 0 and rhs > 0
    assert passed


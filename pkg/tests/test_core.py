from __future__ import annotations

import numpy as np
import pytest

from core import (
    BoundaryData,
    Grid,
    SourcePair,
    StatePair,
    SystemParams,
    Trajectory,
    check_boundary,
    check_state,
    inner_product_X,
    random_smooth_state,
    sine_state,
    trapezoid_weights,
    validate_params,
    x_norm,
)
from errors import DimensionMismatch, GridTooCoarse, InvalidParams


def test_validate_params_accepts_standard_set():
    p = SystemParams(a=0.5, b=1.0, c=1.0, r=1.0)
    assert validate_params(p) is p
    assert p.kappa == pytest.approx(0.75)


@pytest.mark.parametrize(
    "kwargs, fragment",
    [
        ({"a": 0.5, "b": 0.0, "c": 1.0}, "b>0"),
        ({"a": 0.5, "b": 1.0, "c": -1.0}, "c>0"),
        ({"a": 1.0, "b": 1.0, "c": 1.0}, "1-a²b"),
        ({"a": 2.0, "b": 0.5, "c": 1.0}, "1-a²b"),
    ],
)
def test_validate_params_names_the_violated_constraint(kwargs, fragment):
    with pytest.raises(InvalidParams) as excinfo:
        validate_params(SystemParams(**kwargs))
    assert fragment in excinfo.value.constraint


def test_invalid_params_is_a_value_error():
    with pytest.raises(ValueError):
        validate_params(SystemParams(a=0.0, b=-1.0, c=1.0))


def test_grid_spacing_and_nodes():
    g = Grid(L=2.0, T=1.0, nx=11, nt=20)
    assert g.dx == pytest.approx(0.2)
    assert g.dt == pytest.approx(0.05)
    assert g.x[-1] == pytest.approx(2.0)
    assert g.t.size == 21
    assert g.with_length(3.0).L == 3.0
    assert g.with_horizon(4.0).T == 4.0
    assert g.with_length(3.0).nx == 11


def test_grid_rejects_too_few_nodes():
    with pytest.raises(GridTooCoarse):
        Grid(L=1.0, T=1.0, nx=4, nt=10)
    with pytest.raises(InvalidParams):
        Grid(L=0.0, T=1.0, nx=11, nt=10)


def test_state_pair_is_immutable_and_checked():
    s = StatePair(np.ones(5), np.zeros(5))
    with pytest.raises(ValueError):
        s.u[0] = 3.0
    with pytest.raises(DimensionMismatch):
        StatePair(np.ones(5), np.ones(6))


def test_state_pair_arithmetic_and_interior():
    s = StatePair(np.arange(5.0), np.ones(5))
    doubled = 2.0 * s
    assert np.array_equal(doubled.u, 2.0 * np.arange(5.0))
    assert np.array_equal((s - s).v, np.zeros(5))
    inner = s.interior()
    assert inner.u[0] == 0.0 and inner.u[-1] == 0.0
    assert inner.v[2] == 1.0
    assert np.array_equal(StatePair.from_stacked(s.stacked()).u, s.u)


def test_trajectory_slices(small_grid):
    u = np.tile(np.linspace(0, 1, small_grid.nx), (small_grid.nt + 1, 1))
    traj = Trajectory(u, -u)
    assert len(traj) == small_grid.nt + 1
    assert np.array_equal(traj.final.v, -u[-1])
    rebuilt = Trajectory.from_slices(traj.slices)
    assert np.array_equal(rebuilt.u, traj.u)
    assert traj.max_abs() == pytest.approx(1.0)


def test_boundary_data_from_channels(small_grid):
    bd = BoundaryData.from_channels(small_grid, {"h0": np.ones(small_grid.nt + 1)})
    check_boundary(bd, small_grid)
    assert bd.left().shape == (small_grid.nt + 1, 2)
    assert np.all(bd.left()[:, 0] == 1.0)
    assert bd.max_abs() == 1.0
    with pytest.raises(DimensionMismatch):
        BoundaryData.from_channels(small_grid, {"h3": np.ones(small_grid.nt + 1)})
    with pytest.raises(DimensionMismatch):
        check_boundary(BoundaryData.zeros(small_grid), Grid(L=1.0, T=1.0, nx=21, nt=10))


def test_source_pair_addition(small_grid):
    src = SourcePair.zeros(small_grid)
    total = src + SourcePair(np.ones_like(src.f), np.ones_like(src.s))
    assert total.max_abs() == 1.0


def test_trapezoid_weights_sum_to_length(small_grid):
    assert trapezoid_weights(small_grid).sum() == pytest.approx(small_grid.L)


def test_inner_product_weights_u_by_b_over_c(skew_params, small_grid):
    ones = np.ones(small_grid.nx)
    s = StatePair(ones, np.zeros(small_grid.nx))
    assert inner_product_X(s, s, skew_params, small_grid) == pytest.approx(
        skew_params.b / skew_params.c * small_grid.L)
    t = StatePair(np.zeros(small_grid.nx), ones)
    assert inner_product_X(s, t, skew_params, small_grid) == pytest.approx(0.0)
    assert x_norm(t, skew_params, small_grid) == pytest.approx(1.0)


def test_check_state_rejects_wrong_length(small_grid):
    with pytest.raises(DimensionMismatch):
        check_state(StatePair.zeros(small_grid.nx + 1), small_grid)


def test_sine_state_norm_matches_half_length(params):
    g = Grid(L=1.0, T=1.0, nx=201, nt=10)
    s = sine_state(g, [1.0], None)
    # trapezoid rule is exact for sin^2 on full periods up to round-off
    assert x_norm(s, params, g) == pytest.approx(np.sqrt(0.5), rel=1e-10)
    assert np.all(s.v == 0.0)


def test_random_smooth_state_is_seeded(small_grid):
    a = random_smooth_state(small_grid, np.random.default_rng(3))
    b = random_smooth_state(small_grid, np.random.default_rng(3))
    assert np.array_equal(a.u, b.u)
    assert a.u[0] == 0.0 and a.v[-1] == 0.0

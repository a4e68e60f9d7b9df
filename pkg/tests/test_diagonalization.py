from __future__ import annotations

import numpy as np
import pytest

from core import BoundaryData, SourcePair, StatePair, SystemParams, validate_params
from diagonalization import (
    compute_decoupling,
    from_diagonal,
    printed_source_transform,
    to_diagonal,
    transform_boundary_and_sources,
)
from verification import conjugation_error, random_valid_params


def test_standard_params_decouple(params):
    d = compute_decoupling(params)
    assert d.alpha_plus > d.alpha_minus > 0
    assert d.alpha_plus + d.alpha_minus == pytest.approx(1.0 + 1.0 / params.c)
    assert d.alpha_plus * d.alpha_minus == pytest.approx(params.kappa / params.c)
    assert conjugation_error(params) <= 1e-12


def test_conjugation_over_random_draws():
    rng = np.random.default_rng(42)
    worst = max(conjugation_error(random_valid_params(rng)) for _ in range(200))
    assert worst <= 1e-12


def test_uncoupled_case_is_identity():
    p = validate_params(SystemParams(a=0.0, b=2.0, c=3.0))
    d = compute_decoupling(p)
    assert np.array_equal(d.M, np.eye(2))
    assert d.coefficients == (1.0, pytest.approx(1.0 / 3.0))
    s = StatePair(np.arange(5.0), np.ones(5))
    assert np.array_equal(to_diagonal(s, d).u, s.u)


def test_round_trip_through_diagonal_variables(skew_params, rng):
    d = compute_decoupling(skew_params)
    s = StatePair(rng.standard_normal(9), rng.standard_normal(9))
    back = from_diagonal(to_diagonal(s, d), d)
    assert np.allclose(back.u, s.u, atol=1e-13)
    assert np.allclose(back.v, s.v, atol=1e-13)


def test_printed_source_transform_matches_matrix_inverse(skew_params, small_grid, rng):
    d = compute_decoupling(skew_params)
    shape = (small_grid.nt + 1, small_grid.nx)
    src = SourcePair(rng.standard_normal(shape), rng.standard_normal(shape))
    _, mapped = transform_boundary_and_sources(BoundaryData.zeros(small_grid), src, d, skew_params)
    f_tilde, s_tilde = printed_source_transform(src.f, src.s, d, skew_params)
    assert np.allclose(mapped.f, f_tilde, atol=1e-12)
    assert np.allclose(mapped.s, s_tilde, atol=1e-12)


def test_boundary_channels_are_mapped_in_pairs(params, small_grid):
    d = compute_decoupling(params)
    ones = np.ones(small_grid.nt + 1)
    bd = BoundaryData.from_channels(small_grid, {"h0": ones, "g0": 2 * ones})
    mapped, _ = transform_boundary_and_sources(bd, SourcePair.zeros(small_grid), d, params)
    expected = d.M_inv @ np.array([1.0, 2.0])
    assert np.allclose(mapped.h0, expected[0])
    assert np.allclose(mapped.g0, expected[1])
    assert np.all(mapped.h1 == 0.0)

from __future__ import annotations

import numpy as np
import pytest

from core import Grid, SystemParams, validate_params


@pytest.fixture
def params() -> SystemParams:
    """The standard coupled parameter set (a=0.5, b=c=1, r=1)."""
    return validate_params(SystemParams(a=0.5, b=1.0, c=1.0, r=1.0))


@pytest.fixture
def skew_params() -> SystemParams:
    """b != c so that the weighted pairing and the reflection map are not trivial."""
    return validate_params(SystemParams(a=0.3, b=2.0, c=1.5, r=0.7))


@pytest.fixture
def nonlinear_params() -> SystemParams:
    return validate_params(SystemParams(a=0.5, b=1.0, c=1.0, r=1.0, a1=1.0, a2=1.0))


@pytest.fixture
def small_grid() -> Grid:
    return Grid(L=1.0, T=0.5, nx=21, nt=50)


@pytest.fixture
def control_grid() -> Grid:
    return Grid(L=1.0, T=2.0, nx=21, nt=80)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)

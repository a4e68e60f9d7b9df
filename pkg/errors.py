"""Exception types raised by the kdvduo toolkit.

Input problems subclass ``ValueError`` so the CLI can report them as
configuration errors; solver failures subclass ``RuntimeError``.
"""
from __future__ import annotations

from typing import Any, Optional


class KdvDuoError(Exception):
    """Base class for every error raised by this package."""


# Invalid input (exit status 1)

class InvalidParams(KdvDuoError, ValueError):
    """System coefficients violate b > 0, c > 0 or 1 - a^2 b > 0."""

    def __init__(self, constraint: str):
        super().__init__(f"invalid parameters: {constraint}")
        self.constraint = constraint


class DimensionMismatch(KdvDuoError, ValueError):
    """An array does not match the grid it is used with."""


class GridTooCoarse(KdvDuoError, ValueError):
    """Fewer spatial nodes than a stencil needs."""


class EmptySeries(KdvDuoError, ValueError):
    """A time series with no samples."""


class AllZeroIndex(KdvDuoError, ValueError):
    """Critical-length index (k, l, m, n, s) with every entry zero."""


class NonpositiveR(KdvDuoError, ValueError):
    """Operation requires r > 0."""


class RootsNotPopulated(KdvDuoError, ValueError):
    """A critical candidate has no root set attached."""


class MissingTrace(KdvDuoError, ValueError):
    """A control formula needs a trace series that is absent."""


class ConfigError(KdvDuoError, ValueError):
    """Experiment configuration is missing a field or holds an invalid one."""


class IoError(KdvDuoError, OSError):
    """Writing run artifacts failed."""


# Solver failures

class SolverError(KdvDuoError, RuntimeError):
    """Numerical failure inside a solver."""


class SingularStep(SolverError):
    def __init__(self, step: int, detail: str = ""):
        message = f"singular step matrix at step {step}"
        if detail:
            message += f": {detail}"
        super().__init__(message)
        self.step = step


class Unstable(SolverError):
    def __init__(self, step: int, ratio: float):
        super().__init__(f"solution norm exceeded {ratio:.3e} x data norm at step {step}")
        self.step = step
        self.ratio = ratio


class DegenerateTransform(SolverError):
    """Eigenvector matrix of the dispersion matrix is numerically singular."""


class DegenerateSymbol(SolverError):
    """2x2 amplitude system vanishes identically at a characteristic root."""


class NoConvergence(SolverError):
    """Iteration budget exhausted.

    Carries the iteration count, the last residual and, when available, the
    partial report of the run that failed.
    """

    def __init__(self, iterations: int, residual: float, what: str = "iteration",
                 report: Optional[Any] = None):
        super().__init__(
            f"{what} did not converge after {iterations} iterations "
            f"(residual {residual:.3e})"
        )
        self.iterations = iterations
        self.residual = residual
        self.report = report

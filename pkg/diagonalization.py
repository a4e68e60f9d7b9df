"""Decoupling of the dispersive part of the linear system.

The dispersion matrix B = [[1, a], [ab/c, 1/c]] has positive eigenvalues
((1 + 1/c) ± λ)/2 with λ = sqrt((1/c - 1)^2 + 4a^2 b/c). Its eigenvector
matrix M turns the linear system into two scalar Airy-type equations,
except for the transport term (r/c) v_x, which stays a source.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from core import BoundaryData, SourcePair, StatePair, SystemParams, ValidatedParams
from errors import DegenerateTransform, DimensionMismatch


@dataclass(frozen=True)
class DecoupledParams:
    lam: float
    alpha_plus: float
    alpha_minus: float
    M: np.ndarray
    M_inv: np.ndarray

    @property
    def coefficients(self) -> Tuple[float, float]:
        """Dispersion coefficients of the first and second decoupled variable."""
        return self.alpha_plus, self.alpha_minus


def dispersion_matrix(p: SystemParams) -> np.ndarray:
    return np.array([[1.0, p.a], [p.a * p.b / p.c, 1.0 / p.c]])


def compute_decoupling(p: ValidatedParams) -> DecoupledParams:
    """Eigen-decomposition of the dispersion matrix.

    For a = 0 the system is already diagonal and the identity transform is
    returned with coefficients (1, 1/c).

    Raises:
        DegenerateTransform: when the eigenvector matrix is numerically singular
            or the closed-form eigenvalues disagree with a direct eigensolve.
    """
    inv_c = 1.0 / p.c
    lam = float(np.sqrt((inv_c - 1.0) ** 2 + 4.0 * p.a * p.a * p.b * inv_c))
    if p.a == 0:
        eye = np.eye(2)
        return DecoupledParams(lam=lam, alpha_plus=1.0, alpha_minus=inv_c, M=eye, M_inv=eye.copy())

    M = np.array([
        [2.0 * p.a, 2.0 * p.a],
        [(inv_c - 1.0) + lam, (inv_c - 1.0) - lam],
    ])
    det = float(np.linalg.det(M))
    if abs(det) < 1e-12 * float(np.linalg.norm(M)) ** 2:
        raise DegenerateTransform(f"|det M| = {abs(det):.3e} for a={p.a}")
    M_inv = np.linalg.inv(M)

    alpha_plus = 0.5 * ((1.0 + inv_c) + lam)
    alpha_minus = 0.5 * ((1.0 + inv_c) - lam)
    direct = np.sort(np.linalg.eigvals(dispersion_matrix(p)).real)
    if not np.allclose(direct, [alpha_minus, alpha_plus], rtol=1e-10, atol=1e-12):
        raise DegenerateTransform(f"eigenvalue cross-check failed: {direct} vs "
                                  f"{(alpha_minus, alpha_plus)}")
    logging.debug("Decoupling a=%g b=%g c=%g: lambda=%.6g alpha=(%.6g, %.6g)",
                  p.a, p.b, p.c, lam, alpha_plus, alpha_minus)
    return DecoupledParams(lam=lam, alpha_plus=alpha_plus, alpha_minus=alpha_minus,
                           M=M, M_inv=M_inv)


def _apply_pair(matrix: np.ndarray, first: np.ndarray, second: np.ndarray):
    first = np.asarray(first, dtype=float)
    second = np.asarray(second, dtype=float)
    if first.shape != second.shape:
        raise DimensionMismatch(f"paired arrays differ in shape: {first.shape} vs {second.shape}")
    return (matrix[0, 0] * first + matrix[0, 1] * second,
            matrix[1, 0] * first + matrix[1, 1] * second)


def to_diagonal(s: StatePair, d: DecoupledParams) -> StatePair:
    return StatePair(*_apply_pair(d.M_inv, s.u, s.v))


def from_diagonal(s: StatePair, d: DecoupledParams) -> StatePair:
    return StatePair(*_apply_pair(d.M, s.u, s.v))


def transform_boundary_and_sources(bd: BoundaryData, src: SourcePair, d: DecoupledParams,
                                   p: ValidatedParams) -> Tuple[BoundaryData, SourcePair]:
    """Map boundary channel pairs (h_i, g_i) and sources (f, s) through M^-1."""
    h0, g0 = _apply_pair(d.M_inv, bd.h0, bd.g0)
    h1, g1 = _apply_pair(d.M_inv, bd.h1, bd.g1)
    h2, g2 = _apply_pair(d.M_inv, bd.h2, bd.g2)
    f, s = _apply_pair(d.M_inv, src.f, src.s)
    return BoundaryData(h0=h0, h1=h1, h2=h2, g0=g0, g1=g1, g2=g2), SourcePair(f, s)


def printed_source_transform(f: np.ndarray, s: np.ndarray, d: DecoupledParams,
                             p: ValidatedParams) -> Tuple[np.ndarray, np.ndarray]:
    """Closed-form inverse of M written out entry by entry.

    Used to cross-check ``transform_boundary_and_sources``; for a = 0 it
    reduces to the identity.
    """
    if p.a == 0:
        return np.asarray(f, dtype=float), np.asarray(s, dtype=float)
    inv_c = 1.0 / p.c
    # det M = -4 a lambda
    scale = -1.0 / (4.0 * p.a * d.lam)
    f_tilde = scale * (((inv_c - 1.0) - d.lam) * f - 2.0 * p.a * s)
    s_tilde = scale * (-((inv_c - 1.0) + d.lam) * f + 2.0 * p.a * s)
    return f_tilde, s_tilde

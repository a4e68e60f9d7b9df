"""Candidate critical lengths and the spectral witness of lost observability.

A candidate is indexed by five nonnegative integers (k, l, m, n, s). The six
real roots of the characteristic polynomial are equally spaced by multiples
of 2π/L and sum to zero, which pins the first root and, through the
second elementary symmetric polynomial, the length L.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import Polynomial
from scipy.linalg import svdvals

from core import ValidatedParams
from errors import AllZeroIndex, DegenerateSymbol, InvalidParams, NonpositiveR, RootsNotPopulated

Index = Tuple[int, int, int, int, int]

ROOT_MERGE_TOL = 1e-7
VIETA_TOL = 1e-8
# sigma_min below this counts as a dip of the spectral witness
WITNESS_DIP = 1e-3
CANDIDATE_CAVEAT = (
    "candidates match only e1, e2 (and e6) of the root relations; they are necessary "
    "conditions, not confirmed critical lengths. A candidate is confirmed only where "
    "the spectral witness dips."
)


@dataclass(frozen=True)
class CriticalCandidate:
    index: Index
    alpha: int
    L: float
    xi: Optional[Tuple[float, ...]] = None
    p: Optional[complex] = None
    vieta_residuals: Optional[Tuple[float, ...]] = None
    consistent: bool = False
    degenerate: bool = False


@dataclass(frozen=True)
class SpectralWitness:
    lambda_scan: Tuple[Tuple[float, float], ...]
    min_sigma: float
    argmin_p: float
    skipped: Tuple[float, ...] = ()


def _check_index(idx: Sequence[int]) -> Index:
    if len(idx) != 5:
        raise InvalidParams(f"index needs five entries, got {len(idx)}")
    values = tuple(int(v) for v in idx)
    if any(v < 0 for v in values):
        raise InvalidParams(f"index entries must be nonnegative: {values}")
    if not any(values):
        raise AllZeroIndex("index (0, 0, 0, 0, 0) has no critical length")
    return values  # type: ignore[return-value]


def partial_sums(idx: Sequence[int]) -> Tuple[int, ...]:
    return tuple(itertools.accumulate(idx))


def alpha_index(k: int, l: int, m: int, n: int, s: int) -> int:
    """6 Σ S_j² - σ² with S_j the partial sums and σ = 5k+4l+3m+2n+s."""
    idx = _check_index((k, l, m, n, s))
    sums = partial_sums(idx)
    sigma = sum(sums)
    return 6 * sum(v * v for v in sums) - sigma * sigma


def printed_alpha_index(k: int, l: int, m: int, n: int, s: int) -> int:
    """Quadratic form as printed in the source, with 3ls in place of 4ls.

    Kept only to report the discrepancy with ``alpha_index``.
    """
    _check_index((k, l, m, n, s))
    return (5 * k * k + 8 * l * l + 9 * m * m + 8 * n * n + 5 * s * s
            + 8 * k * l + 6 * k * m + 4 * k * n + 2 * k * s
            + 12 * l * m + 8 * l * n + 3 * l * s
            + 12 * m * n + 6 * m * s + 8 * n * s)


def critical_length(p: ValidatedParams, idx: Sequence[int]) -> float:
    if p.r <= 0:
        raise NonpositiveR(f"critical lengths need r > 0 (r={p.r})")
    alpha = alpha_index(*idx)
    return float(math.pi * math.sqrt(p.kappa * alpha / (3.0 * p.r)))


def build_roots(idx: Sequence[int], L: float, p: ValidatedParams) -> Tuple[Tuple[float, ...], complex]:
    """Roots ξ_0..ξ_5 spaced by 2π·(index entry)/L with zero sum, and p.

    p = sqrt((1 - a²b) Π ξ_j / c) on the principal branch.
    """
    if not (L > 0):
        raise InvalidParams(f"L>0 (L={L})")
    index = _check_index(idx)
    sums = (0,) + partial_sums(index)
    sigma = sum(sums)
    xi0 = -math.pi * sigma / (3.0 * L)
    step = 2.0 * math.pi / L
    xi = tuple(xi0 + step * s for s in sums)
    product = float(np.prod(xi))
    spectral = complex(np.emath.sqrt(p.kappa * product / p.c))
    return xi, spectral


def _elementary_symmetric(values: Sequence[complex]) -> np.ndarray:
    """e_0..e_n of the given values."""
    coeffs = np.array([1.0 + 0j])
    for value in values:
        coeffs = np.convolve(coeffs, [1.0, -value])
    # monic Π(ξ - x_j) = Σ (-1)^k e_k ξ^{n-k}
    signs = (-1.0) ** np.arange(coeffs.size)
    return coeffs * signs


def vieta_targets(p: ValidatedParams, spectral: complex) -> np.ndarray:
    """e_1..e_6 demanded by the monic characteristic polynomial."""
    kap = p.kappa
    return np.array([
        0.0,
        -p.r / kap,
        (p.c + 1.0) * spectral / kap,
        0.0,
        -p.r * spectral / kap,
        p.c * spectral * spectral / kap,
    ], dtype=complex)


def verify_vieta(p: ValidatedParams, cand: CriticalCandidate) -> Tuple[float, ...]:
    """Relative residuals of the six elementary symmetric relations.

    Each residual is |e_k(ξ) - target_k| divided by the larger of |target_k|
    and e_k(|ξ|), the natural magnitude of e_k for the given roots.
    """
    if cand.xi is None or cand.p is None:
        raise RootsNotPopulated(f"candidate {cand.index} has no roots")
    actual = _elementary_symmetric(cand.xi)[1:]
    magnitude = np.abs(_elementary_symmetric(np.abs(np.asarray(cand.xi)))[1:])
    targets = vieta_targets(p, cand.p)
    residuals = []
    for k in range(6):
        scale = max(abs(targets[k]), magnitude[k], np.finfo(float).tiny)
        residuals.append(float(abs(actual[k] - targets[k]) / scale))
    return tuple(residuals)


def populate_candidate(p: ValidatedParams, idx: Sequence[int]) -> CriticalCandidate:
    index = _check_index(idx)
    L = critical_length(p, index)
    xi, spectral = build_roots(index, L, p)
    cand = CriticalCandidate(index=index, alpha=alpha_index(*index), L=L, xi=xi, p=spectral,
                             degenerate=any(v == 0 for v in index) or _has_repeats(xi))
    residuals = verify_vieta(p, cand)
    return replace(cand, vieta_residuals=residuals,
                   consistent=all(r <= VIETA_TOL for r in residuals))


def _has_repeats(xi: Sequence[float]) -> bool:
    ordered = sorted(xi)
    return any(abs(b - a) <= 1e-12 * max(1.0, abs(a)) for a, b in zip(ordered, ordered[1:]))


def enumerate_candidates(p: ValidatedParams, L_max: float,
                         include_zero: bool = True) -> List[CriticalCandidate]:
    """All candidate lengths up to ``L_max``, sorted and deduplicated by L.

    Since α ≥ Σ S_j² ≥ (largest entry)², entries never exceed sqrt(α_max).
    Among indices sharing an α, the representative is the first
    non-degenerate one in lexicographic order, else the first one.
    """
    if p.r <= 0:
        raise NonpositiveR(f"critical lengths need r > 0 (r={p.r})")
    if not (L_max > 0):
        raise InvalidParams(f"L_max>0 (L_max={L_max})")
    alpha_max = 3.0 * p.r * L_max ** 2 / (math.pi ** 2 * p.kappa)
    bound = int(math.floor(math.sqrt(alpha_max))) + 1
    low = 0 if include_zero else 1
    by_alpha = {}
    for idx in itertools.product(range(low, bound + 1), repeat=5):
        if not any(idx):
            continue
        alpha = alpha_index(*idx)
        if alpha > alpha_max * (1.0 + 1e-12):
            continue
        by_alpha.setdefault(alpha, []).append(idx)

    candidates = []
    for alpha in sorted(by_alpha):
        indices = sorted(by_alpha[alpha])
        plain = [idx for idx in indices if all(idx)]
        cand = populate_candidate(p, (plain or indices)[0])
        if cand.L > L_max:
            continue
        if candidates and abs(cand.L - candidates[-1].L) <= 1e-9 * cand.L:
            continue
        candidates.append(cand)
    logging.debug("Enumerated %d candidate lengths up to L=%g", len(candidates), L_max)
    return candidates


# Spectral witness

def characteristic_polynomial(p: ValidatedParams, spectral: float) -> np.ndarray:
    """Coefficients (highest degree first) of (1-a²b)ξ⁶ - rξ⁴ - (c+1)pξ³ + rpξ + cp²."""
    return np.array([p.kappa, 0.0, -p.r, -(p.c + 1.0) * spectral, 0.0, p.r * spectral,
                     p.c * spectral * spectral])


def _amplitude(p: ValidatedParams, spectral: float, xi: complex) -> Tuple[Polynomial, Polynomial]:
    """Null vector of the 2x2 symbol as polynomials in ξ, chosen at ``xi``.

    Rows of the symbol: [p - ξ³, -(ab/c)ξ³] and [-aξ³, p + (r/c)ξ - ξ³/c].
    """
    row1 = (Polynomial([spectral, 0, 0, -1.0]), Polynomial([0, 0, 0, -p.a * p.b / p.c]))
    row2 = (Polynomial([0, 0, 0, -p.a]), Polynomial([spectral, p.r / p.c, 0, -1.0 / p.c]))
    size1 = abs(row1[0](xi)) + abs(row1[1](xi))
    size2 = abs(row2[0](xi)) + abs(row2[1](xi))
    if max(size1, size2) <= 1e-14 * max(1.0, abs(xi) ** 3):
        raise DegenerateSymbol(f"symbol vanishes at xi={xi}")
    first, second = row1 if size1 >= size2 else row2
    # (second, -first) is orthogonal to the chosen row
    return -second, first


def _group_roots(roots: np.ndarray) -> List[Tuple[complex, int]]:
    groups: List[List[complex]] = []
    for root in sorted(roots, key=lambda z: (z.real, z.imag)):
        for group in groups:
            if abs(root - group[0]) <= ROOT_MERGE_TOL * max(1.0, abs(group[0])):
                group.append(root)
                break
        else:
            groups.append([root])
    return [(complex(np.mean(group)), len(group)) for group in groups]


def _basis_column(p: ValidatedParams, L: float, xi: complex, order: int,
                  amp: Tuple[Polynomial, Polynomial]) -> np.ndarray:
    """Boundary rows of d^order/dξ^order [e^{iξx} (A(ξ), B(ξ))]."""
    rows = np.zeros(10, dtype=complex)

    def value(poly: Polynomial, deriv: int, x: float) -> complex:
        # d^order/dξ^order of (iξ)^deriv e^{iξx} poly(ξ)
        w = Polynomial([0, 1j]) ** deriv * poly
        total = 0j
        for j in range(order + 1):
            term = w if j == 0 else w.deriv(j)
            total += math.comb(order, j) * (1j * x) ** (order - j) * term(xi)
        return total * np.exp(1j * xi * x)

    A, B = amp
    points = (0.0, L)
    rows[0], rows[1] = value(A, 0, 0.0), value(A, 0, L)
    rows[2], rows[3] = value(B, 0, 0.0), value(B, 0, L)
    rows[4], rows[5] = value(A, 1, 0.0), value(A, 1, L)
    rows[6], rows[7] = value(B, 1, 0.0), value(B, 1, L)
    for r, x in zip((8, 9), points):
        rows[r] = p.a * value(A, 2, x) + value(B, 2, x) / p.c
    return rows


def boundary_matrix(p: ValidatedParams, L: float, spectral: float) -> np.ndarray:
    """10x6 matrix of boundary conditions on the exponential fundamental system.

    Rows: φ(0), φ(L), ψ(0), ψ(L), φ'(0), φ'(L), ψ'(0), ψ'(L),
    aφ''+ψ''/c at 0 and at L. Columns are not scaled.
    """
    roots = np.roots(characteristic_polynomial(p, spectral))
    columns = []
    for xi, multiplicity in _group_roots(roots):
        amp = _amplitude(p, spectral, xi)
        for order in range(multiplicity):
            columns.append(_basis_column(p, L, xi, order, amp))
    return np.column_stack(columns)


def scaled_sigma_min(matrix: np.ndarray) -> float:
    norms = np.linalg.norm(matrix, axis=0)
    norms[norms == 0] = 1.0
    return float(svdvals(matrix / norms)[-1])


def spectral_witness(p: ValidatedParams, L: float, p_grid: Sequence[float]) -> SpectralWitness:
    """Scan λ = ip over ±p_grid and record σ_min of the column-scaled matrix."""
    if not (L > 0):
        raise InvalidParams(f"L>0 (L={L})")
    values = sorted({float(v) for v in p_grid} | {-float(v) for v in p_grid})
    if not values:
        raise InvalidParams("p_grid must not be empty")
    scan = []
    skipped = []
    for spectral in values:
        try:
            sigma = scaled_sigma_min(boundary_matrix(p, L, spectral))
        except DegenerateSymbol as exc:
            logging.warning("⚠️ Skipping p=%g: %s", spectral, exc)
            skipped.append(spectral)
            continue
        scan.append((spectral, sigma))
    if not scan:
        raise DegenerateSymbol("every grid point was degenerate")
    best = min(scan, key=lambda item: item[1])
    return SpectralWitness(lambda_scan=tuple(scan), min_sigma=best[1], argmin_p=best[0],
                           skipped=tuple(skipped))

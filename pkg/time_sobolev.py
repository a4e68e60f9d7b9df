"""Fractional Sobolev norms in time and the operators (-Δ_t)^σ.

A series of nt+1 samples on [0, T] is treated as one period of a
T-periodic signal: the first nt samples carry the period, the sample at
t = T is reconstructed afterwards. Frequencies are μ_j = 2π j / T.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft

from errors import EmptySeries, InvalidParams

HOMOGENEOUS = "homogeneous"
INHOMOGENEOUS = "inhomogeneous"


@dataclass(frozen=True)
class SobolevSpec:
    s: float
    T: float
    mode: str = INHOMOGENEOUS

    def __post_init__(self):
        if abs(self.s) > 1:
            raise InvalidParams(f"|s| <= 1 (s={self.s})")
        if not (self.T > 0):
            raise InvalidParams(f"T>0 (T={self.T})")
        if self.mode not in (HOMOGENEOUS, INHOMOGENEOUS):
            raise InvalidParams(f"unknown Sobolev mode '{self.mode}'")

    @property
    def kappa(self) -> float:
        return 2.0 * np.pi / self.T


def _period(series) -> np.ndarray:
    w = np.asarray(series, dtype=float)
    if w.ndim != 1 or w.size < 2:
        raise EmptySeries(f"need at least two samples, got shape {w.shape}")
    return w[:-1]


def frequencies(n: int, T: float) -> np.ndarray:
    """Angular frequencies of an n-sample period of length T, FFT order."""
    return 2.0 * np.pi * scipy.fft.fftfreq(n, d=T / n)


def symbol(mu: np.ndarray, exponent: float, spec: SobolevSpec) -> np.ndarray:
    """|μ|^exponent (homogeneous, zero mode to 0) or (κ²+μ²)^(exponent/2)."""
    if spec.mode == HOMOGENEOUS:
        out = np.zeros_like(mu)
        nonzero = mu != 0
        out[nonzero] = np.abs(mu[nonzero]) ** exponent
        return out
    return (spec.kappa ** 2 + mu ** 2) ** (0.5 * exponent)


def fractional_time_operator(series, sigma: float, spec: SobolevSpec,
                             endpoint: str = "periodic") -> np.ndarray:
    """Apply (-Δ_t)^σ to a series of nt+1 samples.

    Args:
        series: samples at t_0..t_nt.
        sigma: power; the Fourier multiplier is |μ|^{2σ} (homogeneous mode)
            or (κ²+μ²)^σ (inhomogeneous mode).
        spec: supplies T and the mode; its exponent is not used.
        endpoint: "periodic" copies the t=0 output to t=T, "zero" sets it to 0.
    """
    w = _period(series)
    mu = frequencies(w.size, spec.T)
    transformed = scipy.fft.ifft(symbol(mu, 2.0 * sigma, spec) * scipy.fft.fft(w)).real
    if endpoint == "periodic":
        last = transformed[0]
    elif endpoint == "zero":
        last = 0.0
    else:
        raise InvalidParams(f"unknown endpoint rule '{endpoint}'")
    return np.append(transformed, last)


def l2_norm(series, T: float) -> float:
    """sqrt(dt * Σ_{n<nt} w_n²)."""
    w = _period(series)
    return float(np.sqrt(T / w.size * np.dot(w, w)))


def sobolev_norm(series, spec: SobolevSpec) -> float:
    """Discrete H^s(0,T) norm; equals ``l2_norm`` for s = 0 (inhomogeneous)."""
    w = _period(series)
    n = w.size
    mu = frequencies(n, spec.T)
    coeffs = scipy.fft.fft(w)
    weights = symbol(mu, 2.0 * spec.s, spec)
    # Parseval: Σ|w|² = (1/n) Σ|ŵ|²
    value = (spec.T / n) / n * float(np.sum(weights * np.abs(coeffs) ** 2))
    return float(np.sqrt(max(value, 0.0)))


def mean_of(series) -> float:
    return float(np.mean(_period(series)))


def embedding_constant_estimate(spec: SobolevSpec, nt: int = 256) -> float:
    """Largest L²/H^s ratio over the discrete Fourier modes of nt samples.

    With s = 0 the ratio is 1 for every mode.
    """
    if nt < 2:
        raise EmptySeries(f"need at least two samples per period, got {nt}")
    mu = frequencies(nt, spec.T)
    weights = symbol(mu, 2.0 * spec.s, spec)
    if spec.mode == HOMOGENEOUS:
        weights = weights[mu != 0]
    return float(np.max(1.0 / np.sqrt(weights)))

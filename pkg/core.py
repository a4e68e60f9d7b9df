"""Parameters, grids, discrete fields and the weighted state-space inner product."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterator, List, Mapping, Optional, Sequence

import numpy as np

from errors import DimensionMismatch, GridTooCoarse, InvalidParams

CHANNELS = ("h0", "h1", "h2", "g0", "g1", "g2")


def _frozen_array(values, ndim: int, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float, copy=True)
    if arr.ndim != ndim:
        raise DimensionMismatch(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SystemParams:
    """Coefficients of the coupled system.

    ``a``, ``b``, ``c`` couple the dispersive terms, ``r`` is the transport
    coefficient of the second equation and ``a1``, ``a2`` weight the
    quadratic terms.
    """

    a: float
    b: float
    c: float
    r: float = 0.0
    a1: float = 0.0
    a2: float = 0.0

    @property
    def kappa(self) -> float:
        """1 - a^2 b, positive for valid parameters."""
        return 1.0 - self.a * self.a * self.b

    def to_dict(self) -> Dict[str, float]:
        return {"a": self.a, "b": self.b, "c": self.c, "r": self.r, "a1": self.a1, "a2": self.a2}


# Returned by validate_params; the type is the same, the name documents intent.
ValidatedParams = SystemParams


def validate_params(p: SystemParams) -> ValidatedParams:
    """Check b > 0, c > 0 and 1 - a^2 b > 0.

    Returns:
        ``p`` unchanged.

    Raises:
        InvalidParams: naming the first violated constraint.
    """
    for name in ("a", "b", "c", "r", "a1", "a2"):
        if not np.isfinite(getattr(p, name)):
            raise InvalidParams(f"{name} must be finite")
    if p.b <= 0:
        raise InvalidParams(f"b>0 (b={p.b})")
    if p.c <= 0:
        raise InvalidParams(f"c>0 (c={p.c})")
    if p.kappa <= 0:
        raise InvalidParams(f"1-a²b={p.kappa:g}")
    return p


@dataclass(frozen=True)
class Grid:
    """Uniform space-time grid on [0, L] x [0, T]."""

    L: float
    T: float
    nx: int
    nt: int

    def __post_init__(self):
        if not (self.L > 0):
            raise InvalidParams(f"L>0 (L={self.L})")
        if not (self.T > 0):
            raise InvalidParams(f"T>0 (T={self.T})")
        if int(self.nx) < 5:
            raise GridTooCoarse(f"nx must be at least 5, got {self.nx}")
        if int(self.nt) < 2:
            raise InvalidParams(f"nt>=2 (nt={self.nt})")
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "nt", int(self.nt))

    @property
    def dx(self) -> float:
        return self.L / (self.nx - 1)

    @property
    def dt(self) -> float:
        return self.T / self.nt

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, self.L, self.nx)

    @property
    def t(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.nt + 1)

    def with_length(self, L: float) -> "Grid":
        return Grid(L=L, T=self.T, nx=self.nx, nt=self.nt)

    def with_horizon(self, T: float) -> "Grid":
        return Grid(L=self.L, T=T, nx=self.nx, nt=self.nt)

    def to_dict(self) -> Dict[str, float]:
        return {"L": self.L, "T": self.T, "nx": self.nx, "nt": self.nt}


@dataclass(frozen=True)
class StatePair:
    """Values of (u, v) at the spatial nodes at one instant."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = _frozen_array(self.u, 1, "u")
        v = _frozen_array(self.v, 1, "v")
        if u.shape != v.shape:
            raise DimensionMismatch(f"u and v lengths differ: {u.size} vs {v.size}")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @classmethod
    def zeros(cls, nx: int) -> "StatePair":
        return cls(np.zeros(nx), np.zeros(nx))

    @property
    def nx(self) -> int:
        return self.u.size

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.u, self.v])

    @classmethod
    def from_stacked(cls, q: np.ndarray) -> "StatePair":
        n = q.size // 2
        return cls(q[:n], q[n:])

    def interior(self) -> "StatePair":
        """Copy with the endpoint nodes set to zero."""
        u = self.u.copy()
        v = self.v.copy()
        u[[0, -1]] = 0.0
        v[[0, -1]] = 0.0
        return StatePair(u, v)

    def __add__(self, other: "StatePair") -> "StatePair":
        return StatePair(self.u + other.u, self.v + other.v)

    def __sub__(self, other: "StatePair") -> "StatePair":
        return StatePair(self.u - other.u, self.v - other.v)

    def __mul__(self, scalar: float) -> "StatePair":
        return StatePair(scalar * self.u, scalar * self.v)

    __rmul__ = __mul__


def check_state(s: StatePair, g: Grid, name: str = "state") -> None:
    if s.nx != g.nx:
        raise DimensionMismatch(f"{name} has {s.nx} nodes, grid has {g.nx}")


@dataclass(frozen=True)
class Trajectory:
    """Discrete (u, v) fields, row n holding time node t_n."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = _frozen_array(self.u, 2, "u")
        v = _frozen_array(self.v, 2, "v")
        if u.shape != v.shape:
            raise DimensionMismatch(f"u and v shapes differ: {u.shape} vs {v.shape}")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @classmethod
    def from_slices(cls, slices: Sequence[StatePair]) -> "Trajectory":
        return cls(np.array([s.u for s in slices]), np.array([s.v for s in slices]))

    def __len__(self) -> int:
        return self.u.shape[0]

    def __iter__(self) -> Iterator[StatePair]:
        return iter(self.slices)

    def slice(self, n: int) -> StatePair:
        return StatePair(self.u[n], self.v[n])

    @property
    def slices(self) -> List[StatePair]:
        return [self.slice(n) for n in range(len(self))]

    @property
    def initial(self) -> StatePair:
        return self.slice(0)

    @property
    def final(self) -> StatePair:
        return self.slice(len(self) - 1)

    def max_abs(self) -> float:
        return float(max(np.max(np.abs(self.u)), np.max(np.abs(self.v))))


def check_trajectory(traj: Trajectory, g: Grid) -> None:
    if traj.u.shape != (g.nt + 1, g.nx):
        raise DimensionMismatch(f"trajectory shape {traj.u.shape} does not match grid "
                                f"({g.nt + 1}, {g.nx})")


@dataclass(frozen=True)
class BoundaryData:
    """The six boundary input series, each sampled at the nt+1 time nodes.

    h0, h1, h2 are u(0,t), u(L,t), u_x(L,t); g0, g1, g2 the same for v.
    """

    h0: np.ndarray
    h1: np.ndarray
    h2: np.ndarray
    g0: np.ndarray
    g1: np.ndarray
    g2: np.ndarray

    def __post_init__(self):
        lengths = set()
        for name in CHANNELS:
            arr = _frozen_array(getattr(self, name), 1, name)
            lengths.add(arr.size)
            object.__setattr__(self, name, arr)
        if len(lengths) != 1:
            raise DimensionMismatch(f"boundary series lengths differ: {sorted(lengths)}")

    @classmethod
    def zeros(cls, g: Grid) -> "BoundaryData":
        return cls(**{name: np.zeros(g.nt + 1) for name in CHANNELS})

    @classmethod
    def from_channels(cls, g: Grid, channels: Mapping[str, np.ndarray]) -> "BoundaryData":
        """Build from a partial mapping; absent channels are zero."""
        unknown = set(channels) - set(CHANNELS)
        if unknown:
            raise DimensionMismatch(f"unknown boundary channels: {sorted(unknown)}")
        values = {name: np.zeros(g.nt + 1) for name in CHANNELS}
        values.update({k: np.asarray(v, dtype=float) for k, v in channels.items()})
        return cls(**values)

    @property
    def length(self) -> int:
        return self.h0.size

    def channel(self, name: str) -> np.ndarray:
        return getattr(self, name)

    def as_dict(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in CHANNELS}

    def left(self) -> np.ndarray:
        """(nt+1, 2) array of (u(0,t), v(0,t))."""
        return np.column_stack([self.h0, self.g0])

    def right(self) -> np.ndarray:
        return np.column_stack([self.h1, self.g1])

    def neumann(self) -> np.ndarray:
        return np.column_stack([self.h2, self.g2])

    def max_abs(self) -> float:
        return float(max(np.max(np.abs(getattr(self, name))) for name in CHANNELS))


def check_boundary(bd: BoundaryData, g: Grid) -> None:
    if bd.length != g.nt + 1:
        raise DimensionMismatch(f"boundary series have {bd.length} samples, grid needs {g.nt + 1}")


@dataclass(frozen=True)
class SourcePair:
    """Interior forcing (f, s) on every (t_n, x_i) node."""

    f: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        f = _frozen_array(self.f, 2, "f")
        s = _frozen_array(self.s, 2, "s")
        if f.shape != s.shape:
            raise DimensionMismatch(f"f and s shapes differ: {f.shape} vs {s.shape}")
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "s", s)

    @classmethod
    def zeros(cls, g: Grid) -> "SourcePair":
        return cls(np.zeros((g.nt + 1, g.nx)), np.zeros((g.nt + 1, g.nx)))

    def __add__(self, other: "SourcePair") -> "SourcePair":
        return SourcePair(self.f + other.f, self.s + other.s)

    def max_abs(self) -> float:
        return float(max(np.max(np.abs(self.f)), np.max(np.abs(self.s))))


def check_sources(src: SourcePair, g: Grid) -> None:
    if src.f.shape != (g.nt + 1, g.nx):
        raise DimensionMismatch(f"source shape {src.f.shape} does not match grid "
                                f"({g.nt + 1}, {g.nx})")


def trapezoid_weights(g: Grid) -> np.ndarray:
    w = np.full(g.nx, g.dx)
    w[0] = w[-1] = 0.5 * g.dx
    return w


def inner_product_X(lhs: StatePair, rhs: StatePair, p: SystemParams, g: Grid) -> float:
    """Trapezoid rule for (b/c)∫uφ + ∫vψ over [0, L]."""
    check_state(lhs, g, "lhs")
    check_state(rhs, g, "rhs")
    w = trapezoid_weights(g)
    return float((p.b / p.c) * np.dot(w, lhs.u * rhs.u) + np.dot(w, lhs.v * rhs.v))


def x_norm(s: StatePair, p: SystemParams, g: Grid) -> float:
    return float(np.sqrt(max(inner_product_X(s, s, p, g), 0.0)))


def sine_state(g: Grid, u_modes: Optional[Sequence[float]] = None,
               v_modes: Optional[Sequence[float]] = None) -> StatePair:
    """State whose components are sums of amp_k * sin(k pi x / L), k = 1, 2, ..."""
    x = g.x

    def build(modes):
        out = np.zeros(g.nx)
        if modes is None:
            modes = ()
        for k, amp in enumerate(np.atleast_1d(np.asarray(modes, dtype=float)), start=1):
            out += float(amp) * np.sin(k * np.pi * x / g.L)
        out[[0, -1]] = 0.0
        return out

    return StatePair(build(u_modes), build(v_modes))


def random_smooth_state(g: Grid, rng: np.random.Generator, modes: int = 6,
                        decay: float = 1.0) -> StatePair:
    """Random sine combination with amplitudes decaying like k^-(1+decay)."""
    k = np.arange(1, modes + 1)
    scale = k ** -(1.0 + decay)
    return sine_state(g, rng.standard_normal(modes) * scale, rng.standard_normal(modes) * scale)

"""Radial geometry of the ball in R^N, discrete fields and norm primitives.

Everything downstream works on a 1-D mesh in the radial coordinate. Cell
volumes and face areas carry the full N-dimensional measure, so discrete
integrals are integrals over the ball itself.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import gamma, pi

import numpy as np


def sphere_measure(N: int) -> float:
    """Surface measure of the unit sphere S^{N-1}, 2 pi^{N/2} / Gamma(N/2)."""
    return 2.0 * pi ** (N / 2.0) / gamma(N / 2.0)


def ball_volume(N: int, R: float) -> float:
    return sphere_measure(N) * R**N / N


def critical_exponent(N: int) -> float:
    """Diffusion exponent 2(N-1)/N at which the mass decides global existence."""
    if int(N) != N or N < 3:
        raise ValueError(f"dimension N must be an integer >= 3, got {N!r}")
    return 2.0 * (N - 1) / N


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Finite-volume mesh of the ball {|x| < R} in R^N, radial coordinate only.

    ``edges`` has n+1 entries from 0 to R. Face 0 is the symmetry point
    r = 0 and carries zero area, so no flux crosses it.
    """

    dimension: int
    edges: np.ndarray
    centers: np.ndarray = field(init=False)
    cell_volumes: np.ndarray = field(init=False)
    face_areas: np.ndarray = field(init=False)
    center_spacing: np.ndarray = field(init=False)

    def __post_init__(self):
        N = self.dimension
        if int(N) != N or N < 3:
            raise ValueError(f"dimension N must be an integer >= 3, got {N!r}")
        e = np.asarray(self.edges, dtype=float)
        if e.ndim != 1 or e.size < 4:
            raise ValueError("need at least 3 cells (4 edges)")
        if e[0] != 0.0:
            raise ValueError("first edge must be exactly 0")
        if not np.all(np.diff(e) > 0):
            raise ValueError("edges must be strictly increasing")
        w = sphere_measure(N)
        c = 0.5 * (e[1:] + e[:-1])
        vol = w * (e[1:] ** N - e[:-1] ** N) / N
        area = w * e ** (N - 1)
        area[0] = 0.0
        # centre-to-centre distance across each face; infinite on the two
        # boundary faces so that any conductance area/h vanishes there
        h = np.full_like(e, np.inf)
        h[1:-1] = np.diff(c)
        object.__setattr__(self, "edges", _frozen(e))
        object.__setattr__(self, "centers", _frozen(c))
        object.__setattr__(self, "cell_volumes", _frozen(vol))
        object.__setattr__(self, "face_areas", _frozen(area))
        object.__setattr__(self, "center_spacing", _frozen(h))

    @property
    def radius(self) -> float:
        return float(self.edges[-1])

    @property
    def cell_count(self) -> int:
        return self.edges.size - 1

    @property
    def volume(self) -> float:
        """Exact measure of the ball, omega_{N-1} R^N / N."""
        return ball_volume(self.dimension, self.radius)

    @property
    def discrete_volume(self) -> float:
        return float(self.cell_volumes.sum())

    @property
    def dr(self) -> float:
        """Uniform spacing; raises on graded meshes."""
        d = np.diff(self.edges)
        if not np.allclose(d, d[0], rtol=1e-12, atol=0.0):
            raise ValueError("grid is not uniform")
        return float(d[0])

    def key(self) -> tuple:
        return (self.dimension, self.edges.tobytes())

    def __eq__(self, other):
        if not isinstance(other, RadialGrid):
            return NotImplemented
        return self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        return f"RadialGrid(N={self.dimension}, R={self.radius:g}, n={self.cell_count})"


def make_uniform_grid(N: int, R: float, n: int) -> RadialGrid:
    if int(N) != N or N < 3:
        raise ValueError(f"the model assumes N >= 3, got N={N!r}")
    if not R > 0:
        raise ValueError(f"radius must be positive, got {R!r}")
    if int(n) != n or n < 3:
        raise ValueError(f"need n >= 3 cells, got {n!r}")
    n = int(n)
    edges = R * np.arange(n + 1, dtype=float) / n
    edges[-1] = R
    return RadialGrid(int(N), edges)


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters: dimension, diffusion exponent, regularization, mean mass."""

    dimension: int
    m: float
    delta: float = 0.0
    mass: float = 1.0

    def __post_init__(self):
        if int(self.dimension) != self.dimension or self.dimension < 3:
            raise ValueError(f"dimension N must be >= 3, got {self.dimension!r}")
        if not 1.0 < self.m < 2.0:
            raise ValueError(f"exponent m must lie in (1, 2), got {self.m!r}")
        if not 0.0 <= self.delta < 1.0:
            raise ValueError(f"delta must lie in [0, 1), got {self.delta!r}")
        if not self.mass >= 0.0:
            raise ValueError(f"mass must be nonnegative, got {self.mass!r}")

    @classmethod
    def from_dimension(cls, N: int, delta: float = 0.0, mass: float = 1.0) -> "ModelParams":
        return cls(int(N), critical_exponent(N), float(delta), float(mass))


def _as_values(f, grid: RadialGrid | None = None) -> np.ndarray:
    if isinstance(f, (CellField, PotentialField)):
        if grid is not None and f.grid != grid:
            raise ValueError("field is attached to a different grid")
        return f.values
    a = np.asarray(f, dtype=float)
    if grid is not None and a.shape != (grid.cell_count,):
        raise ValueError(f"field has shape {a.shape}, grid has {grid.cell_count} cells")
    return a


@dataclass(frozen=True, eq=False)
class CellField:
    """Nonnegative per-cell density attached to a grid."""

    values: np.ndarray
    grid: RadialGrid

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.cell_count,):
            raise ValueError(f"expected {self.grid.cell_count} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("density must be finite")
        if np.any(v < 0):
            raise ValueError("density must be nonnegative")
        object.__setattr__(self, "values", _frozen(v))


@dataclass(frozen=True, eq=False)
class PotentialField:
    """Per-cell potential with zero volume mean (the gauge)."""

    values: np.ndarray
    grid: RadialGrid
    gauge_tol: float = 1e-10

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.cell_count,):
            raise ValueError(f"expected {self.grid.cell_count} values, got shape {v.shape}")
        scale = float(np.max(np.abs(v))) if v.size else 0.0
        mean = float(self.grid.cell_volumes @ v) / self.grid.discrete_volume
        if abs(mean) > self.gauge_tol * max(scale, np.finfo(float).tiny):
            raise ValueError(f"potential violates the zero-mean gauge (mean {mean:.3e})")
        object.__setattr__(self, "values", _frozen(v))


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    dt: float
    mass: float
    l1: float
    lm: float
    l2: float
    linf: float
    liapunov: float
    entropy: float
    dirichlet: float
    coupling: float
    min_u: float
    phi_grad_linf: float

    FIELDS = (
        "t", "dt", "mass", "l1", "lm", "l2", "linf", "liapunov",
        "entropy", "dirichlet", "coupling", "min_u", "phi_grad_linf",
    )

    def as_row(self) -> list[float]:
        return [getattr(self, k) for k in self.FIELDS]


def volume_integral(f, grid: RadialGrid) -> float:
    """Midpoint quadrature sum_i V_i f_i."""
    return float(grid.cell_volumes @ _as_values(f, grid))


def lp_norm(f, p: float, grid: RadialGrid) -> float:
    """Discrete L^p norm, (sum_i V_i |f_i|^p)^{1/p}, or max |f_i| for p = inf."""
    a = np.abs(_as_values(f, grid))
    if p == np.inf:
        return float(a.max())
    if not p >= 1:
        raise ValueError(f"lp_norm needs p >= 1 or inf, got {p!r}")
    if p == 1:
        return float(grid.cell_volumes @ a)
    scale = a.max()
    if scale == 0.0:
        return 0.0
    # factor out the max so large p does not overflow
    return float(scale * (grid.cell_volumes @ (a / scale) ** p) ** (1.0 / p))


def quasi_norm(f, q: float, grid: RadialGrid) -> float:
    """(sum V_i |f_i|^q)^{1/q} for any q > 0; a quasi-norm when q < 1."""
    if not q > 0:
        raise ValueError(f"exponent must be positive, got {q!r}")
    a = np.abs(_as_values(f, grid))
    scale = a.max()
    if scale == 0.0:
        return 0.0
    return float(scale * (grid.cell_volumes @ (a / scale) ** q) ** (1.0 / q))

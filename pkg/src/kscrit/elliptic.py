"""Neumann, zero-mean solve of -Lap(phi) = u - <u> in the radial reduction.

The radial Green's representation

    phi'(r) = -r^{1-N} int_0^r (u(s) - M) s^{N-1} ds

is evaluated exactly on the mesh by a cumulative sum of cell sources, so
there is no linear system and no solver tolerance. Potentials are then
recovered from face gradients by the centre-to-centre relation
phi_{i+1} - phi_i = h_f g_f, which makes the discrete energy identity
sum_f A_f h_f g_f^2 = sum_i V_i (u_i - M) phi_i hold to round-off.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .core import CellField, PotentialField, RadialGrid, _as_values

log = logging.getLogger(__name__)


class CompatibilityError(RuntimeError):
    """The discrete source failed to integrate to zero (internal bug)."""


@dataclass(frozen=True, eq=False)
class PoissonSolution:
    phi: PotentialField
    face_gradient: np.ndarray
    residual_mass: float
    mean: float

    @property
    def grid(self) -> RadialGrid:
        return self.phi.grid


def mean_value(u, grid: RadialGrid) -> float:
    """Volume mean (1/|Omega|) sum_i V_i u_i over the discrete ball."""
    v = _as_values(u, grid)
    return float(grid.cell_volumes @ v) / grid.discrete_volume


def face_gradients(u, grid: RadialGrid) -> tuple[np.ndarray, float]:
    """Face values of dphi/dr and the source mean, without building phi."""
    v = np.ascontiguousarray(_as_values(u, grid), dtype=float)
    return kernels.poisson_gradient(v, grid.cell_volumes, grid.face_areas)


def solve_poisson(u, grid: RadialGrid) -> PoissonSolution:
    """Solve -Lap(phi) = u - <u>, d_r phi = 0 at r = R, <phi> = 0.

    ``u`` may be a CellField or any finite array (signed sources are fine,
    which the dual distance relies on).
    """
    v = np.ascontiguousarray(_as_values(u, grid), dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("source must be finite")
    g, mean = kernels.poisson_gradient(v, grid.cell_volumes, grid.face_areas)
    phi = kernels.potential_from_gradient(g, grid.center_spacing, grid.cell_volumes)
    vol = grid.cell_volumes
    residual = abs(float(vol @ (v - mean)))
    total = float(vol @ np.abs(v))
    if residual > 1e-10 * max(total, np.finfo(float).tiny):
        raise CompatibilityError(f"source does not integrate to zero: {residual:.3e}")
    return PoissonSolution(PotentialField(phi, grid), g, residual, float(mean))


def grad_linf(sol: PoissonSolution) -> float:
    return float(np.max(np.abs(sol.face_gradient)))


def dirichlet_sum(g: np.ndarray, grid: RadialGrid) -> float:
    """sum_f A_f h_f g_f^2, the discrete ||grad phi||_2^2 (boundary faces excluded)."""
    n = grid.cell_count
    a = grid.face_areas[1:n]
    h = grid.center_spacing[1:n]
    return float(np.sum(a * h * g[1:n] ** 2))


def second_difference_linf(sol: PoissonSolution) -> float:
    """max |phi''| proxy from consecutive face gradients.

    Only a monitor for the W^{2,inf} regularity hypothesis of the uniqueness
    argument; it does not verify it.
    """
    g = sol.face_gradient
    e = sol.grid.edges
    d = np.diff(g) / np.diff(e)
    return float(np.max(np.abs(d)))

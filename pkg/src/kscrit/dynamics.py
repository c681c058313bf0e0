"""Explicit finite-volume stepping of the regularized density equation

    u_t = div( grad (u+delta)^m - u grad phi ),   -Lap phi = u - <u>,

with centred degenerate diffusion, upwinded drift, no-flux boundaries and
a CFL step that keeps every update a convex combination of old values.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _backend
from ._backend import kernels
from .analysis import BlowupConfig, BlowupMonitor, BlowupVerdict, compute_diagnostics
from .core import CellField, DiagnosticsRecord, ModelParams, RadialGrid, _as_values
from .elliptic import PoissonSolution, solve_poisson

log = logging.getLogger(__name__)


class PositivityError(RuntimeError):
    """A step that respected the CFL bound produced a negative density."""


class StepBudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class StepperConfig:
    cfl_safety: float = 0.4
    dt_init: float = 1e-6
    dt_min: float = 1e-10
    dt_max: float = 1e-2

    def __post_init__(self):
        if not 0 < self.cfl_safety <= 1:
            raise ValueError(f"cfl_safety must lie in (0, 1], got {self.cfl_safety!r}")
        if not 0 < self.dt_min <= self.dt_init <= self.dt_max:
            raise ValueError("need 0 < dt_min <= dt_init <= dt_max")


@dataclass(frozen=True)
class StepReport:
    dt_used: float
    max_flux: float
    positivity_clipped: bool
    floor_hit: bool = False


def _check_density(u, grid) -> np.ndarray:
    v = np.ascontiguousarray(_as_values(u, grid), dtype=float)
    if np.any(v < 0) or not np.all(np.isfinite(v)):
        raise ValueError("density must be finite and nonnegative")
    return v


def face_flux(u, phi: PoissonSolution, params: ModelParams, grid: RadialGrid,
              drift: bool = True) -> np.ndarray:
    """Outward (+r) flux G_f at all n+1 faces; zero on both boundary faces."""
    v = _check_density(u, grid)
    if phi.grid != grid:
        raise ValueError("potential lives on a different grid")
    g = phi.face_gradient if drift else np.zeros(grid.cell_count + 1)
    return kernels.face_flux(v, g, params.m, params.delta, grid.center_spacing)


def stable_dt_flagged(u, phi: PoissonSolution, params: ModelParams, cfg: StepperConfig,
                      grid: RadialGrid, drift: bool = True) -> tuple[float, bool]:
    """(dt, floor_hit). floor_hit marks a step forced up to dt_min."""
    v = _check_density(u, grid)
    g = phi.face_gradient if drift else np.zeros(grid.cell_count + 1)
    dt, hit = kernels.stable_dt(v, g, grid.cell_volumes, grid.face_areas, grid.center_spacing,
                                params.m, params.delta, cfg.cfl_safety, cfg.dt_min, cfg.dt_max)
    return float(dt), bool(hit)


def stable_dt(u, phi: PoissonSolution, params: ModelParams, cfg: StepperConfig,
              grid: RadialGrid, drift: bool = True) -> float:
    """CFL step clamped to [dt_min, dt_max]."""
    return stable_dt_flagged(u, phi, params, cfg, grid, drift)[0]


def step(u, params: ModelParams, cfg: StepperConfig, grid: RadialGrid,
         dt: float | None = None, drift: bool = True) -> tuple[CellField, PoissonSolution, StepReport]:
    """One explicit step. Returns the new density, its potential, and a report.

    ``dt`` defaults to the CFL step; an explicit value larger than the CFL
    step is refused.
    """
    v = _check_density(u, grid)
    dmax = cfg.dt_max
    if dt is not None:
        if not dt > 0:
            raise ValueError("dt must be positive")
        cfl, _ = stable_dt_flagged(v, solve_poisson(v, grid), params, cfg, grid, drift)
        if dt > cfl * (1.0 + 1e-12):
            raise ValueError(f"requested dt {dt!r} exceeds the stable step {cfl!r}")
        dmax = dt
    new, _, steps, status, last_dt, max_flux, clipped, floor_hit = kernels.advance(
        v, grid.cell_volumes, grid.face_areas, grid.center_spacing, params.m, params.delta,
        cfg.cfl_safety, min(cfg.dt_min, dmax), dmax, 0.0, math.inf, 1, 1.0 if drift else 0.0,
    )
    if status == _backend.NEGATIVE:
        raise PositivityError("negative density after a CFL-respecting step")
    field_ = CellField(new, grid)
    return field_, solve_poisson(new, grid), StepReport(last_dt, max_flux, clipped, floor_hit)


Observer = Callable[[DiagnosticsRecord], None]


@dataclass
class RunResult:
    u: CellField
    t: float
    steps: int
    cause: str
    verdict: BlowupVerdict
    records: list = field(default_factory=list)
    positivity_clipped: bool = False
    floor_steps: int = 0


def sample_times(t_end: float, cadence: float | None) -> list[float]:
    """Output times k*cadence in (0, t_end), then t_end itself."""
    if t_end <= 0:
        return []
    if cadence is None or cadence <= 0 or cadence >= t_end:
        return [t_end]
    k = int(math.floor(t_end / cadence + 1e-9))
    ts = [i * cadence for i in range(1, k + 1) if i * cadence < t_end * (1 - 1e-12)]
    return ts + [t_end]


def run(u0, params: ModelParams, cfg: StepperConfig, grid: RadialGrid, t_end: float,
        observer: Optional[Observer] = None, cadence: float | None = None,
        blowup: BlowupConfig | None = None, max_steps: int | None = None,
        drift: bool = True, keep_records: bool = True, batch: int = 100_000,
        snapshot: Optional[Callable[[float, np.ndarray], None]] = None) -> RunResult:
    """Step from t = 0 to t_end, sampling diagnostics at each cadence point.

    Terminates with cause "completed" or "blowup_suspected". Sample times
    are hit exactly (the step before a sample is shortened).
    """
    if not math.isfinite(t_end) or t_end < 0:
        raise ValueError("t_end must be finite and nonnegative")
    u = _check_density(u0, grid).copy()
    bcfg = blowup if blowup is not None else BlowupConfig(dt_min=cfg.dt_min)
    monitor = BlowupMonitor(bcfg)
    records: list[DiagnosticsRecord] = []

    def emit(t, dt, v):
        rec = compute_diagnostics(v, t, dt, params, grid)
        if keep_records:
            records.append(rec)
        if observer is not None:
            observer(rec)
        if snapshot is not None:
            snapshot(t, v)
        return rec

    rec0 = emit(0.0, 0.0, u)
    monitor.sample(0.0, rec0.linf)
    t = 0.0
    total = 0
    floor_steps = 0
    clipped_any = False
    chi = 1.0 if drift else 0.0
    first = True
    cause = "completed"
    last_dt = 0.0
    for target in sample_times(t_end, cadence):
        while t < target:
            budget = batch if max_steps is None else min(batch, max_steps - total)
            if budget <= 0:
                raise StepBudgetExceeded(f"step budget {max_steps} exhausted at t={t!r}")
            # the very first step is capped at dt_init
            dmax = cfg.dt_init if first else cfg.dt_max
            nb = 1 if first else budget
            u, t, steps, status, dt, _, clipped, floor_hit = kernels.advance(
                u, grid.cell_volumes, grid.face_areas, grid.center_spacing, params.m,
                params.delta, cfg.cfl_safety, cfg.dt_min, dmax, t, target, nb, chi,
            )
            first = False
            total += steps
            if steps:
                last_dt = dt
            if status == _backend.NEGATIVE:
                raise PositivityError(f"negative density after a CFL-respecting step at t={t!r}")
            clipped_any |= clipped
            if floor_hit:
                floor_steps += 1
            if steps:
                monitor.update(t, dt, float(u.max()), floor_hit, steps)
            if not np.all(np.isfinite(u)):
                raise FloatingPointError(f"non-finite density at t={t!r}")
            if monitor.flagged:
                break
        emit(t, last_dt, u)
        if monitor.flagged:
            cause = "blowup_suspected"
            break
    verdict = monitor.verdict()
    log.debug("run finished: cause=%s t=%g steps=%d", cause, t, total)
    return RunResult(CellField(u, grid), float(t), total, cause, verdict, records,
                     clipped_any, floor_steps)


__all__ = [
    "StepperConfig", "StepReport", "PositivityError", "StepBudgetExceeded", "RunResult",
    "face_flux", "stable_dt", "stable_dt_flagged", "step", "run", "sample_times",
]

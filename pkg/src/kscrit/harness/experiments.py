"""Experiment orchestration: single runs, mass sweeps, delta continuation."""
from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from .. import __version__
from .._backend import NAME as BACKEND
from ..analysis import check_dissipation, sup_ratio
from ..core import DiagnosticsRecord, ModelParams, RadialGrid, lp_norm
from ..dynamics import RunResult, run
from ..energy import ThresholdReport, estimate_sobolev_constant, threshold_report
from .config import RunConfig, config_to_ini, initial_density

log = logging.getLogger(__name__)

SERIES_HEADER = DiagnosticsRecord.FIELDS


def _fmt(x: float) -> str:
    return "%.17g" % x


@lru_cache(maxsize=32)
def estimated_sobolev(N: int, R: float, n: int, trials: int, iterations: int, seed: int) -> float:
    from ..core import make_uniform_grid
    return estimate_sobolev_constant(make_uniform_grid(N, R, n), trials, iterations, seed).c_s


def thresholds(cfg: RunConfig) -> dict[str, ThresholdReport]:
    """Threshold reports keyed by provenance; user and estimated are kept apart."""
    grid = cfg.grid()
    vol = grid.discrete_volume
    out = {}
    if cfg.cs is not None:
        out["user"] = threshold_report(cfg.M, cfg.N, vol, cfg.cs, "user-supplied C_s")
    cs_hat = estimated_sobolev(cfg.N, cfg.R, cfg.n, cfg.sobolev_trials,
                               cfg.sobolev_iterations, cfg.seed)
    out["estimated"] = threshold_report(
        cfg.M, cfg.N, vol, cs_hat,
        f"radial Rayleigh estimate, n={cfg.n}, trials={cfg.sobolev_trials}, seed={cfg.seed}",
    )
    return out


@dataclass
class ExperimentResult:
    config: RunConfig
    output_dir: Path
    result: RunResult
    thresholds: dict
    dissipation_ok: bool
    max_linf: float
    final_liapunov: float

    @property
    def cause(self) -> str:
        return self.result.cause


def snapshot_name(t: float) -> str:
    return f"snapshot_{t:.10g}.csv"


def run_experiment(cfg: RunConfig) -> ExperimentResult:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(config_to_ini(cfg))
    grid = cfg.grid()
    u0 = initial_density(cfg, grid)
    params = ModelParams.from_dimension(cfg.N, cfg.delta, cfg.M)
    thr = thresholds(cfg)

    count = {"k": 0}
    written = set()

    def snap(t, v):
        k = count["k"]
        count["k"] += 1
        if cfg.snapshot_every and k % cfg.snapshot_every == 0:
            _write_snapshot(out, grid, t, v)
            written.add(t)

    with open(out / "series.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SERIES_HEADER)

        def observer(rec: DiagnosticsRecord):
            w.writerow([_fmt(x) for x in rec.as_row()])

        res = run(u0, params, cfg.stepper, grid, cfg.t_end, observer=observer,
                  cadence=cfg.cadence, blowup=cfg.blowup(), snapshot=snap)
    if res.t not in written:
        _write_snapshot(out, grid, res.t, res.u.values)
    diss = check_dissipation(res.records)
    recs = res.records
    er = ExperimentResult(cfg, out, res, thr, diss.passed, max(r.linf for r in recs),
                          recs[-1].liapunov)
    _write_verdict(out / "verdict.txt", er, diss)
    return er


def _write_snapshot(out: Path, grid: RadialGrid, t: float, v: np.ndarray):
    from ..elliptic import solve_poisson

    phi = solve_poisson(v, grid).phi.values
    with open(out / snapshot_name(t), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("r_center", "u", "phi"))
        for r, a, b in zip(grid.centers, v, phi):
            w.writerow((_fmt(r), _fmt(a), _fmt(b)))


def _write_verdict(path: Path, er: ExperimentResult, diss):
    res = er.result
    v = res.verdict
    lines = [
        f"termination = {res.cause}",
        f"blowup_flagged = {v.flagged}",
        f"blowup_reason = {v.reason}",
        f"blowup_t = {v.t_flag!r}",
        f"t_final = {res.t!r}",
        f"steps = {res.steps}",
        f"floor_steps = {res.floor_steps}",
        f"positivity_clipped = {res.positivity_clipped}",
        f"max_linf = {er.max_linf!r}",
        f"sup_ratio = {sup_ratio(res.records)!r}",
        f"final_liapunov = {er.final_liapunov!r}",
        f"liapunov_nonincreasing = {diss.passed}",
        f"liapunov_violations = {len(diss.violations)}",
        f"backend = {BACKEND}",
        f"version = {__version__}",
    ]
    for key in ("user", "estimated"):
        if key in er.thresholds:
            lines.append(f"[threshold:{key}]")
            lines.extend(er.thresholds[key].lines())
    path.write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class SweepRow:
    M: float
    ratio: float
    verdict: str
    max_linf: float
    final_liapunov: float


def _sweep_member(cfg: RunConfig) -> tuple[str, float, float]:
    er = run_experiment(cfg)
    return er.cause, er.max_linf, er.final_liapunov


def _pool_map(fn, items, workers):
    items = list(items)
    if workers is None:
        workers = min(len(items), os.cpu_count() or 1)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        # map preserves input order
        return list(ex.map(fn, items))


def sweep_mass(cfg: RunConfig, masses, workers: int | None = None) -> list[SweepRow]:
    masses = [float(m) for m in masses]
    if not masses:
        raise ValueError("mass list is empty")
    if any(not m > 0 for m in masses):
        raise ValueError("masses must be positive")
    base = Path(cfg.output_dir)
    members = [replace(cfg, M=m, output_dir=str(base / f"mass_{i:03d}")) for i, m in enumerate(masses)]
    mstar = thresholds(cfg)["estimated"].m_star
    results = _pool_map(_sweep_member, members, workers)
    rows = [SweepRow(m, m / mstar, c, mx, lf) for m, (c, mx, lf) in zip(masses, results)]
    base.mkdir(parents=True, exist_ok=True)
    with open(base / "sweep_summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("M", "M_over_Mstar_est", "verdict", "max_linf", "final_liapunov"))
        for r in rows:
            w.writerow((_fmt(r.M), _fmt(r.ratio), r.verdict, _fmt(r.max_linf), _fmt(r.final_liapunov)))
    return rows


# ---------------------------------------------------------------------------
# delta continuation


@dataclass(frozen=True)
class ContinuationReport:
    deltas: tuple
    distances: tuple
    factors: tuple
    mean_factor: float
    rho: float
    converged: bool
    aborted: bool
    causes: tuple


def delta_ladder(delta0: float, levels: int) -> list[float]:
    if not 0 < delta0 < 1:
        raise ValueError("delta0 must lie in (0, 1)")
    if int(levels) != levels or levels < 2:
        raise ValueError("need at least 2 levels")
    return [delta0 / 2.0**k for k in range(int(levels))]


def _continuation_member(cfg: RunConfig):
    er = run_experiment(cfg)
    return er.cause, er.result.u.values.copy()


def continuation_over(cfg: RunConfig, deltas, rho: float = 1.3,
                      workers: int | None = None) -> ContinuationReport:
    """Final-time L2 distances between consecutive members of a delta ladder."""
    deltas = [float(d) for d in deltas]
    if len(deltas) < 2:
        raise ValueError("need at least 2 levels")
    if any(not 0 <= d < 1 for d in deltas):
        raise ValueError("delta values must lie in [0, 1)")
    if any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise ValueError("delta ladder must be strictly decreasing")
    base = Path(cfg.output_dir)
    members = [replace(cfg, delta=d, output_dir=str(base / f"delta_{k:02d}")) for k, d in enumerate(deltas)]
    results = _pool_map(_continuation_member, members, workers)
    causes = tuple(c for c, _ in results)
    aborted = any(c != "completed" for c in causes)
    if aborted:
        first = causes.index(next(c for c in causes if c != "completed"))
        results = results[:first]
    grid = cfg.grid()
    finals = [u for _, u in results]
    dist = tuple(lp_norm(a - b, 2, grid) for a, b in zip(finals, finals[1:]))
    factors = tuple(a / b if b > 0 else math.inf for a, b in zip(dist, dist[1:]))
    if factors:
        mean = math.exp(sum(math.log(f) for f in factors) / len(factors))
    else:
        mean = math.nan
    decreasing = all(b < a for a, b in zip(dist, dist[1:]))
    ok = (not aborted) and len(dist) >= 2 and decreasing and mean >= rho
    report = ContinuationReport(tuple(deltas), dist, factors, mean, rho, ok, aborted, causes)
    _write_continuation(base, report)
    return report


def continuation_delta(cfg: RunConfig, delta0: float, levels: int, rho: float = 1.3,
                       workers: int | None = None) -> ContinuationReport:
    return continuation_over(cfg, delta_ladder(delta0, levels), rho, workers)


def _write_continuation(base: Path, rep: ContinuationReport):
    base.mkdir(parents=True, exist_ok=True)
    with open(base / "continuation.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("delta_a", "delta_b", "l2_distance", "decay_factor"))
        for k, d in enumerate(rep.distances):
            f = rep.factors[k - 1] if k > 0 else math.nan
            w.writerow((_fmt(rep.deltas[k]), _fmt(rep.deltas[k + 1]), _fmt(d), _fmt(f)))
    (base / "continuation_verdict.txt").write_text(
        f"converged = {rep.converged}\naborted = {rep.aborted}\n"
        f"mean_decay_factor = {rep.mean_factor!r}\nrho = {rep.rho!r}\n"
        f"causes = {', '.join(rep.causes)}\n"
    )

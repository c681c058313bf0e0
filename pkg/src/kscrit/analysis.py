"""Run diagnostics, blow-up detection, the H^-1 dual distance and
inequality audits with calibrated-then-frozen constants."""
from __future__ import annotations

import csv
import json
import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from typing import Iterable, Sequence

import numpy as np

from .core import (
    CellField, DiagnosticsRecord, ModelParams, RadialGrid, _as_values, lp_norm,
    quasi_norm, volume_integral,
)
from .elliptic import dirichlet_sum, grad_linf, solve_poisson
from .energy import liapunov


def compute_diagnostics(u, t: float, dt: float, params: ModelParams, grid: RadialGrid,
                        sol=None) -> DiagnosticsRecord:
    v = _as_values(u, grid)
    if sol is None:
        sol = solve_poisson(v, grid)
    e = liapunov(v, sol, params, grid)
    return DiagnosticsRecord(
        t=float(t), dt=float(dt), mass=volume_integral(v, grid),
        l1=lp_norm(v, 1, grid), lm=lp_norm(v, params.m, grid), l2=lp_norm(v, 2, grid),
        linf=lp_norm(v, np.inf, grid), liapunov=e.total, entropy=e.entropy,
        dirichlet=e.dirichlet, coupling=e.coupling, min_u=float(v.min()),
        phi_grad_linf=grad_linf(sol),
    )


# ---------------------------------------------------------------------------
# blow-up


@dataclass(frozen=True)
class BlowupConfig:
    dt_min: float = 1e-10
    consecutive: int = 10
    growth: float = 1e3
    window: int = 5


@dataclass(frozen=True)
class BlowupVerdict:
    flagged: bool
    reason: str
    t_flag: float
    sup_history: tuple

    def __post_init__(self):
        if self.reason not in ("dt_collapse", "sup_growth", "none"):
            raise ValueError(f"unknown reason {self.reason!r}")
        if self.flagged != (self.reason != "none"):
            raise ValueError("flagged must agree with reason")


class BlowupMonitor:
    """Incremental detector fed once per step (or per batch of steps).

    dt_collapse: ``consecutive`` steps in a row taken at the dt floor.
    sup_growth: sup norm above ``growth`` times its first value and strictly
    increasing over the last ``window`` updates.
    """

    def __init__(self, cfg: BlowupConfig = BlowupConfig()):
        if cfg.consecutive < 1 or cfg.window < 2 or not cfg.growth > 1:
            raise ValueError("invalid blow-up configuration")
        self.cfg = cfg
        self.linf0: float | None = None
        self.streak = 0
        self.recent: deque = deque(maxlen=cfg.window)
        self.history: list[float] = []
        self._verdict: BlowupVerdict | None = None

    @property
    def flagged(self) -> bool:
        return self._verdict is not None

    def update(self, t: float, dt: float, linf: float, floor_hit: bool, steps: int = 1):
        """Account for ``steps`` steps ending at time t; only the last may be a floor step."""
        if self._verdict is not None:
            return self._verdict
        if floor_hit or dt <= self.cfg.dt_min:
            self.streak = 1 if steps > 1 else self.streak + 1
        else:
            self.streak = 0
        if self.streak >= self.cfg.consecutive:
            self._push(linf)
            self._verdict = BlowupVerdict(True, "dt_collapse", float(t), tuple(self.history))
            return self._verdict
        return self.sample(t, linf)

    def sample(self, t: float, linf: float):
        """Record a sup-norm value without touching the floor streak."""
        if self._verdict is not None:
            return self._verdict
        self._push(linf)
        r = list(self.recent)
        if (self.linf0 > 0 and linf > self.cfg.growth * self.linf0
                and len(r) == self.recent.maxlen and all(b > a for a, b in zip(r, r[1:]))):
            self._verdict = BlowupVerdict(True, "sup_growth", float(t), tuple(self.history))
        return self._verdict

    def _push(self, linf):
        if self.linf0 is None:
            self.linf0 = float(linf)
        self.history.append(float(linf))
        self.recent.append(float(linf))

    def verdict(self) -> BlowupVerdict:
        if self._verdict is not None:
            return self._verdict
        return BlowupVerdict(False, "none", math.nan, tuple(self.history))


def blowup_detector(history: Sequence[DiagnosticsRecord], cfg: BlowupConfig = BlowupConfig()) -> BlowupVerdict:
    """Replay a recorded series through the monitor (each record counts as one step)."""
    if len(history) == 0:
        raise ValueError("empty history")
    mon = BlowupMonitor(cfg)
    for rec in history:
        floor = rec.dt <= cfg.dt_min * (1.0 + 1e-12)
        v = mon.update(rec.t, rec.dt, rec.linf, floor)
        if v is not None:
            return v
    return mon.verdict()


# ---------------------------------------------------------------------------
# dual distance and Gronwall growth


class MassMismatch(ValueError):
    pass


def dual_distance(u1, u2, grid: RadialGrid, rtol: float = 1e-9) -> float:
    """||grad psi||_2 with -Lap psi = u1 - u2, Neumann, zero mean."""
    a = _as_values(u1, grid)
    b = _as_values(u2, grid)
    m1, m2 = volume_integral(a, grid), volume_integral(b, grid)
    if abs(m1 - m2) > rtol * max(abs(m1), abs(m2), np.finfo(float).tiny):
        raise MassMismatch(f"masses differ: {m1!r} vs {m2!r}")
    sol = solve_poisson(a - b, grid)
    return math.sqrt(dirichlet_sum(sol.face_gradient, grid))


@dataclass(frozen=True)
class GronwallReport:
    times: tuple
    distances: tuple
    exact_coincidence: bool
    fitted_slope: float
    max_slope: float
    bound: float
    passed: bool


def gronwall_check(times: Sequence[float], states1: Sequence, states2: Sequence,
                   grid: RadialGrid, bound: float = math.inf, mass_rtol: float = 1e-9) -> GronwallReport:
    """Growth of the dual distance between two runs sampled at common times.

    The least-squares slope of log d(t) is reported with the largest forward
    difference slope; the check passes when the latter is finite and <= bound.
    """
    if not (len(times) == len(states1) == len(states2)) or len(times) < 2:
        raise ValueError("need at least two paired samples")
    t = np.asarray(times, dtype=float)
    if np.any(np.diff(t) <= 0):
        raise ValueError("sample times must increase")
    d = np.array([dual_distance(a, b, grid, mass_rtol) for a, b in zip(states1, states2)])
    if np.all(d == 0):
        return GronwallReport(tuple(t), tuple(d), True, 0.0, 0.0, bound, True)
    if np.any(d == 0):
        raise ValueError("distance vanishes at some but not all samples")
    ld = np.log(d)
    fitted = float(np.polyfit(t, ld, 1)[0])
    fwd = np.diff(ld) / np.diff(t)
    mx = float(fwd.max())
    return GronwallReport(tuple(t), tuple(d), False, fitted, mx, bound,
                          bool(np.isfinite(mx) and mx <= bound))


# ---------------------------------------------------------------------------
# exponents


def _exact(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    fr = Fraction(x)
    near = fr.limit_denominator(10**6)
    # recover 4/3, 8/5, ... from their float images
    return near if float(near) == float(x) else fr


def gn_theta(q1, q2, N) -> float:
    """Interpolation exponent 2N(q2-q1) / (q2 ((N+2) q1 + 2N(1-q1)))."""
    a, b, n = _exact(q1), _exact(q2), _exact(N)
    if n < 3:
        raise ValueError("N must be >= 3")
    if not 0 < a <= b:
        raise ValueError(f"need 0 < q1 <= q2, got q1={q1!r}, q2={q2!r}")
    if b > 2 * n / (n - 2):
        raise ValueError(f"q2 exceeds the Sobolev exponent 2N/(N-2)")
    theta = 2 * n * (b - a) / (b * ((n + 2) * a + 2 * n * (1 - a)))
    if not 0 <= theta <= 1:
        raise ArithmeticError(f"theta {theta} outside [0, 1]")
    return float(theta)


def app_theta(r, m, N) -> float:
    """3N(r+m-1) / ((3N+2) r + 4N(m-1)), for r >= 4."""
    rr, mm, n = _exact(r), _exact(m), _exact(N)
    if rr < 4:
        raise ValueError(f"need r >= 4, got {r!r}")
    if n < 3:
        raise ValueError("N must be >= 3")
    theta = 3 * n * (rr + mm - 1) / ((3 * n + 2) * rr + 4 * n * (mm - 1))
    if not 0 < theta < 1:
        raise ArithmeticError(f"theta {theta} outside (0, 1)")
    if theta > Fraction(3) * n / (3 * n + 2):
        raise ArithmeticError(f"theta {theta} above 3N/(3N+2)")
    return float(theta)


# ---------------------------------------------------------------------------
# inequality audits


def grad_norm_sq(f, grid: RadialGrid) -> float:
    """sum_f A_f h_f ((f_{i+1}-f_i)/h_f)^2, same quadrature as the Dirichlet term."""
    v = _as_values(f, grid)
    n = grid.cell_count
    h = grid.center_spacing[1:n]
    d = np.diff(v) / h
    return dirichlet_sum(np.concatenate(([0.0], d, [0.0])), grid)


def h1_norm(f, grid: RadialGrid) -> float:
    v = _as_values(f, grid)
    return math.sqrt(grad_norm_sq(v, grid) + float(grid.cell_volumes @ (v * v)))


@dataclass(frozen=True)
class InequalityAuditRecord:
    inequality: str
    sample_id: int
    theta: float
    lhs: float
    rhs: float
    ratio: float
    passed: bool

    CSV_FIELDS = ("id", "theta", "lhs", "rhs", "ratio", "pass")

    def as_row(self):
        return [self.sample_id, repr(self.theta), repr(self.lhs), repr(self.rhs),
                repr(self.ratio), int(self.passed)]


AUDIT_RTOL = 1e-9


def gn_key(q1, q2, grid: RadialGrid) -> str:
    return f"gn:N={grid.dimension}:q1={float(q1)!r}:q2={float(q2)!r}:n={grid.cell_count}:R={grid.radius!r}"


def poincare_key(q1, grid: RadialGrid) -> str:
    return f"poincare:N={grid.dimension}:q1={float(q1)!r}:n={grid.cell_count}:R={grid.radius!r}"


def _gn_raw(v, q1, q2, theta, grid):
    lhs = lp_norm(v, q2, grid)
    base = h1_norm(v, grid) ** theta * quasi_norm(v, q1, grid) ** (1.0 - theta)
    return lhs, base


def _poincare_raw(v, q1, grid):
    lhs = h1_norm(v, grid) ** 2
    base = grad_norm_sq(v, grid) + quasi_norm(v, q1, grid) ** 2
    return lhs, base


def _check_gn_exponents(q1, q2, grid):
    if not (0 < q1 < q2):
        raise ValueError(f"audit needs 0 < q1 < q2, got ({q1!r}, {q2!r})")
    return gn_theta(q1, q2, grid.dimension)


def audit_gn(fields: Iterable, q1: float, q2: float, grid: RadialGrid,
             constant: float | None = None) -> list[InequalityAuditRecord]:
    """||u||_q2 <= C1^theta ||u||_H1^theta ||u||_q1^(1-theta) against the frozen C1."""
    theta = _check_gn_exponents(q1, q2, grid)
    c1 = constant if constant is not None else frozen_constant(gn_key(q1, q2, grid))
    factor = c1**theta
    out = []
    for i, f in enumerate(fields):
        v = _as_values(f, grid)
        lhs, base = _gn_raw(v, q1, q2, theta, grid)
        rhs = factor * base
        ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.inf)
        out.append(InequalityAuditRecord("gn", i, theta, lhs, rhs, ratio,
                                         lhs <= rhs * (1.0 + AUDIT_RTOL)))
    return out


def audit_poincare(fields: Iterable, q1: float, grid: RadialGrid,
                   constant: float | None = None) -> list[InequalityAuditRecord]:
    """||u||_H1^2 <= C2 (||grad u||_2^2 + ||u||_q1^2) against the frozen C2."""
    if not 0 < q1 <= 1:
        raise ValueError(f"need 0 < q1 <= 1, got {q1!r}")
    c2 = constant if constant is not None else frozen_constant(poincare_key(q1, grid))
    out = []
    for i, f in enumerate(fields):
        v = _as_values(f, grid)
        lhs, base = _poincare_raw(v, q1, grid)
        rhs = c2 * base
        ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.inf)
        out.append(InequalityAuditRecord("poincare", i, math.nan, lhs, rhs, ratio,
                                         lhs <= rhs * (1.0 + AUDIT_RTOL)))
    return out


def calibrate_gn(fields: Iterable, q1, q2, grid: RadialGrid) -> float:
    """Smallest C1 making every sample pass: (max lhs/base)^(1/theta)."""
    theta = _check_gn_exponents(q1, q2, grid)
    worst = 0.0
    for f in fields:
        lhs, base = _gn_raw(_as_values(f, grid), q1, q2, theta, grid)
        if base > 0:
            worst = max(worst, lhs / base)
    return worst ** (1.0 / theta)


def calibrate_poincare(fields: Iterable, q1, grid: RadialGrid) -> float:
    worst = 0.0
    for f in fields:
        lhs, base = _poincare_raw(_as_values(f, grid), q1, grid)
        if base > 0:
            worst = max(worst, lhs / base)
    return worst


def reference_corpus(grid: RadialGrid, count: int = 1000, seed: int = 0) -> list[np.ndarray]:
    """Random smooth radial fields: sums of Gaussians, cosines and constants.

    Signs and scales vary so both nearly constant and sharply peaked shapes
    appear. Deterministic in ``seed``.
    """
    rng = np.random.default_rng(seed)
    r = grid.centers / grid.radius
    out = []
    for _ in range(count):
        f = np.full_like(r, rng.normal())
        for _ in range(rng.integers(1, 5)):
            kind = rng.integers(3)
            amp = rng.normal() * 10.0 ** rng.uniform(-1, 1)
            if kind == 0:
                w = 10.0 ** rng.uniform(-1.5, 0)
                f += amp * np.exp(-((r - rng.uniform(0, 1)) ** 2) / (2 * w * w))
            elif kind == 1:
                f += amp * np.cos(math.pi * rng.integers(1, 8) * r)
            else:
                f += amp * r ** rng.uniform(1, 4)
        out.append(f)
    return out


DEFAULT_AUDITS = {
    "gn": [(1.0, 2.0), (1.0, 4.0), (2.0, 6.0), (1.5, 3.0)],
    "poincare": [0.5, 1.0],
}


def calibrate_defaults(grid: RadialGrid, count: int = 1000, seed: int = 0) -> dict:
    corpus = reference_corpus(grid, count, seed)
    consts = {}
    for q1, q2 in DEFAULT_AUDITS["gn"]:
        consts[gn_key(q1, q2, grid)] = calibrate_gn(corpus, q1, q2, grid)
    for q1 in DEFAULT_AUDITS["poincare"]:
        consts[poincare_key(q1, grid)] = calibrate_poincare(corpus, q1, grid)
    return {"corpus": {"N": grid.dimension, "R": grid.radius, "n": grid.cell_count,
                       "count": count, "seed": seed},
            "constants": consts}


_FROZEN: dict | None = None


def load_frozen() -> dict:
    global _FROZEN
    if _FROZEN is None:
        text = resources.files("kscrit").joinpath("data/audit_constants.json").read_text()
        _FROZEN = json.loads(text)
    return _FROZEN


def frozen_constant(key: str) -> float:
    consts = load_frozen()["constants"]
    if key not in consts:
        raise KeyError(f"no frozen audit constant for {key}; pass one explicitly")
    return float(consts[key])


def frozen_corpus_grid() -> RadialGrid:
    from .core import make_uniform_grid
    c = load_frozen()["corpus"]
    return make_uniform_grid(c["N"], c["R"], c["n"])


def write_audit_csv(records: Sequence[InequalityAuditRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(InequalityAuditRecord.CSV_FIELDS)
        for rec in records:
            w.writerow(rec.as_row())


# ---------------------------------------------------------------------------
# dissipation


@dataclass(frozen=True)
class DissipationReport:
    violations: tuple
    total_decrease: float
    worst_excess: float
    passed: bool


def check_dissipation(series: Sequence[DiagnosticsRecord], rtol: float = 1e-6) -> DissipationReport:
    """L(t2) <= L(t1) + rtol (1 + |L(t1)|)(t2 - t1) between consecutive samples."""
    if len(series) < 2:
        return DissipationReport((), 0.0, 0.0, True)
    bad = []
    worst = -math.inf
    for a, b in zip(series, series[1:]):
        allow = rtol * (1.0 + abs(a.liapunov)) * (b.t - a.t)
        excess = (b.liapunov - a.liapunov) - allow
        worst = max(worst, excess)
        if excess > 0:
            bad.append((a.t, b.t, b.liapunov - a.liapunov))
    dec = series[0].liapunov - series[-1].liapunov
    return DissipationReport(tuple(bad), dec, worst, not bad)


def sup_ratio(series: Sequence[DiagnosticsRecord]) -> float:
    """max_t ||u(t)||_inf / ||u(0)||_inf over a recorded series."""
    return max(r.linf for r in series) / series[0].linf


__all__ = [
    "compute_diagnostics", "BlowupConfig", "BlowupVerdict", "BlowupMonitor", "blowup_detector",
    "dual_distance", "MassMismatch", "GronwallReport", "gronwall_check", "gn_theta", "app_theta",
    "h1_norm", "grad_norm_sq", "InequalityAuditRecord", "audit_gn", "audit_poincare",
    "calibrate_gn", "calibrate_poincare", "reference_corpus", "calibrate_defaults",
    "frozen_constant", "write_audit_csv", "check_dissipation", "DissipationReport", "sup_ratio",
]

"""Free energy of the regularized system and the critical-mass threshold.

The entropy density is

    b_delta(u) = int_1^u int_1^z m (s + delta)^{m-1} / s  ds dz,

normalized so that b_delta(1) = b_delta'(1) = 0. The inner integral
K(z) = b_delta'(z) is computed by adaptive quadrature and the outer one is
integrated by parts exactly: int_1^u K = u K(u) - ((u+delta)^m - (1+delta)^m).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from .core import ModelParams, RadialGrid, _as_values, ball_volume, critical_exponent
from .elliptic import PoissonSolution, dirichlet_sum, solve_poisson

QUAD_EPSABS = 1e-12
QUAD_EPSREL = 1e-13


def _check_exponent(m: float):
    if not m > 1.0:
        raise ValueError(f"entropy density needs m > 1, got {m!r}")


def _quad_K(z: float, delta: float, m: float) -> float:
    upper = math.log(z)
    pts = None
    if delta > 0:
        # the integrand bends near tau = log(delta); tell quad where
        knee = math.log(delta)
        if min(0.0, upper) < knee < max(0.0, upper):
            pts = [knee]
    val, _ = integrate.quad(
        lambda tau: m * (math.exp(tau) + delta) ** (m - 1.0),
        0.0, upper, points=pts, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=200,
    )
    return val


@lru_cache(maxsize=65536)
def inner_antiderivative(z: float, delta: float, m: float, quadrature: bool = False) -> float:
    """K(z) = int_1^z m (s+delta)^{m-1}/s ds, for z > 0.

    Substituting s = e^tau turns the integrand into m (e^tau + delta)^{m-1},
    which is smooth and bounded on the whole range, including z -> 0.
    With ``quadrature`` set the delta = 0 shortcut is skipped.
    """
    if not z > 0:
        raise ValueError("inner antiderivative is only defined for z > 0")
    if z == 1.0:
        return 0.0
    if delta == 0.0 and not quadrature:
        return m * (z ** (m - 1.0) - 1.0) / (m - 1.0)
    return _quad_K(z, delta, m)


def b_delta(u: float, delta: float, m: float, quadrature: bool = False) -> float:
    """Entropy density b_delta(u) for scalar u >= 0.

    ``quadrature=True`` forces numerical integration even at delta = 0.
    """
    _check_exponent(m)
    if not u >= 0:
        raise ValueError(f"entropy density needs u >= 0, got {u!r}")
    if not delta >= 0:
        raise ValueError(f"delta must be nonnegative, got {delta!r}")
    u = float(u)
    delta = float(delta)
    tail = (u + delta) ** m - (1.0 + delta) ** m
    if u == 0.0:
        # u K(u) -> 0 as u -> 0 for every delta >= 0
        return -tail
    val = u * inner_antiderivative(u, delta, float(m), quadrature) - tail
    return max(val, 0.0)


def b_closed_form_delta0(u, m: float):
    """b_0(u) = u^m/(m-1) - m u/(m-1) + 1, exact when delta = 0."""
    u = np.asarray(u, dtype=float)
    return u**m / (m - 1.0) - m * u / (m - 1.0) + 1.0


def entropy_density(u, delta: float, m: float) -> np.ndarray:
    """Vectorized b_delta over an array of nonnegative values."""
    _check_exponent(m)
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise ValueError("entropy density needs u >= 0")
    if delta == 0.0:
        return np.maximum(b_closed_form_delta0(u, m), 0.0)
    out = np.empty_like(u)
    flat = u.ravel()
    uniq, inv = np.unique(flat, return_inverse=True)
    vals = np.array([b_delta(x, delta, m) for x in uniq])
    out.ravel()[:] = vals[inv]
    return out


def b_lower_bound(u, m: float):
    """u^m/(m-1) - m u/(m-1) + 1, valid for every delta >= 0."""
    return b_closed_form_delta0(u, m)


def b_upper_bound(u, m: float):
    """m (u ln u - u + 1) + m/(m-1) (u^m/m - u + 1), valid for delta in [0, 1)."""
    u = np.asarray(u, dtype=float)
    ulogu = np.where(u > 0, u * np.log(np.where(u > 0, u, 1.0)), 0.0)
    return m * (ulogu - u + 1.0) + m / (m - 1.0) * (u**m / m - u + 1.0)


@dataclass(frozen=True)
class EnergyBreakdown:
    entropy: float
    dirichlet: float
    coupling: float
    total: float

    @classmethod
    def from_terms(cls, entropy: float, dirichlet: float, coupling: float) -> "EnergyBreakdown":
        return cls(entropy, dirichlet, coupling, entropy + dirichlet + coupling)


def liapunov(u, sol: PoissonSolution | None, params: ModelParams, grid: RadialGrid) -> EnergyBreakdown:
    """L_delta(u, phi) = int b_delta(u) + 1/2 |grad phi|^2 - u phi.

    When ``sol`` is None the potential is recomputed from ``u``.
    """
    v = _as_values(u, grid)
    if sol is None:
        sol = solve_poisson(v, grid)
    elif sol.grid != grid:
        raise ValueError("potential lives on a different grid")
    vol = grid.cell_volumes
    ent = float(vol @ entropy_density(v, params.delta, params.m))
    dir_ = 0.5 * dirichlet_sum(sol.face_gradient, grid)
    coup = -float(vol @ (v * sol.phi.values))
    return EnergyBreakdown.from_terms(ent, dir_, coup)


def m_star(N: int, volume: float, c_s: float) -> float:
    """Critical mean mass (2 C_s^2 / ((m-1) |Omega|^{2/N}))^{N/2}."""
    m = critical_exponent(N)
    if not volume > 0 or not c_s > 0:
        raise ValueError("volume and Sobolev constant must be positive")
    return (2.0 * c_s**2 / ((m - 1.0) * volume ** (2.0 / N))) ** (N / 2.0)


class FormulaMismatch(ArithmeticError):
    pass


def omega_m(M: float, N: int, volume: float, c_s: float, rtol: float = 1e-12) -> float:
    """Coercivity gap 1/(m-1) - C_s^{-2}/2 (M |Omega|)^{2/N}.

    Evaluated in both algebraic forms; disagreement beyond ``rtol`` (relative
    to the size of the terms) raises FormulaMismatch.
    """
    if M < 0:
        raise ValueError("mass must be nonnegative")
    m = critical_exponent(N)
    first = 1.0 / (m - 1.0)
    second = c_s ** (-2.0) / 2.0 * M ** (2.0 / N) * volume ** (2.0 / N)
    direct = first - second
    ms = m_star(N, volume, c_s)
    factor = volume ** (2.0 / N) / (2.0 * c_s**2)
    gap_form = factor * (ms ** (2.0 / N) - M ** (2.0 / N))
    scale = max(abs(first), abs(second), factor * ms ** (2.0 / N))
    if abs(direct - gap_form) > rtol * scale:
        raise FormulaMismatch(f"omega forms disagree: {direct!r} vs {gap_form!r}")
    return direct


# ---------------------------------------------------------------------------
# Sobolev constant of zero-mean radial fields


def sobolev_exponent(N: int) -> float:
    return 2.0 * N / (N - 2.0)


def rayleigh_quotient(phi, grid: RadialGrid) -> float:
    """||grad phi||_2 / ||phi||_{2*} for a zero-mean cell field."""
    v = _as_values(phi, grid)
    q = sobolev_exponent(grid.dimension)
    num = _grad_sq(v, grid)
    a = np.abs(v)
    s = a.max()
    if s == 0:
        raise ValueError("quotient undefined for the zero field")
    den = s * (grid.cell_volumes @ (a / s) ** q) ** (1.0 / q)
    return math.sqrt(num) / den


def _grad_sq(v: np.ndarray, grid: RadialGrid) -> float:
    n = grid.cell_count
    d = np.diff(v) / grid.center_spacing[1:n]
    return float(np.sum(grid.face_areas[1:n] * grid.center_spacing[1:n] * d * d))


@dataclass(frozen=True)
class SobolevEstimate:
    c_s: float
    best_per_trial: tuple
    running_best: tuple
    minimizer: np.ndarray
    trials: int
    iterations: int


def estimate_sobolev_constant(grid: RadialGrid, trials: int = 4, iterations: int = 300,
                              seed: int | None = 0) -> SobolevEstimate:
    """Minimize the discrete quotient over zero-mean radial fields.

    Projected gradient descent in the H^1 metric: the Riesz representative of
    the Euclidean gradient is one Neumann Poisson solve, which keeps every
    iterate in the zero-mean subspace. Each trial starts from a random
    smooth field; the result is an upper bound on the radial constant.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    rng = np.random.default_rng(seed)
    q = sobolev_exponent(grid.dimension)
    vol = grid.cell_volumes
    best = math.inf
    per_trial, running = [], []
    best_phi = None
    for _ in range(trials):
        phi = solve_poisson(rng.standard_normal(grid.cell_count), grid).phi.values.copy()
        phi, val = _descend(phi, grid, q, vol, iterations)
        per_trial.append(val)
        if val < best:
            best, best_phi = val, phi
        running.append(best)
    return SobolevEstimate(best, tuple(per_trial), tuple(running), best_phi, trials, iterations)


def _log_quotient(phi, grid, q, vol):
    num = _grad_sq(phi, grid)
    a = np.abs(phi)
    s = a.max()
    if s == 0 or num == 0:
        raise ValueError("degenerate iterate (zero field) in Sobolev estimation")
    pw = (a / s) ** q
    S = float(vol @ pw)
    val = 0.5 * math.log(num) - math.log(s) - math.log(S) / q
    return val, num, pw, S, s


def _descend(phi, grid, q, vol, iterations):
    phi = phi / np.abs(phi).max()
    f, num, pw, S, s = _log_quotient(phi, grid, q, vol)
    step = 0.5
    for _ in range(iterations):
        # Euclidean gradient of F = 1/2 log||grad phi||^2 - 1/q log sum V|phi|^q is
        # K phi / num - V |phi|^{q-2} phi / sum V |phi|^q; its H^1 representative:
        dens = np.sign(phi) * pw / (np.abs(phi) + (phi == 0)) / S
        direction = phi / num - solve_poisson(dens, grid).phi.values
        dnorm2 = float(direction @ _apply_K(direction, grid))
        if dnorm2 <= 1e-30:
            break
        slope = -dnorm2
        accepted = False
        while step > 1e-12:
            trial = phi - step * direction
            try:
                ft, numt, pwt, St, st = _log_quotient(trial, grid, q, vol)
            except ValueError:
                step *= 0.5
                continue
            if ft <= f + 1e-4 * step * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        phi = trial / st
        f, num, pw, S, s = _log_quotient(phi, grid, q, vol)
        step = min(step * 2.0, 1e3)
    return phi, math.exp(f)


def _apply_K(v, grid):
    """K v where v^T K v = sum_f A_f h_f ((v_{i+1}-v_i)/h_f)^2."""
    n = grid.cell_count
    flux = np.zeros(n + 1)
    flux[1:n] = grid.face_areas[1:n] * np.diff(v) / grid.center_spacing[1:n]
    return -(flux[1:] - flux[:-1])


@dataclass(frozen=True)
class ThresholdReport:
    c_s: float
    m_star: float
    omega: float
    subcritical: bool
    provenance: str
    mass: float

    def lines(self) -> list[str]:
        return [
            f"C_s = {self.c_s!r} ({self.provenance})",
            f"M* = {self.m_star!r}",
            f"M = {self.mass!r}",
            f"omega_M = {self.omega!r}",
            f"subcritical = {self.subcritical}",
        ]


def threshold_report(M: float, N: int, volume: float, c_s: float, provenance: str) -> ThresholdReport:
    ms = m_star(N, volume, c_s)
    om = omega_m(M, N, volume, c_s)
    return ThresholdReport(float(c_s), ms, om, bool(M < ms), provenance, float(M))


def coercivity_floor(u, params: ModelParams, grid: RadialGrid, c_s: float) -> float:
    """omega_M ||u||_m^m - m/(m-1) M |Omega|, the lower bound for L_delta when subcritical."""
    v = _as_values(u, grid)
    vol_ball = grid.discrete_volume
    M = float(grid.cell_volumes @ v) / vol_ball
    om = omega_m(M, params.dimension, vol_ball, c_s)
    lmm = float(grid.cell_volumes @ v**params.m)
    return om * lmm - params.m / (params.m - 1.0) * M * vol_ball


__all__ = [
    "EnergyBreakdown", "ThresholdReport", "SobolevEstimate", "FormulaMismatch",
    "b_delta", "entropy_density", "b_lower_bound", "b_upper_bound", "b_closed_form_delta0",
    "liapunov", "m_star", "omega_m", "estimate_sobolev_constant", "rayleigh_quotient",
    "threshold_report", "coercivity_floor", "ball_volume", "inner_antiderivative",
]

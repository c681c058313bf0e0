import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kscrit.core import ModelParams, make_uniform_grid
from kscrit.elliptic import solve_poisson
from kscrit.energy import (
    FormulaMismatch, b_closed_form_delta0, b_delta, b_lower_bound, b_upper_bound,
    coercivity_floor, entropy_density, estimate_sobolev_constant, liapunov, m_star, omega_m,
    rayleigh_quotient, threshold_report,
)

M43 = 4 / 3

# nested mpmath quadrature of the defining double integral at 30 digits
MPMATH_ORACLE = [
    ((0.3, 0.5, M43), 0.4819356839681528356),
    ((2.0, 1e-3, M43), 0.55967308440399211045),
    ((7.0, 0.5, 1.5), 18.943822733402474065),
    ((0.0, 0.2, M43), 1.1582295734906186437),
    ((50.0, 0.9, 1.6), 806.57368528422557075),
]


@pytest.mark.parametrize("args,expected", MPMATH_ORACLE)
def test_b_delta_against_double_integral(args, expected):
    assert b_delta(*args) == pytest.approx(expected, rel=1e-11, abs=1e-10)


def test_b_delta_normalization_point():
    for d in (0.0, 1e-6, 0.3, 0.99):
        assert b_delta(1.0, d, M43) == 0.0


def test_b_delta_closed_form_at_zero_delta():
    assert b_delta(8.0, 0.0, M43) == pytest.approx(17.0, rel=1e-14)
    assert b_delta(0.0, 0.0, M43) == pytest.approx(1.0, rel=1e-14)


def test_b_delta_errors():
    with pytest.raises(ValueError):
        b_delta(-1.0, 0.1, M43)
    with pytest.raises(ValueError):
        b_delta(1.0, 0.1, 1.0)


@given(u=st.floats(0, 100), m=st.sampled_from([4 / 3, 3 / 2, 8 / 5]))
def test_quadrature_matches_closed_form_at_delta0(u, m):
    # the general quadrature path with a vanishing delta against the exact formula
    val = b_delta(u, 0.0, m, quadrature=True)
    assert abs(val - float(b_closed_form_delta0(u, m))) <= 1e-9 * max(1.0, abs(val))
    assert abs(b_delta(u, 0.0, m) - float(b_closed_form_delta0(u, m))) <= 1e-9


@given(u=st.floats(0, 100), d=st.floats(0, 0.999), m=st.sampled_from([4 / 3, 3 / 2, 8 / 5]))
def test_b_delta_sandwich(u, d, m):
    b = b_delta(u, d, m)
    lo = float(b_lower_bound(u, m))
    assert b >= lo - 1e-10 * max(1.0, abs(lo))
    if u > 0:
        hi = float(b_upper_bound(u, m))
        assert b <= hi + 1e-10 * max(1.0, abs(hi))
    assert b >= 0.0


@given(u=st.floats(1.0001, 100), d1=st.floats(0, 0.99), d2=st.floats(0, 0.99))
def test_b_delta_monotone_in_delta_above_one(u, d1, d2):
    lo, hi = sorted((d1, d2))
    assert b_delta(u, lo, M43) <= b_delta(u, hi, M43) * (1 + 1e-12) + 1e-12


def test_entropy_density_vectorized():
    u = np.array([0.0, 0.5, 1.0, 2.0, 2.0, 8.0])
    e = entropy_density(u, 0.1, M43)
    np.testing.assert_allclose(e, [b_delta(x, 0.1, M43) for x in u], rtol=0, atol=0)
    e0 = entropy_density(u, 0.0, M43)
    assert e0[-1] == pytest.approx(17.0)


def test_liapunov_homogeneous_states():
    g = make_uniform_grid(3, 1.0, 50)
    p = ModelParams.from_dimension(3, 0.01, 1.0)
    e = liapunov(np.ones(50), None, p, g)
    assert e.total == 0.0 and e.dirichlet == 0.0 and e.coupling == 0.0
    c = 3.0
    e = liapunov(np.full(50, c), None, p, g)
    assert e.total == pytest.approx(g.discrete_volume * b_delta(c, 0.01, M43), rel=1e-13)
    assert e.total == e.entropy + e.dirichlet + e.coupling


def test_liapunov_grid_mismatch():
    g = make_uniform_grid(3, 1.0, 50)
    g2 = make_uniform_grid(3, 2.0, 50)
    p = ModelParams.from_dimension(3, 0.01, 1.0)
    with pytest.raises(ValueError):
        liapunov(np.ones(50), solve_poisson(np.ones(50), g2), p, g)


def test_liapunov_terms_agree_with_energy_identity():
    g = make_uniform_grid(3, 1.0, 80)
    p = ModelParams.from_dimension(3, 0.0, 1.0)
    r = g.centers
    u = 1 + np.exp(-r**2 / 0.05)
    sol = solve_poisson(u, g)
    e = liapunov(u, sol, p, g)
    # 1/2 |grad phi|^2 equals 1/2 int (u - M) phi = -1/2 coupling since <phi> = 0
    assert e.dirichlet == pytest.approx(-0.5 * e.coupling, rel=1e-10)


def test_m_star_hand_value():
    assert m_star(3, 4 * math.pi / 3, 1.0) == pytest.approx(6**1.5 / (4 * math.pi / 3), rel=1e-14)
    assert abs(m_star(3, 4 * math.pi / 3, 1.0) - 3.5086) < 1e-3


@given(cs=st.floats(0.01, 100), vol=st.floats(0.01, 1e3), N=st.sampled_from([3, 4, 5]))
def test_m_star_homogeneity(cs, vol, N):
    assert m_star(N, vol, 2 * cs) == pytest.approx(2**N * m_star(N, vol, cs), rel=1e-12)
    assert m_star(N, 2 * vol, cs) < m_star(N, vol, cs)


def test_m_star_errors():
    with pytest.raises(ValueError):
        m_star(3, 0.0, 1.0)
    with pytest.raises(ValueError):
        m_star(3, 1.0, -1.0)
    with pytest.raises(ValueError):
        m_star(2, 1.0, 1.0)


def test_omega_examples():
    vol = 4 * math.pi / 3
    ms = m_star(3, vol, 1.0)
    assert abs(omega_m(ms, 3, vol, 1.0)) <= 1e-12
    assert omega_m(0.0, 3, vol, 1.0) == pytest.approx(3.0, rel=1e-15)
    assert omega_m(0.5 * ms, 3, vol, 1.0) > 0
    assert omega_m(2 * ms, 3, vol, 1.0) < 0


@given(M=st.floats(0, 1e4), vol=st.floats(1e-2, 1e3), cs=st.floats(1e-2, 1e2), N=st.sampled_from([3, 4, 5, 6]))
def test_omega_forms_agree(M, vol, cs, N):
    omega_m(M, N, vol, cs)  # raises FormulaMismatch on disagreement


def test_threshold_report_consistency():
    vol = 4 * math.pi / 3
    for M in (0.5, 3.0, 3.6, 10.0):
        rep = threshold_report(M, 3, vol, 1.0, "test")
        assert rep.subcritical == (rep.omega > 0) == (M < rep.m_star)


def test_rayleigh_quotient_direct_quadrature():
    g = make_uniform_grid(3, 1.0, 200)
    r = g.centers
    vol = g.cell_volumes
    phi = r**2 - (vol @ r**2) / vol.sum()
    # independent evaluation by explicit loops
    num = 0.0
    for f in range(1, 200):
        h = r[f] - r[f - 1]
        num += g.face_areas[f] * h * ((phi[f] - phi[f - 1]) / h) ** 2
    den = sum(v * abs(x) ** 6 for v, x in zip(vol, phi)) ** (1 / 6)
    direct = math.sqrt(num) / den
    q = rayleigh_quotient(phi, g)
    assert abs(q - direct) <= 1e-8 * direct
    est = estimate_sobolev_constant(g, trials=2, iterations=200, seed=1)
    assert 0 < est.c_s <= q


def test_estimator_bookkeeping():
    g = make_uniform_grid(3, 1.0, 100)
    est = estimate_sobolev_constant(g, trials=4, iterations=100, seed=7)
    assert all(b <= a for a, b in zip(est.running_best, est.running_best[1:]))
    assert est.c_s == min(est.best_per_trial) == est.running_best[-1]
    assert abs(g.cell_volumes @ est.minimizer) <= 1e-9 * np.abs(est.minimizer).max() * g.discrete_volume
    assert rayleigh_quotient(est.minimizer, g) == pytest.approx(est.c_s, rel=1e-12)
    with pytest.raises(ValueError):
        estimate_sobolev_constant(g, trials=0)


def test_estimator_is_deterministic_in_seed():
    g = make_uniform_grid(3, 1.0, 60)
    a = estimate_sobolev_constant(g, 2, 50, seed=3).c_s
    b = estimate_sobolev_constant(g, 2, 50, seed=3).c_s
    assert a == b


def test_rayleigh_rejects_zero():
    g = make_uniform_grid(3, 1.0, 20)
    with pytest.raises(ValueError):
        rayleigh_quotient(np.zeros(20), g)


def test_coercivity_floor_below_energy():
    g = make_uniform_grid(3, 1.0, 120)
    cs = estimate_sobolev_constant(g, 2, 200, 0).c_s
    ms = m_star(3, g.discrete_volume, cs)
    r = g.centers
    for frac, w in ((0.2, 0.3), (0.5, 0.1), (0.9, 0.05)):
        M = frac * ms
        u = 1 + 20 * np.exp(-r**2 / (2 * w * w))
        u *= M / ((g.cell_volumes @ u) / g.discrete_volume)
        p = ModelParams.from_dimension(3, 1e-3, M)
        assert liapunov(u, None, p, g).total >= coercivity_floor(u, p, g, cs)

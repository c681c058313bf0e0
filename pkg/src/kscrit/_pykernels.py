"""Pure numpy implementation of the hot kernels.

Mirrors ``_ckernels.pyx`` operation for operation; used when the compiled
extension is unavailable or ``KSCRIT_PURE_PYTHON`` is set.

Array conventions (n cells, n+1 faces):
    vol[i]   cell volume
    area[f]  face area, area[0] == 0
    h[f]     centre-to-centre spacing across face f, inf on both boundary faces
"""
import numpy as np

OK, MAX_STEPS, FLOOR, NEGATIVE = 0, 1, 2, 3

_FOUR_THIRDS = 4.0 / 3.0


def pressure(x, m):
    """x**m with cheap special cases for N = 3 and N = 4."""
    if m == _FOUR_THIRDS:
        return x * np.cbrt(x)
    if m == 1.5:
        return x * np.sqrt(x)
    return np.power(x, m)


def poisson_gradient(src, vol, area):
    """Face gradients of the zero-mean Neumann solution of -Lap(phi) = src - <src>.

    Returns (g, mean). g[0] and g[n] are exactly zero.
    """
    src = np.asarray(src, dtype=float)
    n = vol.shape[0]
    q = np.cumsum(vol * src)
    cv = np.cumsum(vol)
    mean = q[-1] / cv[-1]
    g = np.zeros(n + 1)
    g[1:n] = -(q[:-1] - mean * cv[:-1]) / area[1:n]
    return g, mean


def potential_from_gradient(g, h, vol):
    n = vol.shape[0]
    phi = np.empty(n)
    phi[0] = 0.0
    phi[1:] = np.cumsum(h[1:n] * g[1:n])
    phi -= np.cumsum(vol * phi)[-1] / np.cumsum(vol)[-1]
    return phi


def face_flux(u, g, m, delta, h):
    """G_f = (p_{i+1} - p_i)/h_f - u_upwind * g_f, zero on both boundary faces."""
    n = u.shape[0]
    p = pressure(u + delta, m)
    w = g[1:n]
    up = np.where(w > 0, u[:-1], u[1:])
    G = np.zeros(n + 1)
    G[1:n] = (p[1:] - p[:-1]) * (1.0 / h[1:n]) - up * w
    return G


def stable_dt(u, g, vol, area, h, m, delta, safety, dt_min, dt_max):
    """CFL step. Returns (dt, floor_hit).

    safety * min(h^2 / (2 D), h / max|w|) with D = max m (u+delta)^{m-1}, further
    capped at 0.9 / (largest per-cell outflow rate) so the explicit update is
    a convex combination and cannot go negative.
    """
    n = u.shape[0]
    D = m * (u.max() + delta) ** (m - 1.0)
    hmin = h[1:n].min()
    wmax = np.abs(g[1:n]).max()
    cand = np.inf
    if D > 0:
        cand = hmin * hmin / (2.0 * D)
    if wmax > 0:
        cand = min(cand, hmin / wmax)
    cand *= safety
    k = area * (1.0 / h)
    rate = (D * (k[1:] + k[:-1]) + area[1:] * np.maximum(g[1:], 0.0)
            + area[:-1] * np.maximum(-g[:-1], 0.0)) * (1.0 / vol)
    rmax = rate.max()
    if rmax > 0:
        cand = min(cand, 0.9 / rmax)
    if cand < dt_min:
        return dt_min, True
    return min(cand, dt_max), False


def apply_flux(u, G, vol, area, dt):
    return u + dt * (area[1:] * G[1:] - area[:-1] * G[:-1]) * (1.0 / vol)


def advance(u, vol, area, h, m, delta, safety, dt_min, dt_max, t, t_target, max_steps, chi=1.0):
    """Take explicit steps from t toward t_target.

    ``chi`` scales the drift velocity (0 gives pure porous-medium diffusion).
    Returns (u, t, steps, status, last_dt, max_flux, clipped, floor_hit).
    Stops early after a step taken at the dt floor (status FLOOR) or when a
    CFL-respecting step produced a negative cell (status NEGATIVE, u is the
    offending pre-step state).
    """
    u = np.array(u, dtype=float)
    steps = 0
    last_dt = 0.0
    max_flux = 0.0
    clipped = False
    floor_hit = False
    status = OK
    while t < t_target:
        if steps >= max_steps:
            status = MAX_STEPS
            break
        g, _ = poisson_gradient(u, vol, area)
        if chi != 1.0:
            g *= chi
        dt, floor_hit = stable_dt(u, g, vol, area, h, m, delta, safety, dt_min, dt_max)
        landing = False
        if t + dt >= t_target:
            dt = t_target - t
            landing = True
        G = face_flux(u, g, m, delta, h)
        new = apply_flux(u, G, vol, area, dt)
        if np.any(new < 0.0):
            if not floor_hit:
                status = NEGATIVE
                break
            mass = np.cumsum(vol * u)[-1]
            new = np.maximum(new, 0.0)
            new *= mass / np.cumsum(vol * new)[-1]
            clipped = True
        u = new
        t = t_target if landing else t + dt
        steps += 1
        last_dt = dt
        max_flux = float(np.abs(G).max())
        if floor_hit:
            status = FLOOR
            break
    return u, float(t), steps, status, float(last_dt), max_flux, clipped, bool(floor_hit)

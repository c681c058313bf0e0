# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Same contract and arithmetic as ``_pykernels``."""
import numpy as np
from libc.math cimport pow, cbrt, sqrt, fabs, INFINITY
from libc.string cimport memcpy
from libc.stdint cimport uint64_t

cdef enum:
    OK = 0
    MAX_STEPS = 1
    FLOOR = 2
    NEGATIVE = 3

cdef double FOUR_THIRDS = 4.0 / 3.0


cdef inline double _cbrt(double x) noexcept nogil:
    # exponent-thirding seed (~3% error) and three Halley steps (~1 ulp);
    # branch-free so the pressure loop vectorizes, unlike libm cbrt
    cdef uint64_t b
    cdef double y, y3
    memcpy(&b, &x, 8)
    b = b // 3 + <uint64_t>0x2a9f7893782da1ce
    memcpy(&y, &b, 8)
    y3 = y * y * y
    y = y * ((y3 + 2.0 * x) / (2.0 * y3 + x))
    y3 = y * y * y
    y = y * ((y3 + 2.0 * x) / (2.0 * y3 + x))
    y3 = y * y * y
    y = y * ((y3 + 2.0 * x) / (2.0 * y3 + x))
    return y


cdef inline double _pressure(double x, double m) noexcept nogil:
    if m == FOUR_THIRDS:
        return x * cbrt(x)
    if m == 1.5:
        return x * sqrt(x)
    return pow(x, m)


cdef double _gradient(const double[::1] src, const double[::1] vol,
                      const double[::1] area, double[::1] g) noexcept nogil:
    cdef Py_ssize_t n = vol.shape[0]
    cdef Py_ssize_t i
    cdef double q = 0.0, cv = 0.0, mean
    # two sequential passes so the rounding matches numpy cumsum
    for i in range(n):
        q += vol[i] * src[i]
        cv += vol[i]
    mean = q / cv
    q = 0.0
    cv = 0.0
    g[0] = 0.0
    g[n] = 0.0
    for i in range(n - 1):
        q += vol[i] * src[i]
        cv += vol[i]
        g[i + 1] = -(q - mean * cv) / area[i + 1]
    return mean


cdef double _stable_dt(const double[::1] u, const double[::1] g, const double[::1] ivol,
                       const double[::1] area, const double[::1] k, double hmin,
                       double m, double delta, double safety, double dt_min, double dt_max,
                       bint* floor_hit) noexcept nogil:
    cdef Py_ssize_t n = u.shape[0]
    cdef Py_ssize_t i
    cdef double umax = u[0], wmax = 0.0, D, cand, rate, rmax = 0.0, gp, gm
    for i in range(1, n):
        if u[i] > umax:
            umax = u[i]
        if fabs(g[i]) > wmax:
            wmax = fabs(g[i])
    D = m * pow(umax + delta, m - 1.0)
    cand = INFINITY
    if D > 0:
        cand = hmin * hmin / (2.0 * D)
    if wmax > 0:
        if hmin / wmax < cand:
            cand = hmin / wmax
    cand *= safety
    for i in range(n):
        gp = g[i + 1] if g[i + 1] > 0 else 0.0
        gm = -g[i] if g[i] < 0 else 0.0
        rate = (D * (k[i + 1] + k[i]) + area[i + 1] * gp + area[i] * gm) * ivol[i]
        if rate > rmax:
            rmax = rate
    if rmax > 0:
        if 0.9 / rmax < cand:
            cand = 0.9 / rmax
    if cand < dt_min:
        floor_hit[0] = True
        return dt_min
    floor_hit[0] = False
    return cand if cand < dt_max else dt_max


cdef void _flux(const double[::1] u, const double[::1] g, double m, double delta,
                const double[::1] ih, double[::1] p, double[::1] G) noexcept nogil:
    cdef Py_ssize_t n = u.shape[0]
    cdef Py_ssize_t i
    cdef double w, up, x
    if m == FOUR_THIRDS:
        for i in range(n):
            x = u[i] + delta
            p[i] = x * _cbrt(x)
    else:
        for i in range(n):
            p[i] = _pressure(u[i] + delta, m)
    G[0] = 0.0
    G[n] = 0.0
    for i in range(n - 1):
        w = g[i + 1]
        up = u[i] if w > 0 else u[i + 1]
        G[i + 1] = (p[i + 1] - p[i]) * ih[i + 1] - up * w


cdef class _Geometry:
    cdef double[::1] vol, ivol, area, h, ih, k
    cdef double hmin

    def __init__(self, vol, area, h):
        self.vol = np.ascontiguousarray(vol, dtype=float).copy()
        self.area = np.ascontiguousarray(area, dtype=float).copy()
        self.h = np.ascontiguousarray(h, dtype=float).copy()
        ih = 1.0 / np.asarray(self.h)
        self.ih = ih
        self.ivol = 1.0 / np.asarray(self.vol)
        self.k = np.asarray(self.area) * ih
        self.hmin = float(np.asarray(self.h)[1:-1].min())


def poisson_gradient(src, vol, area):
    cdef const double[::1] s = np.ascontiguousarray(src, dtype=float)
    cdef const double[::1] v = np.ascontiguousarray(vol, dtype=float)
    cdef const double[::1] a = np.ascontiguousarray(area, dtype=float)
    g = np.empty(v.shape[0] + 1)
    cdef double[::1] gv = g
    mean = _gradient(s, v, a, gv)
    return g, mean


def potential_from_gradient(g, h, vol):
    cdef const double[::1] gv = np.ascontiguousarray(g, dtype=float)
    cdef const double[::1] hv = np.ascontiguousarray(h, dtype=float)
    cdef const double[::1] v = np.ascontiguousarray(vol, dtype=float)
    cdef Py_ssize_t n = v.shape[0]
    cdef Py_ssize_t i
    phi = np.empty(n)
    cdef double[::1] p = phi
    cdef double acc = 0.0, q = 0.0, cv = 0.0, mean
    p[0] = 0.0
    for i in range(1, n):
        acc += hv[i] * gv[i]
        p[i] = acc
    for i in range(n):
        q += v[i] * p[i]
        cv += v[i]
    mean = q / cv
    for i in range(n):
        p[i] -= mean
    return phi


def face_flux(u, g, double m, double delta, h):
    cdef const double[::1] uv = np.ascontiguousarray(u, dtype=float)
    cdef const double[::1] gv = np.ascontiguousarray(g, dtype=float)
    cdef const double[::1] ih = 1.0 / np.ascontiguousarray(h, dtype=float)
    cdef Py_ssize_t n = uv.shape[0]
    G = np.empty(n + 1)
    p = np.empty(n)
    cdef double[::1] Gv = G
    cdef double[::1] pv = p
    _flux(uv, gv, m, delta, ih, pv, Gv)
    return G


def stable_dt(u, g, vol, area, h, double m, double delta, double safety,
              double dt_min, double dt_max):
    cdef _Geometry geo = _Geometry(vol, area, h)
    cdef const double[::1] uv = np.ascontiguousarray(u, dtype=float)
    cdef const double[::1] gv = np.ascontiguousarray(g, dtype=float)
    cdef bint hit = False
    dt = _stable_dt(uv, gv, geo.ivol, geo.area, geo.k, geo.hmin, m, delta, safety,
                    dt_min, dt_max, &hit)
    return dt, bool(hit)


def apply_flux(u, G, vol, area, double dt):
    cdef const double[::1] uv = np.ascontiguousarray(u, dtype=float)
    cdef const double[::1] Gv = np.ascontiguousarray(G, dtype=float)
    cdef const double[::1] iv = 1.0 / np.ascontiguousarray(vol, dtype=float)
    cdef const double[::1] a = np.ascontiguousarray(area, dtype=float)
    cdef Py_ssize_t n = uv.shape[0]
    cdef Py_ssize_t i
    out = np.empty(n)
    cdef double[::1] o = out
    for i in range(n):
        o[i] = uv[i] + dt * (a[i + 1] * Gv[i + 1] - a[i] * Gv[i]) * iv[i]
    return out


def advance(u, vol, area, h, double m, double delta, double safety, double dt_min,
            double dt_max, double t, double t_target, long max_steps, double chi=1.0):
    cdef _Geometry geo = _Geometry(vol, area, h)
    cdef const double[::1] v = geo.vol
    cdef const double[::1] iv = geo.ivol
    cdef const double[::1] a = geo.area
    cdef double[::1] cur = np.array(u, dtype=float)
    cdef Py_ssize_t n = cur.shape[0]
    cdef Py_ssize_t i
    cdef double[::1] nxt = np.empty(n)
    cdef double[::1] g = np.empty(n + 1)
    cdef double[::1] G = np.empty(n + 1)
    cdef double[::1] p = np.empty(n)
    cdef double[::1] tmp
    cdef long steps = 0
    cdef int status = OK
    cdef double dt, last_dt = 0.0, max_flux = 0.0, mass, newmass, scale
    cdef bint floor_hit = False, clipped = False, landing, negative

    with nogil:
        while t < t_target:
            if steps >= max_steps:
                status = MAX_STEPS
                break
            _gradient(cur, v, a, g)
            if chi != 1.0:
                for i in range(n + 1):
                    g[i] *= chi
            dt = _stable_dt(cur, g, iv, a, geo.k, geo.hmin, m, delta, safety,
                            dt_min, dt_max, &floor_hit)
            landing = False
            if t + dt >= t_target:
                dt = t_target - t
                landing = True
            _flux(cur, g, m, delta, geo.ih, p, G)
            negative = False
            for i in range(n):
                nxt[i] = cur[i] + dt * (a[i + 1] * G[i + 1] - a[i] * G[i]) * iv[i]
                if nxt[i] < 0.0:
                    negative = True
            if negative:
                if not floor_hit:
                    status = NEGATIVE
                    break
                mass = 0.0
                newmass = 0.0
                for i in range(n):
                    mass += v[i] * cur[i]
                    if nxt[i] < 0.0:
                        nxt[i] = 0.0
                    newmass += v[i] * nxt[i]
                scale = mass / newmass
                for i in range(n):
                    nxt[i] *= scale
                clipped = True
            tmp = cur
            cur = nxt
            nxt = tmp
            if landing:
                t = t_target
            else:
                t = t + dt
            steps += 1
            last_dt = dt
            max_flux = 0.0
            for i in range(n + 1):
                if fabs(G[i]) > max_flux:
                    max_flux = fabs(G[i])
            if floor_hit:
                status = FLOOR
                break

    return (np.asarray(cur).copy(), t, steps, status, last_dt, max_flux,
            bool(clipped), bool(floor_hit))

"""Compiled hot loops: Heisenberg geodesic norms and non-local pair sums.

The pure-Python twin of this module is ``_kernels_fallback``; both expose the
same functions and must stay numerically interchangeable (agreement is
covered by the kernel test module).
"""

from libc.math cimport M_PI, cos, fabs, pow, sin, sqrt

import numpy as np


cdef double _mu(double psi) noexcept nogil:
    # psi/sin^2(psi) - cot(psi), strictly increasing on (0, pi)
    cdef double s = sin(psi)
    return (psi - s * cos(psi)) / (s * s)


cdef double _mu_prime(double psi) noexcept nogil:
    cdef double s = sin(psi)
    return 2.0 * (s - psi * cos(psi)) / (s * s * s)


cdef double _cc_norm_rt(double r, double tau, double tol, int max_iter) noexcept nogil:
    """Distance from the identity to a point at planar radius r, height tau >= 0."""
    cdef double mhat, lo, hi, mid, target, psi, val, step, nxt
    cdef int i
    if tau <= 0.0:
        return r
    if r <= 0.0:
        return 2.0 * sqrt(M_PI * tau)
    mhat = tau / (r * r)
    if mhat < 1e-8:
        # nearly horizontal: d = r within 1e-15 relative
        return r
    if mhat > 1e14:
        # nearly vertical: d = 2 sqrt(pi tau) within 1e-14 relative
        return 2.0 * sqrt(M_PI * tau)
    target = 4.0 * mhat
    lo = 1e-9
    hi = M_PI * (1.0 - 1e-12)
    for i in range(100):
        mid = 0.5 * (lo + hi)
        if _mu(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-6:
            break
    # safeguarded Newton polish inside the surviving bracket
    psi = 0.5 * (lo + hi)
    for i in range(max_iter):
        val = _mu(psi) - target
        if val < 0.0:
            lo = psi
        else:
            hi = psi
        nxt = psi - val / _mu_prime(psi)
        if nxt <= lo or nxt >= hi:
            nxt = 0.5 * (lo + hi)
        if fabs(nxt - psi) < tol:
            psi = nxt
            break
        psi = nxt
    if tau >= r * r:
        return 2.0 * psi * sqrt(tau / (psi - sin(psi) * cos(psi)))
    return psi * r / sin(psi)


def h1_cc_norm(double[::1] x, double[::1] y, double[::1] t,
               double tol=1e-10, int max_iter=100):
    """Carnot-Caratheodory norm of Heisenberg points given by coordinate columns."""
    cdef Py_ssize_t n = x.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            ov[i] = _cc_norm_rt(sqrt(x[i] * x[i] + y[i] * y[i]), fabs(t[i]),
                                tol, max_iter)
    return out


def pairwise_h1_dist(double[:, ::1] a, double[:, ::1] b,
                     double tol=1e-10, int max_iter=100):
    """Matrix of distances d(a_i, b_j) = |b_j^{-1} a_i| between Heisenberg point sets."""
    cdef Py_ssize_t na = a.shape[0], nb = b.shape[0]
    out = np.empty((na, nb), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t i, j
    cdef double dx, dy, dt
    with nogil:
        for i in range(na):
            for j in range(nb):
                dx = a[i, 0] - b[j, 0]
                dy = a[i, 1] - b[j, 1]
                dt = a[i, 2] - b[j, 2] + 0.5 * (b[j, 1] * a[i, 0] - b[j, 0] * a[i, 1])
                ov[i, j] = _cc_norm_rt(sqrt(dx * dx + dy * dy), fabs(dt),
                                       tol, max_iter)
    return out


def pair_energy_coords(double[::1] f, double[:, ::1] coords, double[::1] haar,
                       double[::1] muw, double alpha, double inv_vol_c,
                       double growth_dim):
    """Non-local energy with the Euclidean metric computed on the fly.

    Returns sum over unordered pairs i<j of
    |f_i-f_j|^2 (haar_i muw_j + haar_j muw_i) / (vol_c d^(growth_dim+alpha)),
    i.e. the ordered-pair double sum with the diagonal excluded.  Uses Kahan
    compensation; sums of ~1e7 small kernel terms must not lose digits.
    """
    cdef Py_ssize_t n = f.shape[0], dim = coords.shape[1]
    cdef Py_ssize_t i, j, a
    cdef double acc = 0.0, comp = 0.0
    cdef double d2, d, df, term, yk, tk
    cdef double p = growth_dim + alpha
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                d2 = 0.0
                for a in range(dim):
                    d = coords[i, a] - coords[j, a]
                    d2 += d * d
                df = f[i] - f[j]
                if df == 0.0 or d2 == 0.0:
                    continue
                d = sqrt(d2)
                term = df * df * (haar[i] * muw[j] + haar[j] * muw[i]) \
                    * inv_vol_c * pow(d, -p)
                yk = term - comp
                tk = acc + yk
                comp = (tk - acc) - yk
                acc = tk
    return acc


def pair_energy_dist(double[::1] f, double[:, ::1] dist, double[::1] haar,
                     double[::1] muw, double alpha, double inv_vol_c,
                     double growth_dim):
    """Non-local energy with a precomputed pairwise distance matrix."""
    cdef Py_ssize_t n = f.shape[0]
    cdef Py_ssize_t i, j
    cdef double acc = 0.0, comp = 0.0
    cdef double d, df, term, yk, tk
    cdef double p = growth_dim + alpha
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                df = f[i] - f[j]
                d = dist[i, j]
                if df == 0.0 or d == 0.0:
                    continue
                term = df * df * (haar[i] * muw[j] + haar[j] * muw[i]) \
                    * inv_vol_c * pow(d, -p)
                yk = term - comp
                tk = acc + yk
                comp = (tk - acc) - yk
                acc = tk
    return acc

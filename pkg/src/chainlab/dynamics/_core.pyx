# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled integrator core: the hot inner loops of the chain dynamics.

Semantics and floating-point expression grouping deliberately mirror
_numpy_backend so both backends produce identical harmonic trajectories.
"""

from libc.math cimport sin, sqrt


cdef inline void _vprime(double* r, double* out, double sigma, int ukind, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i
    if ukind == 1 and sigma != 0.0:
        for i in range(n):
            out[i] = sigma * sin(r[i]) + r[i]
    else:
        for i in range(n):
            out[i] = r[i]


cdef inline void _noise_half(double* r, const double* z, double* kick,
                             double cdrift, double camp, double sigma, int ukind,
                             Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i, ip, im
    _vprime(r, kick, sigma, ukind, n)
    for i in range(n):
        ip = i + 1 if i + 1 < n else 0
        im = i - 1 if i > 0 else n - 1
        r[i] = r[i] + (cdrift * ((kick[ip] + kick[im]) - 2.0 * kick[i])
                       + camp * (z[im] - z[i]))


def strang_chunk(double[::1] p, double[::1] r, double[:, :, ::1] xi,
                 double dt, double nn, double beta, double gamma, double sigma,
                 int ukind, int conv, double[::1] kick):
    """Advance (p, r) in place by xi.shape[0] Strang steps.

    xi holds the per-step standard-normal bond increments, shape
    (nsteps, 2, n); a (nsteps, 2, 0) dummy is accepted when gamma == 0.
    """
    cdef Py_ssize_t nsteps = xi.shape[0]
    cdef Py_ssize_t n = p.shape[0]
    cdef double half = 0.5 * dt
    cdef double cdrift = half * (nn * beta * gamma * 0.5)
    cdef double camp = sqrt(nn * gamma * half)
    cdef double ckick = half * nn
    cdef double cmove = dt * nn
    cdef Py_ssize_t k, i, ip, im
    cdef double* pp = &p[0]
    cdef double* rr = &r[0]
    cdef double* kk = &kick[0]
    with nogil:
        for k in range(nsteps):
            if gamma != 0.0:
                _noise_half(rr, &xi[k, 0, 0], kk, cdrift, camp, sigma, ukind, n)
            _vprime(rr, kk, sigma, ukind, n)
            for i in range(n):
                ip = i + 1 if i + 1 < n else 0
                pp[i] = pp[i] + ckick * (kk[ip] - kk[i])
            if conv == 0:
                for i in range(n):
                    im = i - 1 if i > 0 else n - 1
                    rr[i] = rr[i] + cmove * (pp[i] - pp[im])
            else:
                for i in range(n):
                    ip = i + 1 if i + 1 < n else 0
                    rr[i] = rr[i] + cmove * (pp[ip] - pp[i])
            _vprime(rr, kk, sigma, ukind, n)
            for i in range(n):
                ip = i + 1 if i + 1 < n else 0
                pp[i] = pp[i] + ckick * (kk[ip] - kk[i])
            if gamma != 0.0:
                _noise_half(rr, &xi[k, 1, 0], kk, cdrift, camp, sigma, ukind, n)


def em_chunk(double[::1] p, double[::1] r, double[:, :, ::1] xi,
             double dt, double nn, double beta, double gamma, double sigma,
             int ukind, int conv, double[::1] kick):
    """Euler-Maruyama steps; only xi[:, 0, :] is consumed."""
    cdef Py_ssize_t nsteps = xi.shape[0]
    cdef Py_ssize_t n = p.shape[0]
    cdef double cp = dt * nn
    cdef double cdrift = dt * (nn * beta * gamma * 0.5)
    cdef double camp = sqrt(nn * gamma * dt)
    cdef Py_ssize_t k, i, ip, im
    cdef double tmp
    cdef double* pp = &p[0]
    cdef double* rr = &r[0]
    cdef double* kk = &kick[0]
    cdef const double* z
    with nogil:
        for k in range(nsteps):
            _vprime(rr, kk, sigma, ukind, n)
            if gamma != 0.0:
                z = &xi[k, 0, 0]
                for i in range(n):
                    ip = i + 1 if i + 1 < n else 0
                    im = i - 1 if i > 0 else n - 1
                    if conv == 0:
                        tmp = cp * (pp[i] - pp[im])
                    else:
                        tmp = cp * (pp[ip] - pp[i])
                    tmp = tmp + (cdrift * ((kk[ip] + kk[im]) - 2.0 * kk[i])
                                 + camp * (z[im] - z[i]))
                    rr[i] = rr[i] + tmp
            else:
                for i in range(n):
                    ip = i + 1 if i + 1 < n else 0
                    im = i - 1 if i > 0 else n - 1
                    if conv == 0:
                        rr[i] = rr[i] + cp * (pp[i] - pp[im])
                    else:
                        rr[i] = rr[i] + cp * (pp[ip] - pp[i])
            for i in range(n):
                ip = i + 1 if i + 1 < n else 0
                pp[i] = pp[i] + cp * (kk[ip] - kk[i])

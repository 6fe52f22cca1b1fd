"""Pure-NumPy integrator kernels (fallback when the compiled core is absent).

Both kernels advance (p, r) in place.  The expression grouping mirrors the
compiled core so that harmonic trajectories agree bitwise between backends;
anharmonic ones may differ in the last ulp through the libm sin.
"""

import numpy as np


def _vprime(r, sigma, ukind, out):
    if ukind == 1 and sigma != 0.0:
        np.sin(r, out=out)
        out *= sigma
        out += r
    else:
        out[:] = r
    return out


def strang_chunk(p, r, xi, dt, nn, beta, gamma, sigma, ukind, conv, kick):
    """Strang splitting: half noise / velocity-Verlet / half noise.

    xi has shape (nsteps, 2, n); when gamma == 0 a (nsteps, 2, 0) dummy
    is accepted since the noise passes are skipped.
    """
    nsteps = xi.shape[0]
    half = 0.5 * dt
    cdrift = half * (nn * beta * gamma * 0.5)
    camp = np.sqrt(nn * gamma * half)
    ckick = half * nn
    cmove = dt * nn

    def noise_half(rr, z):
        _vprime(rr, sigma, ukind, kick)
        rr += cdrift * ((np.roll(kick, -1) + np.roll(kick, 1)) - 2.0 * kick) + camp * (
            np.roll(z, 1) - z
        )

    for k in range(nsteps):
        if gamma != 0.0:
            noise_half(r, xi[k, 0])
        _vprime(r, sigma, ukind, kick)
        p += ckick * (np.roll(kick, -1) - kick)
        if conv == 0:
            r += cmove * (p - np.roll(p, 1))
        else:
            r += cmove * (np.roll(p, -1) - p)
        _vprime(r, sigma, ukind, kick)
        p += ckick * (np.roll(kick, -1) - kick)
        if gamma != 0.0:
            noise_half(r, xi[k, 1])


def em_chunk(p, r, xi, dt, nn, beta, gamma, sigma, ukind, conv, kick):
    """Euler-Maruyama on the full generator drift plus bond-difference noise."""
    nsteps = xi.shape[0]
    cp = dt * nn
    cdrift = dt * (nn * beta * gamma * 0.5)
    camp = np.sqrt(nn * gamma * dt)
    for k in range(nsteps):
        _vprime(r, sigma, ukind, kick)
        if conv == 0:
            dr = cp * (p - np.roll(p, 1))
        else:
            dr = cp * (np.roll(p, -1) - p)
        if gamma != 0.0:
            z = xi[k, 0]
            dr += cdrift * ((np.roll(kick, -1) + np.roll(kick, 1)) - 2.0 * kick) + camp * (
                np.roll(z, 1) - z
            )
        p += cp * (np.roll(kick, -1) - kick)
        r += dr

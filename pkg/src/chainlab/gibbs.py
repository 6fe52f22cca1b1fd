"""Exact sampling from the one-site and product Gibbs measures, and
frequency-domain densities of block means used as conditioning oracles.

The one-site sampler is exact rejection (no MCMC): since U(0) = U'(0) = 0
and |U''| <= 1 force |U(r)| <= r^2/2, the Gaussian with precision
beta*(1 - sigma) and mean tau/(1 - sigma) dominates the tilted measure and
the acceptance probability is exp(-beta*sigma*(U(r) + r^2/2)) <= 1.

Block-mean densities are built by multiplying per-site characteristic
functions (each a quadrature) on an FFT-conjugate frequency grid and
inverting; the same characteristic-function machinery feeds the local-CLT
expansion checks in chainlab.verify.
"""

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ConditioningError, ConfigError, ResolutionError, SamplerStuckError
from .potentials import Potential
from .thermo import DEFAULT_TAU_MAX, _gh_rule, site_char_function, site_stats

MAX_REJECTIONS = 1_000_000

# Gauss-Hermite resolves oscillation frequencies s*sqrt(2/beta) up to ~48 at
# order 512; the characteristic functions here are below 1e-70 by 30, so
# frequencies past that cutoff are set to zero instead of integrated.
CF_OMEGA_CUT = 30.0


def masked_site_cf(pot, beta, sigma, tau, s, center=None, order=512):
    """Per-site characteristic function with the high-frequency mask applied."""
    s = np.asarray(s, dtype=float)
    out = np.zeros(s.shape, dtype=complex)
    mask = np.abs(s) * np.sqrt(2.0 / beta) <= CF_OMEGA_CUT
    if np.any(mask):
        out[mask] = site_char_function(pot, beta, sigma, tau, s[mask], center=center, order=order)
    return out


@dataclass(frozen=True)
class GibbsSpec:
    """Per-site means and tensions of a (local) product Gibbs measure."""

    beta: float
    sigma: float
    pbar_profile: np.ndarray
    tau_profile: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "pbar_profile", np.asarray(self.pbar_profile, dtype=float))
        object.__setattr__(self, "tau_profile", np.asarray(self.tau_profile, dtype=float))
        if self.pbar_profile.shape != self.tau_profile.shape:
            raise ConfigError("profile lengths differ")
        if np.any(np.abs(self.tau_profile) > DEFAULT_TAU_MAX):
            raise ConfigError("tension profile outside the tabulated range")

    @property
    def n(self):
        return self.pbar_profile.size


def acceptance_probability(pot, beta, sigma, r):
    """Rejection acceptance probability at proposal value r."""
    r = np.asarray(r, dtype=float)
    return np.exp(-beta * sigma * (pot.u(r) + 0.5 * r * r))


def sample_site(tau, sigma, beta, rng, pot, size=None):
    """Exact draws from pi_{tau,sigma}; tau may be an array (one draw each)."""
    if sigma >= 1.0:
        raise ConfigError("sigma must be < 1 for the Gaussian envelope")
    scalar = size is None and np.ndim(tau) == 0
    tau_arr = np.atleast_1d(np.asarray(tau, dtype=float))
    if size is not None:
        if np.ndim(tau) != 0:
            raise ConfigError("size is only valid with scalar tau")
        tau_arr = np.full(int(size), float(tau))
    out = np.empty(tau_arr.size)
    pending = np.arange(tau_arr.size)
    mean = tau_arr / (1.0 - sigma)
    sd = 1.0 / np.sqrt(beta * (1.0 - sigma))
    attempts = 0
    while pending.size:
        prop = mean[pending] + sd * rng.standard_normal(pending.size)
        if sigma == 0.0:
            accept = np.ones(pending.size, dtype=bool)
        else:
            accept = rng.random(pending.size) < acceptance_probability(pot, beta, sigma, prop)
        out[pending[accept]] = prop[accept]
        pending = pending[~accept]
        attempts += 1
        if attempts > MAX_REJECTIONS:
            raise SamplerStuckError(
                "rejection sampler exceeded 1e6 consecutive rejections; "
                "check the potential registration invariants"
            )
    return float(out[0]) if scalar else out.reshape(np.shape(tau) if size is None else (size,))


def sample_chain(spec: GibbsSpec, rng, pot: Potential):
    """Independent per-site draws p_i ~ N(pbar_i, 1/beta), r_i ~ pi_{tau_i,sigma}."""
    from .dynamics import ChainState

    n = spec.n
    p = spec.pbar_profile + rng.standard_normal(n) / np.sqrt(spec.beta)
    r = sample_site(spec.tau_profile, spec.sigma, spec.beta, rng, pot)
    return ChainState(n, p, r, t=0.0, rng=rng)


def site_density(pot, beta, sigma, tau, r):
    """Pointwise density of pi_{tau,sigma} (normalised by quadrature)."""
    log_z, _ = site_stats(pot, beta, sigma, tau, nmom=1)
    r = np.asarray(r, dtype=float)
    return np.exp(-beta * (0.5 * r * r + sigma * pot.u(r) - tau * r) - log_z)


def site_cdf_interpolant(pot, beta, sigma, tau, span_std=14.0, npts=8001):
    """CDF of pi_{tau,sigma} as a callable (trapezoid integral of the density)."""
    _, mean, var = site_stats(pot, beta, sigma, tau, nmom=2)
    sd = np.sqrt(var)
    x = np.linspace(mean - span_std * sd, mean + span_std * sd, npts)
    pdf = site_density(pot, beta, sigma, tau, x)
    cdf = np.concatenate([[0.0], np.cumsum((pdf[1:] + pdf[:-1]) * 0.5 * np.diff(x))])
    cdf /= cdf[-1]
    spline = CubicSpline(x, cdf)

    def F(q):
        q = np.asarray(q, dtype=float)
        return np.clip(spline(np.clip(q, x[0], x[-1])), 0.0, 1.0)

    return F


@dataclass
class MeanDensity:
    """Density of the block mean r_(n) on a uniform grid."""

    n: int
    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        du = np.diff(self.grid)
        if not np.allclose(du, du[0], rtol=1e-9):
            raise ConfigError("MeanDensity grid must be uniform")
        total = float(np.trapezoid(self.values, self.grid))
        if abs(total - 1.0) > 1e-6:
            raise ResolutionError(f"block-mean density normalisation off by {total - 1.0:.3g}")
        if np.min(self.values) < -1e-9:
            raise ResolutionError("block-mean density has significant negative values")
        self.values = np.maximum(self.values, 0.0)

    def interpolant(self):
        spline = CubicSpline(self.grid, self.values)
        lo, hi = self.grid[0], self.grid[-1]

        def f(u):
            u = np.asarray(u, dtype=float)
            inside = (u >= lo) & (u <= hi)
            out = np.zeros_like(u)
            out[inside] = np.maximum(spline(u[inside]), 0.0)
            return out if out.ndim else float(out)

        return f


def _auto_grid(mean, std, pad_std, points_per_std):
    half = pad_std * std
    m = int(2 ** np.ceil(np.log2(2 * pad_std * points_per_std)))
    return np.linspace(mean - half, mean + half, m, endpoint=False)


def density_of_mean(tau_vector, sigma, beta, pot, grid=None, pad_std=12.0, points_per_std=48,
                    cf_order=512):
    """Density of r_(n) = (1/n) sum r_j under the inhomogeneous product measure.

    Per-site characteristic functions are multiplied on the FFT-conjugate
    frequency grid of the target u-grid and inverted by a discrete Fourier
    transform.  The automatic grid pads 12 standard deviations of the block
    mean on each side, which keeps the periodisation (aliasing) error below
    1e-9 for these sub-Gaussian summands.
    """
    tau_vector = np.atleast_1d(np.asarray(tau_vector, dtype=float))
    n = tau_vector.size
    uniq, inverse = np.unique(tau_vector, return_inverse=True)
    counts = np.bincount(inverse, minlength=uniq.size)
    _, means, variances = site_stats(pot, beta, sigma, uniq, nmom=2)
    means = np.atleast_1d(means)
    variances = np.atleast_1d(variances)
    ubar = float(np.dot(counts, means)) / n
    std = float(np.sqrt(np.dot(counts, variances))) / n
    if grid is None:
        grid = _auto_grid(ubar, std, pad_std, points_per_std)
    grid = np.asarray(grid, dtype=float)
    m = grid.size
    du = grid[1] - grid[0]
    # FFT-conjugate frequencies; integer index l gives xi_l = 2*pi*l/(m*du).
    ell = np.fft.fftfreq(m) * m
    xi = 2.0 * np.pi * ell / (m * du)
    cf = np.ones(m, dtype=complex)
    for tau_u, cnt, mu in zip(uniq, counts, means):
        phi = masked_site_cf(pot, beta, sigma, float(tau_u), xi / n, center=float(mu),
                             order=cf_order)
        cf *= phi ** int(cnt)
    # Shift the centred mean onto the grid origin and invert.
    u0 = grid[0]
    cf_shifted = cf * np.exp(1j * xi * (ubar - u0))
    vals = np.real(np.fft.fft(cf_shifted)) / (m * du)
    return MeanDensity(n=n, grid=grid, values=vals)


def microcanonical_expect(F, tau_vector, sigma, beta, u, k, pot, order=128):
    """Conditional expectation <F | r_(n) = u> for F of the first k sites.

    Direct change-of-variables quadrature:
        <F|u> = n/(n-k) * f*((n*u - k*r_(k))/(n-k)) / f(u)
    integrated over the first k tilted site measures, with f and f* the
    block-mean densities of all n and of the last n-k sites.  k <= 2 only;
    these serve as oracles, so everything is quadrature, never MCMC.
    """
    tau_vector = np.asarray(tau_vector, dtype=float)
    n = tau_vector.size
    if k not in (1, 2):
        raise ConfigError("microcanonical expectations support k in {1, 2}")
    if n < k + 1:
        raise ConfigError("need n >= k + 1")
    dens_full = density_of_mean(tau_vector, sigma, beta, pot)
    dens_rest = density_of_mean(tau_vector[k:], sigma, beta, pot)
    f_full = dens_full.interpolant()
    f_rest = dens_rest.interpolant()
    fu = float(f_full(np.asarray([u]))[0])
    if fu < 1e-300:
        raise ConditioningError(f"conditioning point u={u} outside the support window")

    x, w = _gh_rule(order)
    c = np.sqrt(2.0 / beta)

    def site_nodes(tau):
        r = tau + c * x
        wt = w * np.exp(np.minimum(-beta * sigma * pot.u(r), 700.0))
        return r, wt / wt.sum()

    if k == 1:
        r1, w1 = site_nodes(tau_vector[0])
        arg = (n * u - r1) / (n - 1)
        val = np.dot(w1, f_rest(arg) * F(r1))
    else:
        r1, w1 = site_nodes(tau_vector[0])
        r2, w2 = site_nodes(tau_vector[1])
        R1, R2 = np.meshgrid(r1, r2, indexing="ij")
        W = np.outer(w1, w2)
        arg = (n * u - (R1 + R2)) / (n - 2)
        val = float(np.sum(W * f_rest(arg) * F(R1, R2)))
    return float(n / (n - k) * val / fu)

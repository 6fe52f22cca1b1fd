"""One-site thermodynamics of the anharmonic spring.

Everything here derives from the tilted one-site measure

    pi_{tau,sigma}(dr) = Z(tau)^(-1) exp{-beta(V(r) - tau*r)} dr,
    V(r) = r^2/2 + sigma*U(r),

whose normalisation Z, log-partition G = log(Z)/beta, mean stretch
rbar = G', tension (the inverse of rbar), free energy F (the Legendre
transform of G) and large-deviation rate I(tau, r) are all computed by
adaptive Gauss-Hermite quadrature recentred at the Gaussian mode:
substituting r = tau + s/sqrt(beta) turns the integrand into a bounded
perturbation of the standard Gaussian weight.  The quadrature order starts
at 64 and doubles until two successive evaluations agree to relative
1e-11; failure after four doublings raises QuadratureError.

A ThermoCurve tabulates the curve on a tau grid (default [-20, 20], 4001
nodes, cubic interpolation) for fast vectorised use by the PDE solvers,
while every scalar operation also offers direct, non-tabulated evaluation
for verification.
"""

import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import roots_hermite

from .errors import ConfigError, QuadratureError, RangeError
from .potentials import BUILTINS, KIND_USER, Potential

QUAD_ORDERS = (64, 128, 256, 512, 1024)
QUAD_RTOL = 1e-11

DEFAULT_TAU_MAX = 20.0
DEFAULT_TAU_NODES = 4001


@lru_cache(maxsize=None)
def _gh_rule(order):
    x, w = roots_hermite(order)
    return x, w


def _raw_sums(pot, beta, sigma, tau, order, nmom):
    """Gauss-Hermite sums S_k = sum w * damp * (r - tau)^k, k = 0..nmom.

    tau is a 1-d array; returns an (nmom+1, len(tau)) array.  The weights
    carry the Gaussian factor, so damp = exp(-beta*sigma*U) is the only
    non-polynomial part; it is clipped in log space to stay finite at
    nodes whose weight has already underflowed to zero.
    """
    x, w = _gh_rule(order)
    c = np.sqrt(2.0 / beta)
    dr = c * x  # displacement from the Gaussian mode
    r = tau[None, :] + dr[:, None]
    if sigma == 0.0:
        damp = np.ones_like(r)
    else:
        logdamp = -beta * sigma * pot.u(r)
        damp = np.exp(np.minimum(logdamp, 700.0))
    base = w[:, None] * damp
    out = np.empty((nmom + 1, tau.size))
    out[0] = base.sum(axis=0)
    if nmom >= 1:
        pw = base * dr[:, None]
        out[1] = pw.sum(axis=0)
        for k in range(2, nmom + 1):
            pw = pw * dr[:, None]
            out[k] = pw.sum(axis=0)
    return out


def _adaptive_sums(pot, beta, sigma, tau, nmom):
    """Double the quadrature order until all requested sums converge."""
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    prev = None
    for order in QUAD_ORDERS:
        cur = _raw_sums(pot, beta, sigma, tau, order, nmom)
        if prev is not None:
            scale = np.maximum(np.abs(cur), np.abs(cur[0]))  # S0 sets the scale
            if np.all(np.abs(cur - prev) <= QUAD_RTOL * scale):
                return cur
        prev = cur
    raise QuadratureError(
        f"partition-function quadrature not converged after {len(QUAD_ORDERS) - 1} doublings "
        f"(beta={beta}, sigma={sigma})"
    )


def site_stats(pot, beta, sigma, tau, nmom=2):
    """Moments of pi_{tau,sigma}: returns (log_z, mean, mu2[, mu3[, mu4]]).

    mu_k are central moments of r.  Vectorised over tau.
    """
    tau_arr = np.atleast_1d(np.asarray(tau, dtype=float))
    sums = _adaptive_sums(pot, beta, sigma, tau_arr, nmom)
    s0 = sums[0]
    if np.any(s0 <= 0) or not np.all(np.isfinite(s0)):
        raise QuadratureError("non-positive quadrature mass")
    log_z = 0.5 * beta * tau_arr ** 2 + 0.5 * np.log(2.0 / beta) + np.log(s0)
    m = [sums[k] / s0 for k in range(1, nmom + 1)]  # moments of r - tau
    mean = tau_arr + m[0]
    out = [log_z, mean]
    if nmom >= 2:
        mu2 = m[1] - m[0] ** 2
        out.append(mu2)
    if nmom >= 3:
        mu3 = m[2] - 3.0 * m[0] * m[1] + 2.0 * m[0] ** 3
        out.append(mu3)
    if nmom >= 4:
        mu4 = m[3] - 4.0 * m[0] * m[2] + 6.0 * m[0] ** 2 * m[1] - 3.0 * m[0] ** 4
        out.append(mu4)
    if np.ndim(tau) == 0:
        return tuple(float(v[0]) for v in out)
    return tuple(out)


def partition_function(pot, beta, sigma, tau):
    """Z(tau) by direct adaptive quadrature."""
    res = site_stats(pot, beta, sigma, tau, nmom=1)
    return np.exp(res[0])


def gibbs_potential_direct(pot, beta, sigma, tau):
    """G(tau) = log Z(tau) / beta."""
    return site_stats(pot, beta, sigma, tau, nmom=1)[0] / beta


def mean_stretch_direct(pot, beta, sigma, tau):
    """rbar(tau) = E[r] under pi_{tau,sigma} (quadrature expectation)."""
    return site_stats(pot, beta, sigma, tau, nmom=1)[1]


def site_expectation(pot, beta, sigma, tau, fn):
    """E[fn(r)] under pi_{tau,sigma} for a vectorised fn, adaptively."""
    c = np.sqrt(2.0 / beta)
    prev = None
    for order in QUAD_ORDERS:
        x, w = _gh_rule(order)
        r = tau + c * x
        if sigma == 0.0:
            damp = np.ones_like(r)
        else:
            damp = np.exp(np.minimum(-beta * sigma * pot.u(r), 700.0))
        base = w * damp
        s0 = base.sum()
        val = float((base * fn(r)).sum() / s0)
        if prev is not None and abs(val - prev) <= QUAD_RTOL * max(1.0, abs(val)):
            return val
        prev = val
    raise QuadratureError("site expectation quadrature not converged")


def site_char_function(pot, beta, sigma, tau, s, center=None, order=256):
    """E[exp(i*s*(r - center))] under pi_{tau,sigma}, vectorised over s."""
    x, w = _gh_rule(order)
    c = np.sqrt(2.0 / beta)
    r = tau + c * x
    if sigma == 0.0:
        base = w
    else:
        base = w * np.exp(np.minimum(-beta * sigma * pot.u(r), 700.0))
    s0 = base.sum()
    if center is None:
        center = float((base * r).sum() / s0)
    s = np.asarray(s, dtype=float)
    phase = np.exp(1j * np.outer(s, r - center))
    return phase @ (base / s0)


def tension_direct(pot, beta, sigma, r, tol=1e-12, max_iter=50):
    """Invert rbar by safeguarded Newton: returns tau with rbar(tau) = r.

    Newton from tau0 = r (exact at sigma = 0) with derivative
    rbar'(tau) = beta * Var(r); falls back to bisection on the monotone
    bracket whenever a Newton step leaves it.
    """
    r = float(r)
    tau = r
    lo, hi = None, None
    # Establish a sign-changing bracket around the root by expansion.
    d = 1.0 + 2.0 * sigma * (1.0 + abs(r))
    a, b = r - d, r + d
    for _ in range(60):
        fa = mean_stretch_direct(pot, beta, sigma, a) - r
        fb = mean_stretch_direct(pot, beta, sigma, b) - r
        if fa <= 0.0 <= fb:
            lo, hi = a, b
            break
        a, b = r - 2 * (r - a), r + 2 * (b - r)
    if lo is None:
        raise RangeError(f"could not bracket tension({r})")
    for _ in range(max_iter):
        _, mean, var = site_stats(pot, beta, sigma, tau, nmom=2)
        f = mean - r
        if abs(f) <= tol * max(1.0, abs(r)):
            return tau
        if f > 0:
            hi = min(hi, tau)
        else:
            lo = max(lo, tau)
        step = f / (beta * var)
        nxt = tau - step
        if not lo <= nxt <= hi:
            nxt = 0.5 * (lo + hi)
        tau = nxt
    return tau


def tension_derivatives_direct(pot, beta, sigma, r):
    """(tension, tension', tension'') at r by inverse-function calculus.

    tension' = 1/G''(t), tension'' = -G'''(t)/G''(t)^3 with every
    G-derivative a quadrature cumulant; avoids double finite differences.
    """
    tau = tension_direct(pot, beta, sigma, r)
    _, _, mu2, mu3 = site_stats(pot, beta, sigma, tau, nmom=3)
    g2 = beta * mu2
    g3 = beta ** 2 * mu3
    return tau, 1.0 / g2, -g3 / g2 ** 3


def free_energy_direct(pot, beta, sigma, r):
    tau = tension_direct(pot, beta, sigma, r)
    return tau * r - gibbs_potential_direct(pot, beta, sigma, tau)


class ThermoCurve:
    """Tabulated thermodynamic functions for one (beta, sigma) pair.

    Cubic interpolants over a uniform tau grid serve the vectorised fast
    paths (PDE coefficients, curve plots); precision-critical inversions go
    through the direct quadrature.  Immutable after construction and safe
    to share across workers.
    """

    def __init__(self, pot, beta, sigma, tau_grid, log_z, rbar, var, mu3):
        self.pot = pot
        self.beta = float(beta)
        self.sigma = float(sigma)
        self.tau_grid = tau_grid
        self.log_z_vals = log_z
        self.z_vals = np.exp(log_z)
        self.g_vals = log_z / beta
        self.rbar_vals = rbar
        self.var_vals = var
        self.mu3_vals = mu3
        self._validate()
        self._g_spline = CubicSpline(tau_grid, self.g_vals)
        self._rbar_spline = CubicSpline(tau_grid, rbar)
        # rbar is strictly increasing, so the swapped spline inverts it.
        self._tension_spline = CubicSpline(rbar, tau_grid)
        tprime = 1.0 / (beta * var)
        tsecond = -(beta ** 2 * mu3) / (beta * var) ** 3
        self._tprime_spline = CubicSpline(rbar, tprime)
        self._tsecond_spline = CubicSpline(rbar, tsecond)
        self.r_min = float(rbar[0])
        self.r_max = float(rbar[-1])

    @classmethod
    def build(cls, pot, beta, sigma, tau_max=DEFAULT_TAU_MAX, nodes=DEFAULT_TAU_NODES):
        tau_grid = np.linspace(-tau_max, tau_max, nodes)
        log_z, rbar, var, mu3 = site_stats(pot, beta, sigma, tau_grid, nmom=3)
        return cls(pot, beta, sigma, tau_grid, log_z, rbar, var, mu3)

    def _validate(self):
        if not np.all(np.isfinite(self.z_vals)) or np.any(self.z_vals <= 0):
            raise ConfigError("partition values must be finite and positive; shrink the tau range")
        d2g = np.diff(self.g_vals, 2)
        if not np.all(d2g > 0):
            raise ConfigError("Gibbs potential not strictly convex on the grid")
        if not np.all(np.diff(self.rbar_vals) > 0):
            raise ConfigError("mean stretch not strictly increasing on the grid")

    def _check_tau(self, tau):
        t = np.asarray(tau)
        if np.any(t < self.tau_grid[0]) or np.any(t > self.tau_grid[-1]):
            raise RangeError(f"tau outside tabulated range [{self.tau_grid[0]}, {self.tau_grid[-1]}]")

    def _check_r(self, r):
        rr = np.asarray(r)
        if np.any(rr < self.r_min) or np.any(rr > self.r_max):
            raise RangeError(f"r outside invertible range [{self.r_min:.6g}, {self.r_max:.6g}]")

    # -- tau side -------------------------------------------------------
    def partition(self, tau):
        self._check_tau(tau)
        return np.exp(self.beta * self._g_spline(tau))

    def gibbs_potential(self, tau):
        self._check_tau(tau)
        return self._g_spline(tau)

    def mean_stretch(self, tau):
        self._check_tau(tau)
        return self._rbar_spline(tau)

    # -- r side ---------------------------------------------------------
    def tension(self, r):
        """Scalar tension by safeguarded Newton on the direct quadrature."""
        self._check_r(r)
        return tension_direct(self.pot, self.beta, self.sigma, float(r))

    def tension_fast(self, r):
        """Vectorised cubic-interpolated tension (PDE coefficient path)."""
        self._check_r(r)
        return self._tension_spline(r)

    def tension_prime(self, r):
        self._check_r(r)
        return self._tprime_spline(r)

    def tension_second(self, r):
        self._check_r(r)
        return self._tsecond_spline(r)

    def free_energy(self, r):
        self._check_r(r)
        tau = self.tension(float(r))
        return tau * float(r) - float(self._g_spline(tau))

    def rate_function(self, tau, r):
        """I(tau, r) = G(tau) + F(r) - r*tau >= 0, zero iff tau = tension(r)."""
        self._check_tau(tau)
        return float(self._g_spline(tau)) + self.free_energy(r) - float(r) * float(tau)

    # -- serialization ----------------------------------------------------
    def to_json(self, path):
        if self.pot.kind == KIND_USER:
            raise ConfigError("user-supplied potentials are not serialisable")
        doc = {
            "format": "chainlab-thermocurve",
            "version": 1,
            "beta": self.beta,
            "sigma": self.sigma,
            "potential": self.pot.kind,
            "grid": self.tau_grid.tolist(),
            "values": {
                "log_z": self.log_z_vals.tolist(),
                "g": self.g_vals.tolist(),
                "rbar": self.rbar_vals.tolist(),
                "var": self.var_vals.tolist(),
                "mu3": self.mu3_vals.tolist(),
            },
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh)

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        if doc.get("format") != "chainlab-thermocurve" or doc.get("version") != 1:
            raise ConfigError("unrecognised thermo-curve file format")
        pot = BUILTINS[doc["potential"]]
        vals = doc["values"]
        return cls(
            pot,
            doc["beta"],
            doc["sigma"],
            np.asarray(doc["grid"]),
            np.asarray(vals["log_z"]),
            np.asarray(vals["rbar"]),
            np.asarray(vals["var"]),
            np.asarray(vals["mu3"]),
        )


def tension_slope_oracle(pot, beta, r):
    """First-order coefficient of tension(r) - r in sigma.

    Evaluates beta * E[(X - r) U(X)] under the sigma = 0 Gaussian N(r, 1/beta)
    by quadrature; this is the slope the fitted asymptotics must reproduce.
    """
    return beta * site_expectation(pot, beta, 0.0, r, lambda x: (x - r) * pot.u(x))


@dataclass
class AsymptoticsFit:
    """Least-squares slopes of the tension corrections against sigma at one r."""

    r: float
    slopes: tuple  # (C0, C1, C2)
    max_residual: float
    residual_over_sigma: np.ndarray  # per requested sigma, largest of the three fits
    deviations: np.ndarray  # shape (3, len(sigma_list)): t - r, t' - 1, t''


def _origin_fit(sig, dev):
    """Slope of dev against sigma, with the residual of the linear model.

    The slope comes from a dev = C*sigma + D*sigma^2 fit (a slope-only fit
    would absorb the O(sigma^2) correction into C); the reported residual
    is dev - C*sigma, which is the quadratic tail and hence o(sigma).
    """
    design = np.column_stack([sig, sig ** 2])
    coef, *_ = np.linalg.lstsq(design, dev, rcond=None)
    resid = dev - coef[0] * sig
    return float(coef[0]), resid


def tension_asymptotics(pot, beta, r_values, sigma_list):
    """Fit tension(r)-r, tension'(r)-1 and tension''(r) linearly in sigma.

    sigma_list must contain at least 4 values decreasing towards 0; the fit
    is through the origin (all three corrections vanish at sigma = 0) and
    the residual is required to be o(sigma), i.e. residual/sigma decreasing
    along the list.
    """
    sig = np.asarray(sigma_list, dtype=float)
    if sig.size < 4 or np.any(np.diff(sig) >= 0) or np.any(sig <= 0):
        raise ConfigError("sigma_list must hold >= 4 positive values decreasing toward 0")
    fits = []
    for r in np.atleast_1d(r_values):
        dev = np.empty((3, sig.size))
        for j, s in enumerate(sig):
            tau, tp, ts = tension_derivatives_direct(pot, beta, s, float(r))
            dev[0, j] = tau - r
            dev[1, j] = tp - 1.0
            dev[2, j] = ts
        slopes, resid_rows = [], []
        for row in dev:
            slope, resid = _origin_fit(sig, row)
            slopes.append(slope)
            resid_rows.append(np.abs(resid))
        resid_arr = np.vstack(resid_rows)
        fits.append(
            AsymptoticsFit(
                r=float(r),
                slopes=tuple(slopes),
                max_residual=float(resid_arr.max()),
                residual_over_sigma=resid_arr.max(axis=0) / sig,
                deviations=dev,
            )
        )
    return fits


def loglog_slope(x, y):
    """Slope of log|y| against log(x); used for scaling-exponent checks."""
    x = np.asarray(x, dtype=float)
    y = np.abs(np.asarray(y, dtype=float))
    if np.any(y <= 0):
        raise ValueError("log-log slope undefined for vanishing values")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])

"""Fluctuation fields, Sobolev norms, and trajectory statistics.

The fluctuation field of a chain state around hydrodynamic site values
(pp_i, rr_i) pairs against a test function h = (h_p, h_r) as

    Y(h) = n^(-1/2) sum_i [ h_p(i/n) (p_i - pp_i) + h_r(i/n) (r_i - rr_i) ],

with Fourier projections Y(phi_m e_p), Y(phi_m e_r) for phi_m = e^{2 pi i m x}
(the test function enters conjugated).  Sobolev norms follow
||f||_k^2 = sum_m |f(m)|^2 / (1 + m^2)^k truncated at the mode cutoff.

Trajectory statistics are accumulated by observers:

* BGAccumulator - the time integral of the nonlinear-replacement field
  Phi_i = V'(r_i) - tension_i - tension'(rr_i) (r_i - rr_i), scaled by
  n^(-1/2) (vanishes identically in the harmonic case).
* DynkinAccumulator - reconstructs the martingale part of Y_t(h) by
  subtracting the time-integrated generator action, and carries the
  closed-form quadratic variation gamma * int sum_i n^(-2) (grad_i h_r)^2.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InsufficientReplicasError, StalenessError
from .psystem import Profile, trig_interp

STALENESS_TOL = 1e-9


@dataclass
class HydroSites:
    """Hydrodynamic profile values interpolated to the n chain sites."""

    t: float
    p: np.ndarray
    r: np.ndarray

    @classmethod
    def from_profile(cls, prof: Profile, n: int):
        x = np.arange(n) / n
        vals = trig_interp(np.vstack([prof.p, prof.r]), x)
        return cls(t=prof.t, p=vals[0], r=vals[1])

    @classmethod
    def constant(cls, n, pbar, rbar, t=0.0):
        return cls(t=t, p=np.full(n, float(pbar)), r=np.full(n, float(rbar)))


def _check_fresh(state, hydro):
    if abs(state.t - hydro.t) > STALENESS_TOL * max(1.0, abs(state.t)):
        raise StalenessError(f"state at t={state.t} but hydro profile at t={hydro.t}")


def _resolve_hydro(state, hydro):
    if isinstance(hydro, Profile):
        hydro = HydroSites.from_profile(hydro, state.n)
    _check_fresh(state, hydro)
    return hydro


def project_field(state, hydro, m: int):
    """(Y(phi_m e_p), Y(phi_m e_r)) for one Fourier mode m."""
    hydro = _resolve_hydro(state, hydro)
    n = state.n
    phase = np.exp(-2j * np.pi * m * np.arange(n) / n)  # conj(phi_m) at i/n
    scale = 1.0 / np.sqrt(n)
    yp = scale * np.dot(phase, state.p - hydro.p)
    yr = scale * np.dot(phase, state.r - hydro.r)
    return yp, yr


@dataclass
class SpectralField:
    """Fourier projections of the fluctuation field for |m| <= M."""

    M: int
    coeffs: np.ndarray  # shape (2, 2M+1), row 0 momentum, row 1 stretch

    @classmethod
    def from_state(cls, state, hydro, M: int):
        hydro = _resolve_hydro(state, hydro)
        n = state.n
        if 2 * M + 1 > n:
            raise ConfigError("mode cutoff exceeds the chain resolution")
        dev = np.vstack([state.p - hydro.p, state.r - hydro.r])
        modes = np.arange(-M, M + 1)
        phase = np.exp(-2j * np.pi * np.outer(modes, np.arange(n) / n))
        coeffs = (phase @ dev.T).T / np.sqrt(n)
        return cls(M=M, coeffs=coeffs)

    def coeff(self, m: int):
        if abs(m) > self.M:
            raise ConfigError("mode outside cutoff")
        return self.coeffs[:, m + self.M]


def sobolev_norm(fieldv: SpectralField, k: float) -> float:
    """Truncated norm: sum over |m| <= M of |coeff|^2 / (1 + m^2)^k."""
    m = np.arange(-fieldv.M, fieldv.M + 1)
    w = (1.0 + m.astype(float) ** 2) ** (-k)
    total = np.sum(np.abs(fieldv.coeffs) ** 2 * w[None, :])
    return float(np.sqrt(total))


def linear_statistic(state, hydro, h_p, h_r) -> float:
    """n^(-1) sum_i h(i/n).(eta_i - hydro_i): the hydrodynamic-error pairing."""
    hydro = _resolve_hydro(state, hydro)
    n = state.n
    return float(
        (np.dot(h_p, state.p - hydro.p) + np.dot(h_r, state.r - hydro.r)) / n
    )


def jackknife_se(values):
    """Leave-one-out standard error of the mean of `values`."""
    values = np.asarray(values, dtype=float)
    n = values.size
    total = values.sum()
    loo = (total - values) / (n - 1)
    return float(np.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2)))


def hydro_error(values, p_exponent: float):
    """Monte Carlo estimate of E|X|^p from per-replica linear statistics.

    Returns (estimate, jackknife standard error).  Requires >= 10 replicas.
    """
    if not 1.0 <= p_exponent < 2.0:
        raise ConfigError("p_exponent must lie in [1, 2)")
    values = np.asarray(values, dtype=float)
    if values.size < 10:
        raise InsufficientReplicasError(f"need >= 10 replicas, got {values.size}")
    powered = np.abs(values) ** p_exponent
    return float(powered.mean()), jackknife_se(powered)


def gaussian_abs_moment(variance: float, p: float) -> float:
    """E|N(0, v)|^p in closed form (oracle for equilibrium checks)."""
    from scipy.special import gamma as gamma_fn

    return (2.0 * variance) ** (p / 2.0) * gamma_fn((p + 1.0) / 2.0) / np.sqrt(np.pi)


class ReplicaEnsemble:
    """Ordered replica accumulator: Welford moments reduced in index order.

    Values may arrive from concurrently computed replicas in any order;
    reduce() folds them by replica index so ensemble statistics are
    bitwise reproducible regardless of worker scheduling.
    """

    def __init__(self, n_replicas: int):
        self.R = n_replicas
        self._slots = [None] * n_replicas

    def add(self, replica_index: int, value):
        if self._slots[replica_index] is not None:
            raise ConfigError(f"replica {replica_index} already recorded")
        self._slots[replica_index] = np.asarray(value, dtype=float)

    @property
    def count(self):
        return sum(s is not None for s in self._slots)

    def values(self):
        if self.count != self.R:
            raise InsufficientReplicasError(f"{self.count}/{self.R} replicas recorded")
        return np.stack([s for s in self._slots])

    def reduce(self):
        """(mean, M2, count) by Welford in fixed replica order."""
        mean = None
        m2 = None
        count = 0
        for s in self._slots:
            if s is None:
                continue
            count += 1
            if mean is None:
                mean = np.array(s, dtype=float)
                m2 = np.zeros_like(mean)
            else:
                delta = s - mean
                mean = mean + delta / count
                m2 = m2 + delta * (s - mean)
        return mean, m2, count

    def mean_and_se(self):
        mean, m2, count = self.reduce()
        var = m2 / (count - 1)
        return mean, np.sqrt(var / count)


# -- trajectory observers --------------------------------------------------


class BGAccumulator:
    """Trapezoid time integral of n^(-1/2) sum_i g_i Phi_i along a run.

    hydro_at may be a fixed HydroSites (equilibrium) or a callable
    t -> HydroSites following the quasi-linear solution.  The tension
    values tension(rr_i) and slopes tension'(rr_i) come from the thermo
    curve of the run's sigma_n.
    """

    def __init__(self, g_sites, curve, pot, sigma, hydro_at):
        self.g = np.asarray(g_sites, dtype=float)
        self.curve = curve
        self.pot = pot
        self.sigma = sigma
        self.hydro_at = hydro_at
        self._last_t = None
        self._last_w = None
        self.integral = 0.0
        self._cache_t = None
        self._cache = None

    def _hydro(self, t):
        if callable(self.hydro_at):
            if self._cache_t != t:
                self._cache = self.hydro_at(t)
                self._cache_t = t
            return self._cache
        return self.hydro_at

    def phi_field(self, state):
        hyd = self._hydro(state.t)
        rr = hyd.r
        tau = self.curve.tension_fast(rr)
        slope = self.curve.tension_prime(rr)
        vprime = state.r + self.sigma * self.pot.u1(state.r)
        return vprime - tau - slope * (state.r - rr)

    def __call__(self, state):
        w = float(np.dot(self.g, self.phi_field(state)))
        if self._last_t is not None:
            self.integral += 0.5 * (state.t - self._last_t) * (w + self._last_w)
        self._last_t = state.t
        self._last_w = w

    def value(self, n):
        return self.integral / np.sqrt(n)


class DynkinAccumulator:
    """Reconstruct M_t(h) = Y_t(h) - Y_0(h) - int (d_s + L) Y_s(h) ds.

    Designed for static test functions h = (h_p, h_r) on the site grid.
    The generator action is evaluated explicitly:

        n A Y(h) = n^(1/2) avg-free sum [h_p (V'(r_{i+1}) - V'(r_i))
                                         + h_r (p_i - p_{i-1})] / sqrt(n)
        n gamma S Y(h) = -(beta gamma / 2) n^(1/2) ... bond differences.

    hydro_dot supplies the explicit time derivative of the centering
    profile at the sites (zero at equilibrium).
    """

    def __init__(self, h_p, h_r, model, pot, hydro_at, hydro_dot=None):
        self.h_p = np.asarray(h_p, dtype=float)
        self.h_r = np.asarray(h_r, dtype=float)
        self.model = model
        self.pot = pot
        self.hydro_at = hydro_at
        self.hydro_dot = hydro_dot
        self._last_t = None
        self._last_g = None
        self.integral = 0.0
        self.y0 = None
        self.y_last = None

    def _hydro(self, t):
        return self.hydro_at(t) if callable(self.hydro_at) else self.hydro_at

    def y_value(self, state):
        hyd = self._hydro(state.t)
        n = state.n
        return float(
            (np.dot(self.h_p, state.p - hyd.p) + np.dot(self.h_r, state.r - hyd.r))
            / np.sqrt(n)
        )

    def generator_action(self, state):
        m = self.model
        n = state.n
        scale = 1.0 / np.sqrt(n)
        vp = state.r + m.sigma * self.pot.u1(state.r)
        dvp = np.roll(vp, -1) - vp  # V'(r_{i+1}) - V'(r_i)
        a_part = np.dot(self.h_p, dvp) + np.dot(self.h_r, state.p - np.roll(state.p, 1))
        action = n * scale * a_part
        if m.gamma != 0.0:
            dh = np.roll(self.h_r, -1) - self.h_r
            s_part = -0.5 * m.beta * scale * np.dot(dvp, dh)
            action += n * m.gamma * s_part
        if self.hydro_dot is not None:
            dp, dr = self.hydro_dot(state.t)
            action -= scale * (np.dot(self.h_p, dp) + np.dot(self.h_r, dr))
        return float(action)

    def __call__(self, state):
        y = self.y_value(state)
        g = self.generator_action(state)
        if self.y0 is None:
            self.y0 = y
        if self._last_t is not None:
            self.integral += 0.5 * (state.t - self._last_t) * (g + self._last_g)
        self._last_t = state.t
        self._last_g = g
        self.y_last = y

    def martingale(self):
        return self.y_last - self.y0 - self.integral


def martingale_qv_formula(h_r, gamma, t_span):
    """gamma * t * sum_i n^(-2) (grad_i h_r)^2 for a static test function."""
    dh = np.roll(np.asarray(h_r, dtype=float), -1) - h_r
    return float(gamma * t_span * np.sum(dh ** 2))


def mode_covariance_transport(cov0, m, t):
    """Push a 2x2 complex mode covariance through the limit wave group.

    Mode m of the constant-speed system rotates by
    R = cos(theta) I + i sin(theta) [[0,1],[1,0]], theta = 2 pi m t;
    the covariance maps to R C R^H.
    """
    th = 2.0 * np.pi * m * t
    R = np.array([[np.cos(th), 1j * np.sin(th)], [1j * np.sin(th), np.cos(th)]])
    return R @ np.asarray(cov0, dtype=complex) @ R.conj().T

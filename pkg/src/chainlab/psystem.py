"""Macroscopic PDE solvers on the unit torus.

Three solvers share the grid conventions:

* solve_linear - the constant-speed system d_t p = d_x r, d_t r = d_x p,
  advanced exactly per Fourier mode (the 2x2 rotation in closed form).
* solve_quasilinear - d_t p = d_x tension(r), d_t r = d_x p, integrated in
  Riemann invariants u = p + F(r), v = p - F(r) with F' = sqrt(tension'),
  which are transported at speeds +/- sqrt(tension'(r)).  Method of lines:
  5th-order upwind-biased differences in space, explicit RK4 in time,
  CFL 0.4, with a gradient blow-up detector (the solvers only ever operate
  in the smooth regime).
* solve_backward - the adjoint system d_t h = [[0,1],[tension'(r),0]] d_x h
  with the coefficient field read off a stored forward solution; the same
  transport machinery runs on the locally diagonalised variables, with the
  exact zeroth-order commutator source kept.

shock_time_bound evaluates the closed-form lower bound for the classical
lifespan of the quasi-linear system with speed-squared function f:

    T* = 4 |p0' sqrt(f(r0)) + r0' f(r0)|_inf^-1
           (sup_{|r| <= K} |f^(-5/4)(r) f'(r)|)^-1,
    K = |p0|_inf + |r0|_inf * sup{sqrt(f(r)): |r| <= |r0|_inf}.
"""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicSpline

from .errors import BlowUpError, ConfigError

CFL_DEFAULT = 0.4
BLOWUP_FACTOR = 1e3


@dataclass
class Profile:
    """(p, r) fields sampled on the uniform m-point grid of the unit torus."""

    m: int
    p: np.ndarray
    r: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.p = np.ascontiguousarray(self.p, dtype=float)
        self.r = np.ascontiguousarray(self.r, dtype=float)
        if self.p.shape != (self.m,) or self.r.shape != (self.m,):
            raise ConfigError("profile arrays must have length m")
        if not (np.all(np.isfinite(self.p)) and np.all(np.isfinite(self.r))):
            raise ConfigError("profile arrays must be finite")

    @property
    def x(self):
        return np.arange(self.m) / self.m

    def copy(self):
        return Profile(self.m, self.p.copy(), self.r.copy(), self.t)


def make_profile(m, p_modes=(), r_modes=(), t=0.0):
    """Band-limited trig polynomial profile.

    p_modes / r_modes are triples (k, amplitude, phase) adding
    amplitude * cos(2 pi k x + phase) to the respective field.
    """
    x = np.arange(m) / m
    p = np.zeros(m)
    r = np.zeros(m)
    for k, amp, phase in p_modes:
        p += amp * np.cos(2 * np.pi * k * x + phase)
    for k, amp, phase in r_modes:
        r += amp * np.cos(2 * np.pi * k * x + phase)
    return Profile(m, p, r, t)


def trig_interp(values, x_new):
    """Evaluate the trigonometric interpolant of uniform-grid samples."""
    m = values.shape[-1]
    coef = np.fft.fft(values) / m
    k = np.fft.fftfreq(m, d=1.0 / m)
    if m % 2 == 0:  # split the Nyquist mode symmetrically for a real result
        coef = coef.copy()
        coef[..., m // 2] *= 0.5
        k = k.copy()
        phases_ny = np.cos(2 * np.pi * (m // 2) * np.asarray(x_new))
        extra = 2.0 * np.real(coef[..., m // 2])[..., None] * phases_ny
    else:
        extra = 0.0
    mask = np.ones(m, dtype=bool)
    if m % 2 == 0:
        mask[m // 2] = False
    basis = np.exp(2j * np.pi * np.outer(np.asarray(x_new), k[mask]))
    out = np.real(coef[..., mask] @ basis.T) + extra
    return out


def spectral_derivative(values):
    """d/dx on the unit torus by FFT (band-limited data)."""
    m = values.shape[-1]
    k = np.fft.fftfreq(m, d=1.0 / m)
    return np.real(np.fft.ifft(2j * np.pi * k * np.fft.fft(values)))


# -- linear p-system ------------------------------------------------------


def solve_linear(initial: Profile, t: float) -> Profile:
    """Exact spectral solution of d_t p = d_x r, d_t r = d_x p."""
    m = initial.m
    k = np.fft.fftfreq(m, d=1.0 / m)
    ph = np.fft.fft(initial.p)
    rh = np.fft.fft(initial.r)
    rot = np.exp(2j * np.pi * k * t)
    u = (ph + rh) * rot
    v = (ph - rh) / rot
    p = np.real(np.fft.ifft(0.5 * (u + v)))
    r = np.real(np.fft.ifft(0.5 * (u - v)))
    return Profile(m, p, r, initial.t + t)


# -- Riemann-invariant machinery ------------------------------------------


class TensionIntegral:
    """F(s) = integral_0^s sqrt(tension') and its inverse.

    Built once per ThermoCurve by cumulative Simpson over the tabulated
    stretch range; the inverse is a swapped spline polished by Newton
    (F' = sqrt(tension') > 0).
    """

    def __init__(self, curve):
        r = curve.rbar_vals
        sqrt_tp = np.sqrt(curve.tension_prime(r))
        F = cumulative_simpson(sqrt_tp, x=r, initial=0.0)
        F -= CubicSpline(r, F)(0.0)
        self.r_grid = r
        self._F = CubicSpline(r, F)
        self._Finv0 = CubicSpline(F, r)
        self._sqrt_tp = CubicSpline(r, sqrt_tp)
        self.w_min, self.w_max = float(F[0]), float(F[-1])

    def F(self, r):
        return self._F(r)

    def Finv(self, w):
        r = self._Finv0(np.clip(w, self.w_min, self.w_max))
        for _ in range(2):
            r = r - (self._F(r) - w) / self._sqrt_tp(r)
        return r

    def speed(self, r):
        return self._sqrt_tp(r)


@dataclass
class RiemannState:
    """Riemann invariants u = p + F(r), v = p - F(r) on the torus grid."""

    u: np.ndarray
    v: np.ndarray
    F: TensionIntegral
    t: float = 0.0

    @classmethod
    def from_profile(cls, prof: Profile, fint: TensionIntegral):
        fr = fint.F(prof.r)
        return cls(u=prof.p + fr, v=prof.p - fr, F=fint, t=prof.t)

    def to_profile(self) -> Profile:
        r = self.F.Finv(0.5 * (self.u - self.v))
        p = 0.5 * (self.u + self.v)
        return Profile(self.u.size, p, r, self.t)


# 5th-order biased difference stencils (offsets and weights solve the
# order conditions exactly; computed once).
def _biased_weights(offsets):
    a = np.vander(np.asarray(offsets, dtype=float), increasing=True).T
    rhs = np.zeros(len(offsets))
    rhs[1] = 1.0
    return np.linalg.solve(a, rhs)


_OFFS_RIGHT = (-2, -1, 0, 1, 2, 3)  # for fields transported to the left
_OFFS_LEFT = (-3, -2, -1, 0, 1, 2)  # for fields transported to the right
_W_RIGHT = _biased_weights(_OFFS_RIGHT)
_W_LEFT = _biased_weights(_OFFS_LEFT)


def _dx_biased(f, h, offsets, weights):
    out = np.zeros_like(f)
    for j, w in zip(offsets, weights):
        if w != 0.0:
            out += w * np.roll(f, -j)
    return out / h


class QuasilinearSolution:
    """Stored quasi-linear trajectory with gradient diagnostics."""

    def __init__(self, m, fint, curve):
        self.m = m
        self.fint = fint
        self.curve = curve
        self.times = []
        self.snapshots = []  # (u, v) pairs
        self.grad_times = []
        self.grad_u = []
        self.grad_v = []
        self.blown_up_at = None

    def _store(self, t, u, v):
        self.times.append(t)
        self.snapshots.append((u.copy(), v.copy()))

    def profile(self, t) -> Profile:
        ts = np.asarray(self.times)
        i = int(np.argmin(np.abs(ts - t)))
        if abs(ts[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise ConfigError(f"time {t} not stored (nearest {ts[i]})")
        u, v = self.snapshots[i]
        return RiemannState(u, v, self.fint, t=float(ts[i])).to_profile()

    @property
    def final(self) -> Profile:
        u, v = self.snapshots[-1]
        return RiemannState(u, v, self.fint, t=self.times[-1]).to_profile()

    def riemann_fields(self, t):
        ts = np.asarray(self.times)
        i = int(np.argmin(np.abs(ts - t)))
        return self.snapshots[i]

    def sites(self, t, n):
        """Hydrodynamic (p, r) trig-interpolated to the n chain sites i/n."""
        prof = self.profile(t)
        x = np.arange(n) / n
        vals = trig_interp(np.vstack([prof.p, prof.r]), x)
        return vals[0], vals[1]


def solve_quasilinear(initial: Profile, t_end: float, curve, cfl=CFL_DEFAULT,
                      store_every=None, blowup_factor=BLOWUP_FACTOR,
                      fint=None) -> QuasilinearSolution:
    """Integrate the quasi-linear p-system to t_end in Riemann invariants.

    Stores snapshots every store_every time units (defaults to exactly the
    initial and final states) and the max-gradient history; raises
    BlowUpError once max(|d_x u|, |d_x v|) exceeds blowup_factor times its
    initial value.
    """
    if fint is None:
        fint = TensionIntegral(curve)
    m = initial.m
    h = 1.0 / m
    state = RiemannState.from_profile(initial, fint)
    u, v = state.u.copy(), state.v.copy()
    sol = QuasilinearSolution(m, fint, curve)
    sol._store(initial.t, u, v)

    def rhs(u, v):
        r = fint.Finv(0.5 * (u - v))
        lam = fint.speed(r)
        du = lam * _dx_biased(u, h, _OFFS_RIGHT, _W_RIGHT)
        dv = -lam * _dx_biased(v, h, _OFFS_LEFT, _W_LEFT)
        return du, dv

    def grad_max(u, v):
        gu = float(np.max(np.abs(_dx_biased(u, h, _OFFS_RIGHT, _W_RIGHT))))
        gv = float(np.max(np.abs(_dx_biased(v, h, _OFFS_LEFT, _W_LEFT))))
        return gu, gv

    g0 = max(max(grad_max(u, v)), 1e-10)
    t = initial.t
    next_store = None if store_every is None else initial.t + store_every
    while t < t_end - 1e-12:
        r = fint.Finv(0.5 * (u - v))
        lam_max = float(np.max(fint.speed(r)))
        dt = cfl * h / max(lam_max, 1e-12)
        target = t_end
        if next_store is not None:
            target = min(target, next_store)
        dt = min(dt, target - t)
        k1u, k1v = rhs(u, v)
        k2u, k2v = rhs(u + 0.5 * dt * k1u, v + 0.5 * dt * k1v)
        k3u, k3v = rhs(u + 0.5 * dt * k2u, v + 0.5 * dt * k2v)
        k4u, k4v = rhs(u + dt * k3u, v + dt * k3v)
        u = u + (dt / 6.0) * (k1u + 2 * k2u + 2 * k3u + k4u)
        v = v + (dt / 6.0) * (k1v + 2 * k2v + 2 * k3v + k4v)
        t += dt
        gu, gv = grad_max(u, v)
        sol.grad_times.append(t)
        sol.grad_u.append(gu)
        sol.grad_v.append(gv)
        if max(gu, gv) > blowup_factor * g0:
            sol.blown_up_at = t
            sol._store(t, u, v)
            raise BlowUpError(f"gradient blow-up detected at t={t:.6g}", t=t)
        if next_store is not None and t >= next_store - 1e-12:
            sol._store(t, u, v)
            next_store += store_every
        if not np.all(np.isfinite(u)) or not np.all(np.isfinite(v)):
            sol.blown_up_at = t
            raise BlowUpError(f"non-finite invariant at t={t:.6g}", t=t)
    if abs(sol.times[-1] - t) > 1e-12:
        sol._store(t, u, v)
    return sol


def solve_backward(initial_h: Profile, interval, curve, forward: QuasilinearSolution,
                   cfl=CFL_DEFAULT):
    """Advance the adjoint pair h by d_t h = [[0,1],[tension'(r),0]] d_x h.

    interval = (t0, t1); the coefficient tension'(r(t, x)) is interpolated
    from the stored forward solution (linear in time between snapshots, so
    store the forward run densely when adjoint accuracy matters).  Space
    derivatives are spectral - exact on the periodic grid for band-limited
    fields and exactly zero on constants - and time stepping reuses the
    RK4 integrator of the forward solver.  The pairing of this field with
    a solution of the forward fluctuation equation is conserved in time.
    """
    t0, t1 = interval
    fint = forward.fint
    m = initial_h.m
    if m != forward.m:
        raise ConfigError("adjoint grid must match the forward grid")
    h = 1.0 / m
    ts = np.asarray(forward.times)

    def tprime_at(t):
        i = int(np.searchsorted(ts, t))
        i0 = max(0, min(i - 1, len(ts) - 2)) if len(ts) > 1 else 0
        i1 = min(i0 + 1, len(ts) - 1)
        w = 0.0 if i1 == i0 else (t - ts[i0]) / (ts[i1] - ts[i0])
        w = min(max(w, 0.0), 1.0)
        u0, v0 = forward.snapshots[i0]
        u1, v1 = forward.snapshots[i1]
        r = fint.Finv(0.25 * ((1 - w) * (u0 - v0) + w * (u1 - v1)) * 2.0)
        return curve.tension_prime(r)

    h1 = initial_h.p.copy()
    h2 = initial_h.r.copy()
    t = t0
    while t < t1 - 1e-12:
        tp_now = tprime_at(t)
        lam_max = float(np.sqrt(np.max(tp_now)))
        dt = min(cfl * h / max(lam_max, 1e-12), t1 - t)

        def rhs(h1, h2, s):
            tp = tprime_at(s)
            return spectral_derivative(h2), tp * spectral_derivative(h1)

        a1, b1 = rhs(h1, h2, t)
        a2, b2 = rhs(h1 + 0.5 * dt * a1, h2 + 0.5 * dt * b1, t + 0.5 * dt)
        a3, b3 = rhs(h1 + 0.5 * dt * a2, h2 + 0.5 * dt * b2, t + 0.5 * dt)
        a4, b4 = rhs(h1 + dt * a3, h2 + dt * b3, t + dt)
        h1 = h1 + (dt / 6.0) * (a1 + 2 * a2 + 2 * a3 + a4)
        h2 = h2 + (dt / 6.0) * (b1 + 2 * b2 + 2 * b3 + b4)
        t += dt
    return Profile(m, h1, h2, t)


# -- shock-time lower bound ------------------------------------------------


def shock_time_bound(initial: Profile, f, fprime, r_scan_step=1e-3):
    """Closed-form lifespan lower bound T* for speed-squared function f.

    Returns inf when the initial data is constant or f is (numerically)
    constant on the scanned range.
    """
    p0, r0 = initial.p, initial.r
    dp = spectral_derivative(p0)
    dr = spectral_derivative(r0)
    sup_r0 = float(np.max(np.abs(r0)))
    scan0 = np.arange(-sup_r0, sup_r0 + r_scan_step, r_scan_step) if sup_r0 > 0 else np.array([0.0])
    k_bound = float(np.max(np.abs(p0))) + sup_r0 * float(np.max(np.sqrt(f(scan0))))
    denom1 = float(np.max(np.abs(dp * np.sqrt(f(r0)) + dr * f(r0))))
    scan = np.arange(-k_bound, k_bound + r_scan_step, r_scan_step)
    fs = np.asarray(f(scan), dtype=float)
    denom2 = float(np.max(np.abs(fs ** (-1.25) * np.asarray(fprime(scan), dtype=float))))
    if denom1 == 0.0 or denom2 == 0.0:
        return np.inf
    return 4.0 / (denom1 * denom2)


def shock_time_bound_from_curve(initial: Profile, curve, r_scan_step=1e-3):
    return shock_time_bound(
        initial,
        lambda r: curve.tension_prime(r),
        lambda r: curve.tension_second(r),
        r_scan_step=r_scan_step,
    )

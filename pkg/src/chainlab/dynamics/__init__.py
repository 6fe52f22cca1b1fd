"""Time integration of the hyperbolically rescaled noisy oscillator chain.

The chain lives on the discrete n-torus with momenta p_i and stretches r_i.
The drift is the rescaled Hamiltonian vector field plus the stretch-exchange
noise drift; the noise itself enters as bond differences of independent
Brownian increments, so the total momentum and total stretch are conserved
structurally, not statistically:

    dp_i = n (V'(r_{i+1}) - V'(r_i)) dt
    dr_i = n (p_i - p_{i-1}) dt
           + (n beta gamma / 2)(V'(r_{i+1}) + V'(r_{i-1}) - 2 V'(r_i)) dt
           + sqrt(n gamma) (dB^{i-1} - dB^i)

The stretch drift follows the generator convention (p_i - p_{i-1}); the
alternative (p_{i+1} - p_i) shift is available via index_convention for
sensitivity checks.  Default scheme is Strang splitting: half-step
Euler-Maruyama on the noise part, velocity-Verlet on the Hamiltonian part,
half-step noise.  The hot loop runs in the compiled Cython core when it is
importable and the perturbation is a built-in; otherwise a vectorised
NumPy fallback with identical semantics is used.
"""

import os
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from ..errors import BlowUpError, ConfigError
from ..potentials import BUILTIN_KERNEL_CODES, ONE_MINUS_COS, ModelParams, Potential
from . import _numpy_backend

try:  # compiled hot loop; optional at runtime
    from . import _core
except ImportError:  # pragma: no cover - exercised only in pure-Python installs
    _core = None

HAVE_COMPILED = _core is not None

DEFAULT_CFL = 0.1
DEFAULT_OBS_INTERVAL = 1e-2
_CHUNK_STEPS = 256


def backend_name(params) -> str:
    """Resolve which kernel a run with these parameters will use."""
    forced = os.environ.get("CHAINLAB_BACKEND", "")
    choice = params.backend if params.backend != "auto" else (forced or "auto")
    if choice == "numpy":
        return "numpy"
    compiled_ok = HAVE_COMPILED and params.pot.kind in BUILTIN_KERNEL_CODES
    if choice == "compiled":
        if not compiled_ok:
            raise ConfigError("compiled backend unavailable for this potential/build")
        return "compiled"
    return "compiled" if compiled_ok else "numpy"


@dataclass
class ChainState:
    """Configuration of one chain replica plus its clock and noise stream."""

    n: int
    p: np.ndarray
    r: np.ndarray
    t: float = 0.0
    rng: Optional[np.random.Generator] = None

    def __post_init__(self):
        self.p = np.ascontiguousarray(self.p, dtype=float)
        self.r = np.ascontiguousarray(self.r, dtype=float)
        if self.p.shape != (self.n,) or self.r.shape != (self.n,):
            raise ConfigError("p and r must both have length n")

    def copy(self):
        return ChainState(self.n, self.p.copy(), self.r.copy(), self.t, self.rng)


@dataclass
class SimParams:
    """Integration parameters for one chain size."""

    model: ModelParams
    n: int
    pot: Potential = ONE_MINUS_COS
    scheme: str = "strang"  # or "euler_maruyama"
    cfl: float = DEFAULT_CFL
    dt_macro: Optional[float] = None
    index_convention: str = "generator"  # or "sde-display"
    backend: str = "auto"  # auto | compiled | numpy

    def __post_init__(self):
        if self.scheme not in ("strang", "euler_maruyama"):
            raise ConfigError(f"unknown scheme {self.scheme!r}", field="scheme")
        if self.index_convention not in ("generator", "sde-display"):
            raise ConfigError("index_convention must be 'generator' or 'sde-display'")
        bound = self.dt_bound()
        if self.dt_macro is None:
            self.dt_macro = bound
        elif self.dt_macro > bound * (1 + 1e-12):
            raise ConfigError(
                f"dt_macro={self.dt_macro:g} violates the stability bound {bound:g}",
                field="dt_macro",
            )

    def dt_bound(self) -> float:
        m = self.model
        return self.cfl / (self.n * (1.0 + m.beta * m.gamma))

    @property
    def conv_code(self) -> int:
        return 0 if self.index_convention == "generator" else 1


def _vp(params, r):
    return r + params.model.sigma * params.pot.u1(r)


def drift_fields(state: ChainState, params: SimParams):
    """Full generator drift (dp, dr) at the current state."""
    m = params.model
    n = float(params.n)
    vp = _vp(params, state.r)
    dp = n * (np.roll(vp, -1) - vp)
    if params.conv_code == 0:
        dr = n * (state.p - np.roll(state.p, 1))
    else:
        dr = n * (np.roll(state.p, -1) - state.p)
    if m.gamma != 0.0:
        dr = dr + (n * m.beta * m.gamma / 2.0) * (np.roll(vp, -1) + np.roll(vp, 1) - 2.0 * vp)
    return dp, dr


def _kernel(params):
    if backend_name(params) == "compiled":
        return _core
    return _numpy_backend


def _advance(state, params, dt, nsteps, noise=None):
    """Run nsteps of the configured scheme, drawing noise from the stream."""
    m = params.model
    kern = _kernel(params)
    ukind = BUILTIN_KERNEL_CODES.get(params.pot.kind)
    if ukind is None:
        kern = _numpy_backend
        ukind = 2  # numpy backend only reaches _vprime for builtins
        if m.sigma != 0.0:
            return _advance_generic(state, params, dt, nsteps, noise)
    kick = np.empty(params.n)
    fn = kern.strang_chunk if params.scheme == "strang" else kern.em_chunk
    done = 0
    while done < nsteps:
        k = min(_CHUNK_STEPS, nsteps - done)
        if m.gamma == 0.0:
            xi = np.empty((k, 2, 0))
        elif noise is not None:
            xi = np.ascontiguousarray(noise[done : done + k])
        else:
            xi = state.rng.standard_normal((k, 2, params.n))
        fn(state.p, state.r, xi, dt, float(params.n), m.beta, m.gamma, m.sigma, ukind, params.conv_code, kick)
        done += k
    state.t += nsteps * dt
    _check_finite(state)
    return state


def _advance_generic(state, params, dt, nsteps, noise=None):
    """Slow path for user-supplied potentials: same schemes, callable V'."""
    m = params.model
    n = params.n
    nn = float(n)
    half = 0.5 * dt
    cdrift = half * (nn * m.beta * m.gamma * 0.5)
    camp = np.sqrt(nn * m.gamma * half)
    ckick = half * nn
    cmove = dt * nn
    p, r = state.p, state.r
    for k in range(nsteps):
        if noise is not None:
            z2 = noise[k]
        elif m.gamma != 0.0:
            z2 = state.rng.standard_normal((2, n))
        if params.scheme == "strang":
            if m.gamma != 0.0:
                vp = _vp(params, r)
                r += cdrift * (np.roll(vp, -1) + np.roll(vp, 1) - 2.0 * vp) + camp * (
                    np.roll(z2[0], 1) - z2[0]
                )
            vp = _vp(params, r)
            p += ckick * (np.roll(vp, -1) - vp)
            if params.conv_code == 0:
                r += cmove * (p - np.roll(p, 1))
            else:
                r += cmove * (np.roll(p, -1) - p)
            vp = _vp(params, r)
            p += ckick * (np.roll(vp, -1) - vp)
            if m.gamma != 0.0:
                vp = _vp(params, r)
                r += cdrift * (np.roll(vp, -1) + np.roll(vp, 1) - 2.0 * vp) + camp * (
                    np.roll(z2[1], 1) - z2[1]
                )
        else:
            dp, dr = drift_fields(state, params)
            p += dt * dp
            rinc = dt * dr
            if m.gamma != 0.0:
                rinc = rinc + np.sqrt(nn * m.gamma * dt) * (np.roll(z2[0], 1) - z2[0])
            r += rinc
    state.t += nsteps * dt
    _check_finite(state)
    return state


def _check_finite(state):
    if np.all(np.isfinite(state.p)) and np.all(np.isfinite(state.r)):
        return
    bad_p = np.flatnonzero(~np.isfinite(state.p))
    bad_r = np.flatnonzero(~np.isfinite(state.r))
    site = int(bad_p[0]) if bad_p.size else int(bad_r[0])
    which = "p" if bad_p.size else "r"
    raise BlowUpError(
        f"non-finite {which}[{site}] at t={state.t:.6g}", t=state.t, site=site
    )


def step(state: ChainState, params: SimParams, noise=None) -> ChainState:
    """Advance by a single micro step of length params.dt_macro."""
    return _advance(state, params, params.dt_macro, 1, noise=noise)


def advance(state, params, dt, nsteps, noise=None):
    """Advance by nsteps explicit micro steps of length dt.

    Lower-level than run(): no observer schedule, the step size is taken
    literally.  noise, when given, holds the per-step unit increments with
    shape (nsteps, 2, n) and is consumed in step order.
    """
    if dt > params.dt_bound() * (1 + 1e-12):
        raise ConfigError(f"dt={dt:g} violates the stability bound {params.dt_bound():g}")
    return _advance(state, params, dt, nsteps, noise=noise)


def run(state, params, t_end, observers=(), obs_interval=DEFAULT_OBS_INTERVAL, noise=None):
    """Advance to t_end, invoking observers on the macroscopic schedule.

    Observers are called at the start time and after every obs_interval;
    dt is shrunk to divide the interval exactly, so observation times are
    reproducible.  With a noise array, increments are consumed in step
    order; otherwise state.rng supplies them.  Deterministic given
    (stream, params, schedule).
    """
    if t_end <= state.t:
        raise ConfigError("t_end must exceed the state clock", field="t_end")
    for obs in observers:
        obs(state)
    offset = 0
    remaining = t_end - state.t
    n_obs = int(np.floor(remaining / obs_interval + 1e-9))
    for _ in range(n_obs):
        nsteps = max(1, int(np.ceil(obs_interval / params.dt_macro - 1e-12)))
        dt = obs_interval / nsteps
        sl = None if noise is None else noise[offset : offset + nsteps]
        _advance(state, params, dt, nsteps, noise=sl)
        offset += nsteps
        for obs in observers:
            obs(state)
    tail = t_end - state.t
    if tail > 1e-12 * max(1.0, abs(t_end)):
        nsteps = max(1, int(np.ceil(tail / params.dt_macro - 1e-12)))
        dt = tail / nsteps
        sl = None if noise is None else noise[offset : offset + nsteps]
        _advance(state, params, dt, nsteps, noise=sl)
        for obs in observers:
            obs(state)
    return state


def steps_for(params, t_span, obs_interval=DEFAULT_OBS_INTERVAL):
    """Total number of micro steps run() will take over t_span (for noise arrays)."""
    n_obs = int(np.floor(t_span / obs_interval + 1e-9))
    per = max(1, int(np.ceil(obs_interval / params.dt_macro - 1e-12)))
    total = n_obs * per
    tail = t_span - n_obs * obs_interval
    if tail > 1e-12 * max(1.0, t_span):
        total += max(1, int(np.ceil(tail / params.dt_macro - 1e-12)))
    return total


def energy(state: ChainState, params: SimParams) -> float:
    """Hamiltonian sum p^2/2 + V(r); not conserved once noise acts."""
    s = params.model.sigma
    v = 0.5 * state.r ** 2 + s * params.pot.u(state.r)
    return float(np.sum(0.5 * state.p ** 2 + v))


def conserved_totals(state: ChainState):
    return float(state.p.sum()), float(state.r.sum())


# -- snapshot output ----------------------------------------------------

FRAME_MAGIC = b"CHAIN1\x00\x00"


def write_snapshot_csv(path, snapshots):
    """CSV rows (t, i, p_i, r_i) for an iterable of states."""
    from ..sim_io import format_float

    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t,i,p,r\n")
        for st in snapshots:
            for i in range(st.n):
                fh.write(
                    f"{format_float(st.t)},{i},{format_float(st.p[i])},{format_float(st.r[i])}\n"
                )


def write_frames(path, snapshots):
    """Binary frames: 16-byte header (magic, n, frame count), then per frame
    the clock and the p and r arrays as little-endian float64."""
    snaps = list(snapshots)
    if not snaps:
        raise ConfigError("no frames to write")
    n = snaps[0].n
    with open(path, "wb") as fh:
        fh.write(FRAME_MAGIC)
        fh.write(np.array([n, len(snaps)], dtype="<u4").tobytes())
        for st in snaps:
            np.asarray([st.t], dtype="<f8").tofile(fh)
            st.p.astype("<f8").tofile(fh)
            st.r.astype("<f8").tofile(fh)


def read_frames(path):
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != FRAME_MAGIC:
            raise ConfigError("bad frame-file magic")
        n = int(np.frombuffer(fh.read(4), dtype="<u4")[0])
        count = int(np.frombuffer(fh.read(4), dtype="<u4")[0])
        out = []
        for _ in range(count):
            t = float(np.fromfile(fh, dtype="<f8", count=1)[0])
            p = np.fromfile(fh, dtype="<f8", count=n)
            r = np.fromfile(fh, dtype="<f8", count=n)
            out.append(ChainState(n, p, r, t))
    return out

"""Interaction potentials and scaling-regime bookkeeping.

The spring potential is the bounded perturbation of a harmonic spring

    V(r) = r^2/2 + sigma * U(r),    0 <= sigma < 1,

where the perturbation U satisfies U(0) = U'(0) = 0 and |U''| <= 1, so that
V'' stays inside [1 - sigma, 1 + sigma].  Built-in choices of U are the zero
perturbation (harmonic chain) and 1 - cos(r).  User-supplied perturbations
are screened on a dense grid at registration time.
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError

# Grid on which user-supplied perturbations are screened.
_CHECK_RMAX = 50.0
_CHECK_STEP = 1e-3
_ORIGIN_TOL = 1e-12

KIND_ZERO = "zero"
KIND_ONE_MINUS_COS = "one-minus-cosine"
KIND_USER = "user-supplied"

# Kinds the compiled integrator kernel knows about.
BUILTIN_KERNEL_CODES = {KIND_ZERO: 0, KIND_ONE_MINUS_COS: 1}


@dataclass(frozen=True)
class Potential:
    """Anharmonic perturbation U with first and second derivatives."""

    u: Callable[[np.ndarray], np.ndarray]
    u1: Callable[[np.ndarray], np.ndarray]
    u2: Callable[[np.ndarray], np.ndarray]
    kind: str = KIND_USER

    @classmethod
    def register(cls, u, u1, u2, kind=KIND_USER):
        """Validate a perturbation on a sample grid and wrap it.

        Checks U(0) = U'(0) = 0 to 1e-12 and |U''| <= 1 on |r| <= 50
        (step 1e-3).  Unbounded perturbations such as r^4 are rejected here.
        """
        if abs(float(u(0.0))) > _ORIGIN_TOL or abs(float(u1(0.0))) > _ORIGIN_TOL:
            raise ConfigError("perturbation must satisfy U(0) = U'(0) = 0")
        grid = np.arange(-_CHECK_RMAX, _CHECK_RMAX + _CHECK_STEP / 2, _CHECK_STEP)
        curvature = np.asarray(u2(grid), dtype=float)
        if not np.all(np.isfinite(curvature)):
            raise ConfigError("perturbation curvature not finite on the sample grid")
        worst = float(np.max(np.abs(curvature)))
        if worst > 1.0 + 1e-12:
            raise ConfigError(
                f"perturbation curvature |U''| reaches {worst:.6g} > 1 on the sample grid"
            )
        return cls(u=u, u1=u1, u2=u2, kind=kind)


def _zeros_like(r):
    return np.zeros_like(np.asarray(r, dtype=float))


def _one_minus_cos(r):
    return 1.0 - np.cos(r)


def _sin(r):
    return np.sin(r)


def _cos(r):
    return np.cos(r)


ZERO = Potential(u=_zeros_like, u1=_zeros_like, u2=_zeros_like, kind=KIND_ZERO)

ONE_MINUS_COS = Potential(u=_one_minus_cos, u1=_sin, u2=_cos, kind=KIND_ONE_MINUS_COS)

BUILTINS = {KIND_ZERO: ZERO, KIND_ONE_MINUS_COS: ONE_MINUS_COS}


def get_potential(kind: str) -> Potential:
    try:
        return BUILTINS[kind]
    except KeyError:
        raise ConfigError(f"unknown built-in potential kind {kind!r}") from None


@dataclass(frozen=True)
class ModelParams:
    """Inverse temperature, anharmonicity, and noise strength of one chain."""

    beta: float
    sigma: float
    gamma: float

    def __post_init__(self):
        if not self.beta > 0:
            raise ConfigError("beta must be positive", field="beta")
        if not 0.0 <= self.sigma < 1.0:
            raise ConfigError("sigma must lie in [0, 1)", field="sigma")
        # gamma == 0 is admitted so the deterministic Hamiltonian limit can
        # be exercised directly (integrator oracles, reversibility checks).
        if not self.gamma >= 0:
            raise ConfigError("gamma must be nonnegative", field="gamma")


def potential_eval(pot: Potential, params: ModelParams, r, order: int):
    """Evaluate V(r), V'(r) or V''(r) for V = r^2/2 + sigma*U(r)."""
    s = params.sigma
    r = np.asarray(r, dtype=float)
    if order == 0:
        out = 0.5 * r * r + s * pot.u(r)
    elif order == 1:
        out = r + s * pot.u1(r)
    elif order == 2:
        out = 1.0 + s * pot.u2(r)
    else:
        raise ConfigError("order must be 0, 1 or 2", field="order")
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ScalingRegime:
    """Power-law scaling sigma_n = A*n^(-a), gamma_n = B*n^b."""

    a: float
    b: float
    A: float = 1.0
    B: float = 1.0

    def __post_init__(self):
        if self.a < 0 or self.b < 0:
            raise ConfigError("exponents a, b must be nonnegative")
        if self.A <= 0 or self.B <= 0:
            raise ConfigError("prefactors A, B must be positive")

    def sigma_n(self, n: int) -> float:
        return self.A * float(n) ** (-self.a)

    def gamma_n(self, n: int) -> float:
        return self.B * float(n) ** self.b


@dataclass(frozen=True)
class RegimeVerdict:
    kind: str  # "fluct_ok" | "hydro_ok" | "reject"
    reason: str = ""

    def __bool__(self):
        return self.kind != "reject"


def fluct_band(a: float):
    """Admissible noise-exponent band (lower, upper) for the fluctuation regime."""
    return (7.0 - 28.0 * a) / 3.0, (2.0 * a + 1.0) / 3.0


def validate_regime(reg: ScalingRegime) -> RegimeVerdict:
    """Classify a scaling regime.

    fluct_ok requires a > 1/5 and b inside (f-(a), f+(a)) intersected with
    [0, 1/2), where f-(a) = (7 - 28a)/3 and f+(a) = (2a + 1)/3.  hydro_ok
    requires only the exponent inequalities 2b < 1 and -6a - b + 3/2 < 0.
    """
    a, b = reg.a, reg.b
    lo, hi = fluct_band(a)
    if a > 0.2 and b < 0.5 and lo < b < hi:
        return RegimeVerdict("fluct_ok")
    if 2.0 * b < 1.0 and (-6.0 * a - b + 1.5) < 0.0:
        return RegimeVerdict("hydro_ok")
    # Name the first violated inequality, most informative first.
    if a <= 0.2:
        return RegimeVerdict("reject", "a <= 1/5")
    if b >= 0.5:
        return RegimeVerdict("reject", "b >= 1/2")
    if b <= lo:
        return RegimeVerdict("reject", f"b <= f-(a) = {lo:.6g}")
    return RegimeVerdict("reject", f"b >= f+(a) = {hi:.6g}")


def compute_sequences(reg: ScalingRegime, n: int):
    """Return (sigma_n, gamma_n, K_n, kappa_n) for chain size n.

    K_n = max(sigma_n^(6/5) gamma_n^(-1/5) n^(4/5), gamma_n) controls the
    entropy growth; kappa_n replaces the gamma_n branch by sigma_n*sqrt(n).
    """
    if n < 1:
        raise ConfigError("n must be >= 1", field="n")
    sn = reg.sigma_n(n)
    gn = reg.gamma_n(n)
    core = sn ** 1.2 * gn ** (-0.2) * float(n) ** 0.8
    k_n = max(core, gn)
    kappa_n = max(core, sn * float(n) ** 0.5)
    return sn, gn, k_n, kappa_n

"""Numerical verification toolbox.

Contents map one-to-one onto the analytic instruments the chain analysis
rests on: the local CLT with second-order (Edgeworth-type) expansion, the
equivalence of canonical and micro-canonical ensembles, sub-Gaussian order
estimation with Chernoff tails, the smallest-eigenvalue bound for the
stiffness tridiagonal, the gradient bound for a Poisson equation in the
hyperplane coordinates, and relative-entropy / moment inequalities.
"""

from dataclasses import dataclass
from itertools import product

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import minimize

from .errors import CompatibilityError, ConfigError, ResolutionError
from .gibbs import masked_site_cf, microcanonical_expect
from .thermo import site_expectation, site_stats

# -- Hermite polynomials ---------------------------------------------------

_HERMITE = {
    3: lambda x: x ** 3 - 3.0 * x,
    4: lambda x: x ** 4 - 6.0 * x ** 2 + 3.0,
    6: lambda x: x ** 6 - 15.0 * x ** 4 + 45.0 * x ** 2 - 15.0,
}


def hermite(j: int, x):
    """Probabilists' Hermite polynomial H_j for j in {3, 4, 6}."""
    try:
        fn = _HERMITE[j]
    except KeyError:
        raise ConfigError(f"unsupported Hermite index {j}") from None
    out = fn(np.asarray(x, dtype=float))
    return float(out) if np.ndim(x) == 0 else out


# -- local CLT / Edgeworth expansion ----------------------------------------


@dataclass
class EdgeworthReport:
    n: int
    u1: float          # averaged site mean
    u2: float          # sqrt of averaged variance
    skew_ratio: float  # averaged kappa3 / u2^3
    kurt_ratio: float  # averaged kappa4 / u2^4
    grid: np.ndarray
    density: np.ndarray
    err_order0: float
    err_order1: float
    err_order2: float


def _phi(x):
    return np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)


def edgeworth_check(tau_vector, sigma, beta, pot, xmax=10.0, m_grid=4096) -> EdgeworthReport:
    """Standardised block-sum density versus its expansion orders.

    The density of sum_j (r_j - u1) / (u2 sqrt(n)) is built from the
    product of per-site characteristic functions and inverted on a uniform
    grid; sup-norm errors are reported against phi, phi(1 + Q1/sqrt(n)),
    and phi(1 + Q1/sqrt(n) + Q2/n) with

        Q1 = (1/3!) g1 H3,  Q2 = (1/4!) g2 H4 + (1/(2*3!^2)) g1^2 H6,

    where g1, g2 are the averaged skewness and excess-kurtosis ratios.
    """
    tau_vector = np.atleast_1d(np.asarray(tau_vector, dtype=float))
    n = tau_vector.size
    if n < 2:
        raise ConfigError("need n >= 2 sites")
    uniq, inverse = np.unique(tau_vector, return_inverse=True)
    counts = np.bincount(inverse, minlength=uniq.size)
    log_z, mean, mu2, mu3, mu4 = site_stats(pot, beta, sigma, uniq, nmom=4)
    mean = np.atleast_1d(mean)
    mu2 = np.atleast_1d(mu2)
    mu3 = np.atleast_1d(mu3)
    mu4 = np.atleast_1d(mu4)
    k2 = float(np.dot(counts, mu2)) / n
    k3 = float(np.dot(counts, mu3)) / n
    k4 = float(np.dot(counts, mu4 - 3.0 * mu2 ** 2)) / n
    u1 = float(np.dot(counts, mean)) / n
    u2 = np.sqrt(k2)
    g1 = k3 / u2 ** 3
    g2 = k4 / u2 ** 4

    # density of the standardised sum on [-xmax, xmax)
    grid = np.linspace(-xmax, xmax, m_grid, endpoint=False)
    du = grid[1] - grid[0]
    ell = np.fft.fftfreq(m_grid) * m_grid
    xi = 2.0 * np.pi * ell / (m_grid * du)
    scale = 1.0 / (u2 * np.sqrt(n))
    cf = np.ones(m_grid, dtype=complex)
    for tau_u, cnt, mu in zip(uniq, counts, mean):
        phi_site = masked_site_cf(pot, beta, sigma, float(tau_u), xi * scale, center=float(mu))
        shift = np.exp(1j * xi * scale * (mu - u1))
        cf *= (phi_site * shift) ** int(cnt)
    cf_shifted = cf * np.exp(1j * xi * (0.0 - grid[0]))
    dens = np.real(np.fft.fft(cf_shifted)) / (m_grid * du)

    total = float(np.trapezoid(dens, grid))
    if abs(total - 1.0) > 1e-7:
        raise ResolutionError(f"standardised density normalisation off by {total - 1.0:.3g}")
    if float(dens.min()) < -1e-9:
        raise ResolutionError("standardised density significantly negative")

    base = _phi(grid)
    q1 = g1 / 6.0 * hermite(3, grid)
    q2 = g2 / 24.0 * hermite(4, grid) + g1 ** 2 / 72.0 * hermite(6, grid)
    e0 = float(np.max(np.abs(dens - base)))
    e1 = float(np.max(np.abs(dens - base * (1.0 + q1 / np.sqrt(n)))))
    e2 = float(np.max(np.abs(dens - base * (1.0 + q1 / np.sqrt(n) + q2 / n))))
    return EdgeworthReport(
        n=n, u1=u1, u2=float(u2), skew_ratio=float(g1), kurt_ratio=float(g2),
        grid=grid, density=np.maximum(dens, 0.0),
        err_order0=e0, err_order1=e1, err_order2=e2,
    )


# -- equivalence of ensembles -----------------------------------------------


def ee_gap(F, k, n, tau_profile, sigma, beta, pot):
    """(gap, bound): micro-canonical vs canonical expectation of F.

    gap = |<F | u_n> - E[F]| at the canonical block mean u_n; the companion
    bound is (k/n) sqrt(Var(F)), so gap*n/k over sqrt(Var) stays O(1).
    Only cylinder functions of the first k <= 2 sites are supported.
    """
    tau_profile = np.asarray(tau_profile, dtype=float)
    if tau_profile.size != n:
        raise ConfigError("tau_profile length must equal n")
    _, means = site_stats(pot, beta, sigma, tau_profile, nmom=1)
    u_n = float(np.mean(means))
    cond = microcanonical_expect(F, tau_profile, sigma, beta, u_n, k, pot)
    if k == 1:
        e_f = site_expectation(pot, beta, sigma, float(tau_profile[0]), F)
        e_f2 = site_expectation(pot, beta, sigma, float(tau_profile[0]), lambda r: F(r) ** 2)
    else:
        raise ConfigError("ee_gap implemented for k = 1 cylinder functions")
    var = max(e_f2 - e_f ** 2, 0.0)
    gap = abs(cond - e_f)
    bound = k / n * np.sqrt(var)
    return gap, bound


# -- sub-Gaussian order -------------------------------------------------------


@dataclass
class SubGaussianReport:
    order: float           # estimated sigma^2
    variance: float
    mgf_finite: bool
    abs_bound_ok: bool
    tail_bound_ok: bool
    s_grid: np.ndarray
    lambda_grid: np.ndarray

    @property
    def ok(self):
        return self.mgf_finite and self.abs_bound_ok and self.tail_bound_ok


def subgaussian_order(x, pdf, s_max, n_s=201, lambda_max=6.0, n_lambda=61,
                      compact_support=False) -> SubGaussianReport:
    """Estimate the sub-Gaussian order of the centred law given on a grid.

    order = max over the s-grid of 2 log E[exp(s X*)] / s^2; the report also
    checks E[exp(s|X*|)] <= (1+|s|)/(1-|s|) exp(order*|s|/2) for |s| < 1 and
    the Chernoff tail P(|X*| >= lambda) <= 2 exp(-lambda^2 / (2 order)).

    Grids are taken to truncate an unbounded density unless compact_support
    is set; a tilted integrand that has not decayed at the window edge is
    then reported as a divergent (not-sub-Gaussian) moment generating
    function.
    """
    x = np.asarray(x, dtype=float)
    pdf = np.asarray(pdf, dtype=float)
    norm = np.trapezoid(pdf, x)
    pdf = pdf / norm
    mean = float(np.trapezoid(x * pdf, x))
    xc = x - mean
    var = float(np.trapezoid(xc ** 2 * pdf, x))

    s_grid = np.linspace(-s_max, s_max, n_s)
    ratios = np.empty(n_s)
    finite = True
    for i, s in enumerate(s_grid):
        if s == 0.0:
            ratios[i] = var
            continue
        integrand = pdf * np.exp(s * xc)
        tail = max(integrand[0], integrand[-1])
        truncated = (not compact_support) and tail > 1e-13 * max(integrand.max(), 1e-300)
        if not np.isfinite(integrand).all() or truncated:
            finite = False
            ratios[i] = np.inf
            continue
        mgf = float(np.trapezoid(integrand, x))
        ratios[i] = 2.0 * np.log(mgf) / s ** 2
    order = float(np.max(ratios))

    abs_ok, tail_ok = False, False
    lam_grid = np.linspace(0.0, lambda_max, n_lambda)
    if finite and np.isfinite(order) and order > 0:
        abs_ok = True
        for s in np.linspace(-0.95, 0.95, 39):
            if s == 0.0:
                continue
            lhs = float(np.trapezoid(pdf * np.exp(abs(s) * np.abs(xc)), x))
            rhs = (1 + abs(s)) / (1 - abs(s)) * np.exp(order * abs(s) / 2.0)
            if lhs > rhs * (1 + 1e-10):
                abs_ok = False
                break
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (pdf[1:] + pdf[:-1]) * np.diff(x))])
        cdf /= cdf[-1]
        tail_ok = True
        for lam in lam_grid:
            below = np.interp(mean - lam, x, cdf)
            above = 1.0 - np.interp(mean + lam, x, cdf)
            if below + above > 2.0 * np.exp(-lam ** 2 / (2.0 * order)) + 1e-12:
                tail_ok = False
                break
    return SubGaussianReport(
        order=order, variance=var, mgf_finite=finite,
        abs_bound_ok=abs_ok, tail_bound_ok=tail_ok,
        s_grid=s_grid, lambda_grid=lam_grid,
    )


def stretch_pdf_grid(pot, beta, sigma, tau, span_std=16.0, npts=8001):
    """(x, pdf) grid for the one-site stretch law, for sub-Gaussian checks."""
    log_z, mean, var = site_stats(pot, beta, sigma, tau, nmom=2)
    sd = np.sqrt(var)
    x = np.linspace(mean - span_std * sd, mean + span_std * sd, npts)
    pdf = np.exp(-beta * (0.5 * x * x + sigma * pot.u(x) - tau * x) - log_z)
    return x, pdf


# -- smallest eigenvalue of the stiffness tridiagonal -------------------------


def eig_bound(b, c):
    """(lambda_min, bound, ok) for the (n-1)x(n-1) stiffness tridiagonal.

    The matrix has diagonal b_j + b_{j+1} and off-diagonal -b_{j+1}; with
    all b_j >= c > 0 the smallest eigenvalue is bounded below by
    6c/((n-1)(n+1)).
    """
    b = np.asarray(b, dtype=float)
    n = b.size
    if n < 2:
        raise ConfigError("need at least two sites")
    if c <= 0 or np.any(b < c - 1e-15):
        raise ConfigError("requires b_j >= c > 0 for all j")
    diag = b[:-1] + b[1:]
    if n == 2:
        lam_min = float(diag[0])
    else:
        off = -b[1:-1]
        lam_min = float(eigh_tridiagonal(diag, off, select="i", select_range=(0, 0))[0][0])
    bound = 6.0 * c / ((n - 1.0) * (n + 1.0))
    return lam_min, bound, lam_min >= bound - 1e-12


# -- Poisson equation in hyperplane coordinates -------------------------------


@dataclass
class PoissonProblem:
    """Setup for the hyperplane Poisson equation in y-coordinates.

    ell sites give an (ell-1)-dimensional problem.  v/v1/v2 are the convex
    site potential and derivatives with inf v'' = c > 0; a is the linear
    tilt vector (length ell); psi_rhs(y...) is the right-hand side as a
    vectorised callable of the ell-1 coordinate arrays; y_star is the fixed
    hyperplane parameter.
    """

    ell: int
    v: callable
    v1: callable
    v2: callable
    c: float
    a: np.ndarray
    psi_rhs: callable
    y_star: float = 0.0
    points: int = 128
    halfwidth: float = None

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)
        if self.ell not in (2, 3, 4):
            raise ConfigError("ell must be 2, 3 or 4")
        if self.a.size != self.ell:
            raise ConfigError("tilt vector must have length ell")
        if self.c <= 0:
            raise ConfigError("need inf v'' = c > 0")


@dataclass
class PoissonResult:
    psi: np.ndarray
    grad_max: float
    rhs_grad_max: float
    lam: float
    wu_bound_ok: bool
    residual: float
    grids: tuple


def _site_values(problem, mesh):
    """x_j(y) arrays for j = 1..ell from the coordinate change."""
    d = problem.ell - 1
    xs = [-mesh[0]]
    for j in range(1, d):
        xs.append(mesh[j - 1] - mesh[j])
    xs.append(mesh[d - 1] - problem.y_star)
    return xs


def _u_tilde(problem, mesh):
    xs = _site_values(problem, mesh)
    u = sum(problem.v(xj) for xj in xs)
    for j in range(problem.ell - 1):
        u = u + (problem.a[j] - problem.a[j + 1]) * mesh[j]
    return u


def _grad_max_fd(f, h):
    """Max Euclidean norm of the FD gradient (central interior, one-sided edges)."""
    total = np.zeros_like(f)
    for ax in range(f.ndim):
        g = np.gradient(f, h, axis=ax)
        total += g ** 2
    return float(np.sqrt(total.max()))


ACTIVE_WEIGHT_CUT = 1e-14


def poisson_solve(problem: PoissonProblem, rtol=1e-12) -> PoissonResult:
    """Solve grad(U).grad(psi) - Lap(psi) = Psi on the resolved-mass region.

    Symmetric finite-volume discretisation of -e^U div(e^-U grad psi) with
    geometric-mean face weights, restricted to the nodes where the weight
    e^-U exceeds 1e-14 of its peak (the measure beyond is unresolvable in
    double precision and carries no mass).  The system is solved in the
    similarity-transformed variable phi = sqrt(w) psi, whose matrix has
    O(1/h^2) entries and known kernel sqrt(w); CG (AMG-preconditioned for
    large grids) with the right-hand side projected onto the compatibility
    space, then gauge-fixed to zero weighted mean.  The Wu gradient
    inequality |grad psi| <= sup|grad Psi| / lambda is checked with lambda
    from the stiffness eigenvalue bound at the grid-wide infimum of v''.
    """
    d = problem.ell - 1
    if problem.halfwidth is None:
        lam_est = eig_bound(np.full(problem.ell, problem.c), problem.c)[0]
        halfwidth = np.sqrt(2.0 * np.log(1e13) / lam_est)
    else:
        halfwidth = problem.halfwidth

    def u_scalar(y):
        return float(_u_tilde(problem, [np.asarray(v) for v in y]))

    def u_grad(y):
        xs = _site_values(problem, list(np.asarray(y)))
        v1 = [float(problem.v1(xj)) for xj in xs]
        return np.array([
            -v1[j] + v1[j + 1] + (problem.a[j] - problem.a[j + 1]) for j in range(d)
        ])

    res = minimize(u_scalar, np.zeros(d), jac=u_grad, method="BFGS",
                   options={"gtol": 1e-12})
    center = res.x
    axes = [np.linspace(center[j] - halfwidth, center[j] + halfwidth, problem.points)
            for j in range(d)]
    h = axes[0][1] - axes[0][0]
    mesh = np.meshgrid(*axes, indexing="ij")
    u = _u_tilde(problem, mesh)
    u = u - u.min()
    w = np.exp(-u)
    shape = w.shape
    # tail requirement: density must be resolved inside the box faces
    edge = np.zeros(shape, dtype=bool)
    for ax in range(d):
        sl = [slice(None)] * d
        sl[ax] = 0
        edge[tuple(sl)] = True
        sl[ax] = -1
        edge[tuple(sl)] = True
    if w[edge].max() > 1e-12:
        raise ConfigError("grid does not resolve the exp(-U) mass (tail > 1e-12 at boundary)")

    active = w >= ACTIVE_WEIGHT_CUT
    wflat = w.ravel()
    act = active.ravel()
    local = -np.ones(w.size, dtype=np.int64)
    local[act] = np.arange(int(act.sum()))
    size = int(act.sum())

    rhs_vals = np.asarray(problem.psi_rhs(*mesh), dtype=float)
    wsum = wflat[act].sum()
    rhs_vals = rhs_vals - (w * np.where(active, rhs_vals, 0.0)).sum() / wsum
    rflat = rhs_vals.ravel()

    # symmetrised operator: off-diagonal -1/h^2, diagonal sum of weight ratios
    idx = np.arange(w.size).reshape(shape)
    rows, cols, vals = [], [], []
    diag = np.zeros(size)
    sqw = np.sqrt(wflat)
    for ax in range(d):
        sl_lo = [slice(None)] * d
        sl_hi = [slice(None)] * d
        sl_lo[ax] = slice(0, -1)
        sl_hi[ax] = slice(1, None)
        i_lo = idx[tuple(sl_lo)].ravel()
        i_hi = idx[tuple(sl_hi)].ravel()
        keep = act[i_lo] & act[i_hi]
        i_lo, i_hi = i_lo[keep], i_hi[keep]
        a_lo, a_hi = local[i_lo], local[i_hi]
        rows.extend([a_lo, a_hi])
        cols.extend([a_hi, a_lo])
        vals.extend([np.full(a_lo.size, -1.0 / h ** 2)] * 2)
        np.add.at(diag, a_lo, sqw[i_hi] / sqw[i_lo] / h ** 2)
        np.add.at(diag, a_hi, sqw[i_lo] / sqw[i_hi] / h ** 2)
    rows.append(np.arange(size))
    cols.append(np.arange(size))
    vals.append(diag)
    A_sym = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(size, size),
    )
    phi0 = sqw[act]
    phi0 = phi0 / np.linalg.norm(phi0)
    b = sqw[act] * rflat[act]
    b = b - np.dot(phi0, b) * phi0  # exact discrete compatibility

    if size > 20000:
        import pyamg

        ml = pyamg.smoothed_aggregation_solver(A_sym, max_coarse=300)
        M = ml.aspreconditioner(cycle="V")
    else:
        M = None
    phi, info = spla.cg(A_sym, b, rtol=rtol, atol=0.0, maxiter=4000, M=M)
    if info != 0:
        raise CompatibilityError(f"CG failed to converge (info={info})")
    phi = phi - np.dot(phi0, phi) * phi0
    residual = float(np.linalg.norm(A_sym @ phi - b) / max(np.linalg.norm(b), 1e-300))

    psi_act = phi / sqw[act]
    psi_act = psi_act - np.dot(wflat[act], psi_act) / wsum
    psi_grid = np.full(w.size, np.nan)
    psi_grid[act] = psi_act
    psi_grid = psi_grid.reshape(shape)

    # Gradients are reported on the resolved-mass region w >= 1e-12; the
    # 1e-14..1e-12 shell is solved too but serves as a buffer absorbing the
    # zero-flux boundary layer of the domain truncation.
    core = active & (w >= 1e-12)
    for ax in range(d):
        core &= np.roll(active, 1, axis=ax) & np.roll(active, -1, axis=ax)
        sl = [slice(None)] * d
        sl[ax] = [0, -1]
        core[tuple(sl)] = False

    def grad_sq(fgrid):
        total = np.zeros(shape)
        for ax in range(d):
            gplus = np.roll(fgrid, -1, axis=ax)
            gminus = np.roll(fgrid, 1, axis=ax)
            total += ((gplus - gminus) / (2 * h)) ** 2
        return total

    g_psi = grad_sq(psi_grid)
    g_rhs = grad_sq(rhs_vals)
    grad_max = float(np.sqrt(np.nanmax(np.where(core, g_psi, np.nan))))
    rhs_grad_max = float(np.sqrt(np.nanmax(np.where(core, g_rhs, np.nan))))

    xs = _site_values(problem, mesh)
    b_inf = np.array([float(np.min(problem.v2(xj))) for xj in xs])
    lam = eig_bound(np.maximum(b_inf, 1e-300), float(min(b_inf.min(), problem.c)))[0]
    wu_ok = grad_max <= rhs_grad_max / lam * (1 + 1e-9) + 1e-10
    return PoissonResult(
        psi=psi_grid, grad_max=grad_max, rhs_grad_max=rhs_grad_max,
        lam=lam, wu_bound_ok=bool(wu_ok), residual=residual, grids=tuple(axes),
    )


# -- relative entropy and moment inequalities ---------------------------------


def rel_entropy_grid(x, mu_pdf, f_rel):
    """H(f; mu) = int f log f dmu for a relative density f on a grid."""
    x = np.asarray(x, dtype=float)
    mu_pdf = np.asarray(mu_pdf, dtype=float)
    f = np.asarray(f_rel, dtype=float)
    if np.any((f > 1e-12) & (mu_pdf <= 0)):
        return np.inf
    term = np.where(f > 0, f * np.log(np.maximum(f, 1e-300)), 0.0)
    return float(np.trapezoid(mu_pdf * term, x))


def gaussian_kl(m1, v1, m0, v0):
    """H(N(m1,v1); N(m0,v0)) in closed form."""
    return float(0.5 * (np.log(v0 / v1) + (v1 + (m1 - m0) ** 2) / v0 - 1.0))


def entropy_event_bound(h_val, mu_event, f_event):
    """Check int_A f dmu <= (H + log 2) / (-log mu(A))."""
    if not 0 < mu_event < 1:
        raise ConfigError("event must have mu-probability in (0, 1)")
    rhs = (h_val + np.log(2.0)) / (-np.log(mu_event))
    return f_event <= rhs + 1e-12, rhs


def entropy_observable_bound(h_val, f_mean_x, log_mgf, alpha_grid):
    """Check int f X dmu <= (1/a)(H + log E_mu[e^{aX}]) over an alpha grid."""
    ok = True
    details = []
    for a in alpha_grid:
        if a <= 0:
            raise ConfigError("alpha grid must be positive")
        rhs = (h_val + log_mgf(a)) / a
        details.append((a, rhs))
        if f_mean_x > rhs + 1e-12:
            ok = False
    return ok, details


def moment_from_tail_bound(c_const, q, p, e_abs_p):
    """Check E|X|^p <= K_{p,q} C^{p/q} with K = q/(q-p) for tail C/lambda^q."""
    if not 1 <= p < q:
        raise ConfigError("need 1 <= p < q")
    k_pq = q / (q - p)
    bound = k_pq * c_const ** (p / q)
    return e_abs_p <= bound + 1e-12, bound

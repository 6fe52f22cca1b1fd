import os

import numpy as np
import pytest
from scipy.linalg import expm

from chainlab import dynamics as dyn
from chainlab.errors import BlowUpError, ConfigError
from chainlab.gibbs import GibbsSpec, sample_chain
from chainlab.potentials import ONE_MINUS_COS, ZERO, ModelParams, Potential
from chainlab.rng import derive_stream


def _params(n, beta=1.0, sigma=0.0, gamma=1.0, pot=ZERO, **kw):
    return dyn.SimParams(model=ModelParams(beta, sigma, gamma), n=n, pot=pot, **kw)


def _random_state(n, seed=0, tag="dyn"):
    rng = derive_stream(seed, 0, tag)
    return dyn.ChainState(n, rng.standard_normal(n), rng.standard_normal(n), rng=rng)


def _wave_matrix(n):
    """2n x 2n generator of the deterministic harmonic flow, sigma = 0."""
    shift = np.roll(np.eye(n), 1, axis=1)  # (shift @ x)_i = x_{i+1}
    m = np.zeros((2 * n, 2 * n))
    m[:n, n:] = n * (shift - np.eye(n))          # dp_i = n (r_{i+1} - r_i)
    m[n:, :n] = n * (np.eye(n) - shift.T)        # dr_i = n (p_i - p_{i-1})
    return m


class TestDriftFields:
    def test_constant_state_zero_drift(self):
        n = 16
        st = dyn.ChainState(n, np.full(n, 0.7), np.full(n, -1.2))
        dp, dr = dyn.drift_fields(st, _params(n, sigma=0.2, gamma=2.0, pot=ONE_MINUS_COS))
        assert np.max(np.abs(dp)) == 0.0
        assert np.max(np.abs(dr)) == 0.0

    def test_telescoping_sums(self):
        n = 33
        st = _random_state(n, seed=1)
        dp, dr = dyn.drift_fields(st, _params(n, sigma=0.3, gamma=1.5, pot=ONE_MINUS_COS))
        assert abs(dp.sum()) <= 1e-12 * n
        assert abs(dr.sum()) <= 1e-12 * n

    def test_matrix_oracle_single_mode(self):
        n = 4
        x = np.arange(n) / n
        st = dyn.ChainState(n, np.cos(2 * np.pi * x), np.sin(2 * np.pi * x))
        dp, dr = dyn.drift_fields(st, _params(n, gamma=0.0))
        vec = _wave_matrix(n) @ np.concatenate([st.p, st.r])
        assert np.allclose(np.concatenate([dp, dr]), vec, rtol=0, atol=1e-13)


class TestIntegrator:
    def test_matrix_exponential_oracle(self):
        # deterministic harmonic case against the eigendecomposition flow
        n, t_end, dt = 8, 0.1, 1e-5
        st = _random_state(n, seed=2)
        z0 = np.concatenate([st.p, st.r])
        params = _params(n, gamma=0.0)
        dyn.advance(st, params, dt, int(round(t_end / dt)))
        exact = expm(_wave_matrix(n) * t_end) @ z0
        err = np.max(np.abs(np.concatenate([st.p, st.r]) - exact))
        assert err <= 1e-6

    def test_conservation_per_step(self):
        n = 64
        st = _random_state(n, seed=3)
        params = _params(n, sigma=0.2, gamma=2.0, pot=ONE_MINUS_COS)
        for _ in range(50):
            p0, r0 = dyn.conserved_totals(st)
            dyn.step(st, params)
            p1, r1 = dyn.conserved_totals(st)
            assert abs(p1 - p0) / n <= 1e-14
            assert abs(r1 - r0) / n <= 1e-14

    @pytest.mark.parametrize("scheme", ["strang", "euler_maruyama"])
    @pytest.mark.parametrize("conv", ["generator", "sde-display"])
    def test_conservation_both_schemes_and_conventions(self, scheme, conv):
        n = 32
        st = _random_state(n, seed=4, tag=f"{scheme}-{conv}")
        params = _params(n, sigma=0.1, gamma=1.0, pot=ONE_MINUS_COS,
                         scheme=scheme, index_convention=conv)
        p0, r0 = dyn.conserved_totals(st)
        dyn.run(st, params, 0.2)
        p1, r1 = dyn.conserved_totals(st)
        assert abs(p1 - p0) / n <= 1e-13
        assert abs(r1 - r0) / n <= 1e-13

    def test_deterministic_repeat_bitwise(self):
        n = 32
        out = []
        for _ in range(2):
            rng = derive_stream(9, 0, "repeat")
            st = dyn.ChainState(n, np.zeros(n), np.zeros(n), rng=rng)
            st.p[0] = 1.0
            dyn.run(st, _params(n, sigma=0.2, gamma=1.0, pot=ONE_MINUS_COS), 0.1)
            out.append((st.p.copy(), st.r.copy()))
        assert np.array_equal(out[0][0], out[1][0])
        assert np.array_equal(out[0][1], out[1][1])

    def test_verlet_reversibility(self):
        n = 32
        st = _random_state(n, seed=5)
        ref_p, ref_r = st.p.copy(), st.r.copy()
        params = _params(n, sigma=0.3, gamma=0.0, pot=ONE_MINUS_COS)
        dt = params.dt_macro
        nsteps = 200
        dyn.advance(st, params, dt, nsteps)
        dyn.advance(st, params, -dt, nsteps)
        assert np.max(np.abs(st.p - ref_p)) <= 1e-12
        assert np.max(np.abs(st.r - ref_r)) <= 1e-12

    def test_blowup_reports_site(self):
        n = 16
        st = _random_state(n, seed=6)
        st.p[7] = np.inf
        with pytest.raises(BlowUpError) as exc:
            dyn.step(st, _params(n, gamma=0.0))
        assert exc.value.site is not None

    def test_run_requires_future_time(self):
        st = _random_state(8, seed=7)
        st.t = 1.0
        with pytest.raises(ConfigError):
            dyn.run(st, _params(8), 0.5)

    def test_cfl_validation(self):
        with pytest.raises(ConfigError):
            dyn.SimParams(model=ModelParams(1.0, 0.0, 1.0), n=64, dt_macro=1.0)


class TestStatisticalProperties:
    def test_equilibrium_moments_stationary(self):
        # harmonic chain started from its product Gibbs state: first and
        # second marginal moments unchanged within 4 SE over 200 replicas
        n, reps, beta = 32, 200, 1.0
        mp, vp, mr, vr = [], [], [], []
        for k in range(reps):
            rng = derive_stream(11, k, "equil")
            spec = GibbsSpec(beta=beta, sigma=0.0, pbar_profile=np.zeros(n),
                             tau_profile=np.zeros(n))
            st = sample_chain(spec, rng, ZERO)
            dyn.run(st, _params(n, beta=beta, gamma=1.0), 1.0)
            mp.append(st.p.mean())
            vp.append(st.p.var(ddof=1))
            mr.append(st.r.mean())
            vr.append(st.r.var(ddof=1))
        for vals, target in ((mp, 0.0), (vp, 1 / beta), (mr, 0.0), (vr, 1 / beta)):
            vals = np.asarray(vals)
            se = vals.std(ddof=1) / np.sqrt(reps)
            assert abs(vals.mean() - target) <= 4 * se

    def test_energy_not_conserved_with_noise(self):
        n, reps = 32, 200
        deltas = []
        params = _params(n, gamma=1.0)
        for k in range(reps):
            rng = derive_stream(12, k, "energy")
            spec = GibbsSpec(beta=1.0, sigma=0.0, pbar_profile=np.zeros(n),
                             tau_profile=np.zeros(n))
            st = sample_chain(spec, rng, ZERO)
            e0 = dyn.energy(st, params)
            dyn.run(st, params, 1.0)
            deltas.append(abs(dyn.energy(st, params) - e0))
        assert np.mean(deltas) > 1e-3  # strictly positive, far above roundoff

    def test_energy_conserved_without_noise(self):
        # Verlet keeps H inside an O((n dt)^2) band without drift
        n = 32
        st = _random_state(n, seed=13)
        params = _params(n, sigma=0.2, gamma=0.0, pot=ONE_MINUS_COS)
        e0 = dyn.energy(st, params)
        dyn.run(st, params, 1.0)
        assert abs(dyn.energy(st, params) - e0) <= 1e-2 * max(1.0, abs(e0))


def _refine_noise(noise, rng):
    """Brownian-bridge refinement of unit half-step increments to dt/2."""
    k, two, n = noise.shape
    z = rng.standard_normal((k, 2, n))
    out = np.empty((2 * k, 2, n))
    out[0::2, 0] = (noise[:, 0] + z[:, 0]) / np.sqrt(2.0)
    out[0::2, 1] = (noise[:, 0] - z[:, 0]) / np.sqrt(2.0)
    out[1::2, 0] = (noise[:, 1] + z[:, 1]) / np.sqrt(2.0)
    out[1::2, 1] = (noise[:, 1] - z[:, 1]) / np.sqrt(2.0)
    return out


class TestStrongConvergence:
    def test_order_at_least_08(self):
        n, t_end = 16, 0.1
        params = _params(n, gamma=1.0)
        dt0 = params.dt_macro
        nsteps0 = int(round(t_end / dt0))
        rng = derive_stream(21, 0, "strong")
        spec = GibbsSpec(beta=1.0, sigma=0.0, pbar_profile=np.zeros(n),
                         tau_profile=np.zeros(n))
        st0 = sample_chain(spec, rng, ZERO)

        levels = 5
        noises = [rng.standard_normal((nsteps0, 2, n))]
        for _ in range(levels - 1):
            noises.append(_refine_noise(noises[-1], rng))

        ends = []
        for lev, noise in enumerate(noises):
            st = st0.copy()
            dt = dt0 / 2 ** lev
            dyn.advance(st, params, dt, nsteps0 * 2 ** lev, noise=noise)
            ends.append(np.concatenate([st.p, st.r]))
        ref = ends[-1]
        errs = [np.linalg.norm(e - ref) for e in ends[:-1]]
        rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert rates.mean() >= 0.8


class TestBackends:
    @pytest.mark.skipif(not dyn.HAVE_COMPILED, reason="compiled core not built")
    def test_backends_bitwise_identical_harmonic(self):
        n = 64
        params_c = _params(n, gamma=2.0, backend="compiled")
        params_n = _params(n, gamma=2.0, backend="numpy")
        res = {}
        for name, params in (("c", params_c), ("n", params_n)):
            rng = derive_stream(31, 0, "backend")
            st = dyn.ChainState(n, np.zeros(n), np.zeros(n), rng=rng)
            st.p[3] = 0.5
            dyn.run(st, params, 0.05)
            res[name] = (st.p.copy(), st.r.copy())
        assert np.array_equal(res["c"][0], res["n"][0])
        assert np.array_equal(res["c"][1], res["n"][1])

    @pytest.mark.skipif(not dyn.HAVE_COMPILED, reason="compiled core not built")
    @pytest.mark.parametrize("scheme", ["strang", "euler_maruyama"])
    def test_backends_agree_anharmonic(self, scheme):
        n = 48
        res = {}
        for backend in ("compiled", "numpy"):
            rng = derive_stream(32, 0, "backend-anh")
            st = dyn.ChainState(n, np.zeros(n), np.zeros(n), rng=rng)
            st.r[5] = 0.8
            params = _params(n, sigma=0.3, gamma=1.0, pot=ONE_MINUS_COS,
                             backend=backend, scheme=scheme)
            dyn.run(st, params, 0.05)
            res[backend] = (st.p.copy(), st.r.copy())
        for k in range(2):
            assert np.max(np.abs(res["compiled"][k] - res["numpy"][k])) <= 1e-12

    def test_user_potential_runs_and_conserves(self):
        pot = Potential.register(u=lambda r: r - np.sin(r),
                                 u1=lambda r: 1 - np.cos(r), u2=np.sin)
        n = 32
        st = _random_state(n, seed=33)
        params = _params(n, sigma=0.2, gamma=1.0, pot=pot)
        assert dyn.backend_name(params) == "numpy"
        p0, r0 = dyn.conserved_totals(st)
        dyn.run(st, params, 0.1)
        p1, r1 = dyn.conserved_totals(st)
        assert abs(p1 - p0) / n <= 1e-13
        assert abs(r1 - r0) / n <= 1e-13


class TestSnapshots:
    def test_csv_and_binary_round_trip(self, tmp_path):
        n = 8
        st = _random_state(n, seed=41)
        params = _params(n, gamma=1.0)
        snaps = [st.copy()]
        dyn.run(st, params, 0.05, observers=(lambda s: snaps.append(s.copy()),))
        bin_path = os.path.join(tmp_path, "frames.bin")
        dyn.write_frames(bin_path, snaps)
        loaded = dyn.read_frames(bin_path)
        assert len(loaded) == len(snaps)
        for a, b in zip(snaps, loaded):
            assert a.t == b.t
            assert np.array_equal(a.p, b.p)
            assert np.array_equal(a.r, b.r)
        csv_path = os.path.join(tmp_path, "snaps.csv")
        dyn.write_snapshot_csv(csv_path, snaps)
        from chainlab.sim_io import read_csv_columns

        cols = read_csv_columns(csv_path)
        assert cols["p"].size == len(snaps) * n
        # 17-significant-digit formatting round-trips float64 exactly
        assert cols["p"][-n:] == pytest.approx(snaps[-1].p, abs=0)

    def test_observer_schedule(self):
        n = 8
        st = _random_state(n, seed=42)
        times = []
        dyn.run(st, _params(n, gamma=1.0), 0.1,
                observers=(lambda s: times.append(s.t),), obs_interval=0.02)
        assert times[0] == 0.0
        assert len(times) == 6
        assert times[-1] == pytest.approx(0.1, abs=1e-12)

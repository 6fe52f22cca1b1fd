import numpy as np
import pytest

from chainlab.errors import BlowUpError
from chainlab.psystem import (
    Profile,
    RiemannState,
    TensionIntegral,
    make_profile,
    shock_time_bound,
    shock_time_bound_from_curve,
    solve_backward,
    solve_linear,
    solve_quasilinear,
    spectral_derivative,
    trig_interp,
)
from chainlab.rng import derive_stream
from chainlab.thermo import ThermoCurve, loglog_slope
from chainlab.potentials import ONE_MINUS_COS


def _random_band_limited(m, rng, amp=0.3, kmax=3):
    p_modes = [(k, amp * rng.uniform(0.3, 1.0), rng.uniform(0, 2 * np.pi))
               for k in range(1, kmax + 1)]
    r_modes = [(k, amp * rng.uniform(0.3, 1.0), rng.uniform(0, 2 * np.pi))
               for k in range(1, kmax + 1)]
    return make_profile(m, p_modes=p_modes, r_modes=r_modes)


class TestLinearSolver:
    def test_standing_wave(self):
        m = 256
        prof = make_profile(m, p_modes=[(1, 1.0, 0.0)])
        for t in (0.1, 0.37, 1.0):
            out = solve_linear(prof, t)
            x = prof.x
            assert np.max(np.abs(out.p - np.cos(2 * np.pi * x) * np.cos(2 * np.pi * t))) <= 1e-10
            assert np.max(np.abs(out.r + np.sin(2 * np.pi * x) * np.sin(2 * np.pi * t))) <= 1e-10

    def test_constant_data_fixed(self):
        m = 64
        prof = Profile(m, np.full(m, 0.3), np.full(m, -0.7))
        out = solve_linear(prof, 0.8)
        assert np.allclose(out.p, prof.p, rtol=0, atol=1e-14)
        assert np.allclose(out.r, prof.r, rtol=0, atol=1e-14)

    def test_energy_isometry(self):
        rng = derive_stream(3, 0, "lin")
        prof = _random_band_limited(128, rng)
        e0 = np.mean(prof.p ** 2 + prof.r ** 2)
        out = solve_linear(prof, 0.61)
        e1 = np.mean(out.p ** 2 + out.r ** 2)
        assert abs(e1 - e0) <= 1e-12 * max(1.0, e0)


class TestRiemannMachinery:
    def test_round_trip(self, curve_anh02):
        fint = TensionIntegral(curve_anh02)
        rng = derive_stream(4, 0, "riemann")
        prof = _random_band_limited(128, rng, amp=0.5)
        back = RiemannState.from_profile(prof, fint).to_profile()
        assert np.max(np.abs(back.p - prof.p)) <= 1e-10
        assert np.max(np.abs(back.r - prof.r)) <= 1e-10

    def test_integral_matches_speed(self, curve_anh02):
        fint = TensionIntegral(curve_anh02)
        # F' = sqrt(tension') via finite differences of F
        h = 1e-5
        for s in (-1.0, 0.2, 1.4):
            fd = (fint.F(s + h) - fint.F(s - h)) / (2 * h)
            assert fd == pytest.approx(np.sqrt(curve_anh02.tension_prime(s)), abs=1e-8)


class TestQuasilinear:
    def test_harmonic_reduction_matches_linear(self, curve_harmonic):
        rng = derive_stream(5, 0, "ql")
        prof = _random_band_limited(512, rng)
        sol = solve_quasilinear(prof, 0.5, curve_harmonic)
        lin = solve_linear(prof, 0.5)
        assert np.max(np.abs(sol.final.p - lin.p)) <= 1e-6
        assert np.max(np.abs(sol.final.r - lin.r)) <= 1e-6

    def test_maximum_principle(self, curve_anh02):
        rng = derive_stream(6, 0, "mp")
        prof = _random_band_limited(256, rng, amp=0.4)
        fint = TensionIntegral(curve_anh02)
        rs0 = RiemannState.from_profile(prof, fint)
        sol = solve_quasilinear(prof, 0.5, curve_anh02, fint=fint)
        u_fin, v_fin = sol.snapshots[-1]
        assert np.max(np.abs(u_fin)) <= np.max(np.abs(rs0.u)) + 1e-8
        assert np.max(np.abs(v_fin)) <= np.max(np.abs(rs0.v)) + 1e-8

    def test_deviation_from_linear_scales_with_sigma(self):
        rng = derive_stream(7, 0, "scal")
        prof = _random_band_limited(256, rng, amp=0.3)
        lin = solve_linear(prof, 0.5)
        sigmas = (0.1, 0.05, 0.025)
        devs = []
        for s in sigmas:
            curve = ThermoCurve.build(ONE_MINUS_COS, 1.0, s)
            sol = solve_quasilinear(prof, 0.5, curve)
            devs.append(np.max(np.abs(sol.final.p - lin.p)) +
                        np.max(np.abs(sol.final.r - lin.r)))
        slope = loglog_slope(sigmas, devs)
        assert slope == pytest.approx(1.0, abs=0.15)

    def test_grid_refinement_order(self, curve_anh02):
        rng = derive_stream(8, 0, "ref")
        base = _random_band_limited(128, rng, amp=0.4, kmax=2)
        finals = {}
        for m in (128, 256, 512):
            prof = Profile(m, trig_interp(base.p, np.arange(m) / m),
                           trig_interp(base.r, np.arange(m) / m))
            sol = solve_quasilinear(prof, 0.5, curve_anh02)
            finals[m] = sol.final
        # compare each to the finest on the coarse grid
        def restrict(fine, m):
            step = fine.m // m
            return fine.p[::step], fine.r[::step]

        p_ref_128, r_ref_128 = restrict(finals[512], 128)
        e128 = np.max(np.abs(finals[128].p - p_ref_128)) + np.max(np.abs(finals[128].r - r_ref_128))
        p_ref_256, r_ref_256 = restrict(finals[512], 256)
        e256 = np.max(np.abs(finals[256].p - p_ref_256)) + np.max(np.abs(finals[256].r - r_ref_256))
        assert e128 / e256 >= 8.0


class TestBackward:
    def test_harmonic_is_wave_evolution(self, curve_harmonic):
        rng = derive_stream(9, 0, "bw")
        prof = _random_band_limited(256, rng)
        forward = solve_quasilinear(prof, 0.5, curve_harmonic, store_every=0.05)
        h0 = make_profile(256, p_modes=[(1, 1.0, 0.3)], r_modes=[(2, 0.5, 1.1)])
        out = solve_backward(h0, (0.0, 0.5), curve_harmonic, forward)
        # with tension' = 1 the adjoint system is the linear p-system
        lin = solve_linear(h0, 0.5)
        assert np.max(np.abs(out.p - lin.p)) <= 1e-6
        assert np.max(np.abs(out.r - lin.r)) <= 1e-6

    def test_constant_field_fixed(self, curve_anh02):
        prof = make_profile(256, r_modes=[(1, 0.3, 0.0)])
        forward = solve_quasilinear(prof, 0.3, curve_anh02, store_every=0.01)
        h0 = Profile(256, np.full(256, 0.4), np.full(256, -0.2))
        out = solve_backward(h0, (0.0, 0.3), curve_anh02, forward)
        assert np.max(np.abs(out.p - 0.4)) <= 1e-12
        assert np.max(np.abs(out.r + 0.2)) <= 1e-12

    def test_adjoint_pairing_conserved_harmonic(self, curve_harmonic):
        # the pairing of a wave-evolved field with the co-evolved adjoint
        # test function is a constant of motion: <Y(t), h(t)> = <Y(0), H>
        rng = derive_stream(10, 0, "dual")
        y0 = _random_band_limited(256, rng)
        hterm = make_profile(256, p_modes=[(2, 1.0, 0.4)], r_modes=[(1, 0.8, 2.0)])
        t = 0.4
        y_t = solve_linear(y0, t)
        forward = solve_quasilinear(y0, t, curve_harmonic, store_every=0.05)
        h_t = solve_backward(hterm, (0.0, t), curve_harmonic, forward)
        lhs = np.mean(y_t.p * h_t.p + y_t.r * h_t.r)
        rhs = np.mean(y0.p * hterm.p + y0.r * hterm.r)
        assert lhs == pytest.approx(rhs, abs=1e-8)


class TestShockBound:
    def test_constant_speed_infinite(self):
        prof = make_profile(64, p_modes=[(1, 0.5, 0.0)])
        tb = shock_time_bound(prof, lambda r: np.ones_like(np.asarray(r, dtype=float)),
                              lambda r: np.zeros_like(np.asarray(r, dtype=float)))
        assert tb == np.inf

    def test_constant_data_infinite(self, curve_anh02):
        prof = Profile(64, np.full(64, 0.2), np.full(64, 0.1))
        assert shock_time_bound_from_curve(prof, curve_anh02) == np.inf

    def test_monotone_in_sigma(self):
        rng = derive_stream(11, 0, "shock")
        prof = _random_band_limited(128, rng, amp=0.4)
        bounds = []
        for s in (0.2, 0.1, 0.05):
            curve = ThermoCurve.build(ONE_MINUS_COS, 1.0, s)
            bounds.append(shock_time_bound_from_curve(prof, curve))
        assert bounds[0] < bounds[1] < bounds[2]

    def test_no_blowup_before_bound(self):
        # detector must stay silent strictly before T* (smooth regime)
        rng = derive_stream(12, 0, "noblow")
        curve = ThermoCurve.build(ONE_MINUS_COS, 1.0, 0.3)
        prof = _random_band_limited(128, rng, amp=0.5, kmax=2)
        tstar = shock_time_bound_from_curve(prof, curve)
        try:
            solve_quasilinear(prof, min(tstar, 3.0), curve)
        except BlowUpError as exc:
            pytest.fail(f"blow-up reported at t={exc.t} before T*={tstar}")


class TestSpectralHelpers:
    def test_derivative_exact_for_modes(self):
        m = 64
        x = np.arange(m) / m
        f = np.cos(2 * np.pi * 3 * x + 0.2)
        df = spectral_derivative(f)
        assert np.max(np.abs(df + 2 * np.pi * 3 * np.sin(2 * np.pi * 3 * x + 0.2))) <= 1e-9

    def test_trig_interp_band_limited(self):
        m = 16
        x = np.arange(m) / m
        f = 0.3 * np.cos(2 * np.pi * x) - 1.1 * np.sin(2 * np.pi * 2 * x)
        xt = np.linspace(0, 1, 101, endpoint=False)
        exact = 0.3 * np.cos(2 * np.pi * xt) - 1.1 * np.sin(2 * np.pi * 2 * xt)
        assert np.max(np.abs(trig_interp(f, xt) - exact)) <= 1e-12

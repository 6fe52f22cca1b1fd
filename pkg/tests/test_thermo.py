import os

import numpy as np
import pytest

from chainlab.errors import RangeError
from chainlab.potentials import ONE_MINUS_COS, ZERO, Potential
from chainlab.rng import derive_stream
from chainlab.thermo import (
    ThermoCurve,
    free_energy_direct,
    gibbs_potential_direct,
    loglog_slope,
    mean_stretch_direct,
    partition_function,
    site_stats,
    tension_asymptotics,
    tension_derivatives_direct,
    tension_direct,
    tension_slope_oracle,
)


class TestPartitionFunction:
    def test_harmonic_closed_form_beta1(self):
        assert partition_function(ZERO, 1.0, 0.0, 0.0) == pytest.approx(
            np.sqrt(2 * np.pi), rel=1e-12
        )

    def test_harmonic_closed_form_beta2_tau1(self):
        assert partition_function(ZERO, 2.0, 0.0, 1.0) == pytest.approx(
            np.sqrt(np.pi) * np.e, rel=1e-12
        )

    def test_harmonic_closed_form_random(self):
        rng = derive_stream(42, 0, "thermo-z")
        for _ in range(20):
            beta = rng.uniform(0.5, 2.5)
            tau = rng.uniform(-3.0, 3.0)
            exact = np.sqrt(2 * np.pi / beta) * np.exp(beta * tau ** 2 / 2)
            assert partition_function(ZERO, beta, 0.0, tau) == pytest.approx(exact, rel=1e-10)

    def test_anharmonic_vs_trapezoid_oracle(self):
        # independent brute-force quadrature on [-12, 12], step 1e-4
        r = np.arange(-12.0, 12.0 + 5e-5, 1e-4)
        z_oracle = np.trapezoid(np.exp(-r ** 2 / 2 - 0.1 * (1 - np.cos(r))), r)
        z = partition_function(ONE_MINUS_COS, 1.0, 0.1, 0.0)
        assert z == pytest.approx(z_oracle, rel=1e-8)


class TestConjugatePair:
    def test_harmonic_identity(self):
        assert mean_stretch_direct(ZERO, 1.0, 0.0, 0.7) == pytest.approx(0.7, abs=1e-13)
        assert tension_direct(ZERO, 1.0, 0.0, 0.7) == pytest.approx(0.7, abs=1e-12)

    def test_round_trip_random(self, curve_anh01):
        rng = derive_stream(42, 0, "thermo-rt")
        for _ in range(100):
            tau = rng.uniform(-3.0, 3.0)
            r = float(curve_anh01.mean_stretch(tau))
            assert curve_anh01.tension(r) == pytest.approx(tau, abs=1e-10)

    def test_tension_deviation_bounded(self, curve_anh01):
        # linear-in-sigma deviation with a measured constant: the first-order
        # coefficient is exp(-1/2) sin(r), sup exp(-1/2) ~ 0.607 on [-2, 2],
        # so 0.65*sigma bounds the deviation including the O(sigma^2) tail.
        for r in np.linspace(-2, 2, 41):
            dev = abs(curve_anh01.tension(r) - r)
            assert dev <= 0.65 * 0.1
            assert dev == pytest.approx(0.1 * np.exp(-0.5) * abs(np.sin(r)), abs=6e-3)

    def test_out_of_range_raises(self, curve_anh01):
        with pytest.raises(RangeError):
            curve_anh01.mean_stretch(25.0)
        with pytest.raises(RangeError):
            curve_anh01.tension(30.0)


class TestFreeEnergy:
    def test_harmonic_closed_form(self, curve_harmonic):
        for r in (-1.0, 0.0, 0.5, 2.0):
            exact = r ** 2 / 2 - 0.5 * np.log(2 * np.pi)
            assert curve_harmonic.free_energy(r) == pytest.approx(exact, abs=1e-10)

    def test_derivative_is_tension(self, curve_anh02):
        h = 1e-4
        for r in (-1.0, 0.3, 1.2):
            fd = (curve_anh02.free_energy(r + h) - curve_anh02.free_energy(r - h)) / (2 * h)
            assert fd == pytest.approx(curve_anh02.tension(r), abs=1e-6)

    def test_convexity_on_grid(self, curve_anh01):
        rs = np.linspace(-2, 2, 81)
        vals = np.array([curve_anh01.free_energy(r) for r in rs])
        assert np.all(np.diff(vals, 2) >= -1e-12)


class TestRateFunction:
    def test_zero_at_conjugate_pair(self, curve_anh02):
        for r in (-1.0, 0.0, 0.8):
            tau = curve_anh02.tension(r)
            assert abs(curve_anh02.rate_function(tau, r)) <= 1e-10

    def test_harmonic_quadratic(self, curve_harmonic):
        for tau, r in ((0.3, -0.5), (1.0, 1.0), (-2.0, 0.1)):
            assert curve_harmonic.rate_function(tau, r) == pytest.approx(
                (tau - r) ** 2 / 2, abs=1e-9
            )

    def test_nonnegative_grid(self, curve_anh01):
        taus = np.linspace(-2, 2, 50)
        rs = np.linspace(-1.5, 1.5, 50)
        for tau in taus:
            for r in rs:
                assert curve_anh01.rate_function(tau, r) >= -1e-10


class TestFenchelYoung:
    def test_inequality_with_equality_case(self, curve_anh02):
        rng = derive_stream(7, 0, "fy")
        for _ in range(50):
            tau = rng.uniform(-2, 2)
            r = rng.uniform(-1.5, 1.5)
            gap = curve_anh02.free_energy(r) + float(curve_anh02.gibbs_potential(tau)) - r * tau
            assert gap >= -1e-10
        r = 0.9
        tau = curve_anh02.tension(r)
        gap = curve_anh02.free_energy(r) + float(curve_anh02.gibbs_potential(tau)) - r * tau
        assert abs(gap) <= 1e-10


class TestConvexityAndDerivatives:
    def test_gibbs_potential_strictly_convex(self, curve_anh02):
        taus = np.linspace(-3, 3, 31)
        _, _, var = site_stats(ONE_MINUS_COS, 1.0, 0.2, taus, nmom=2)
        assert np.all(var > 0)

    def test_mean_stretch_vs_finite_difference_of_g(self):
        h = 1e-4
        for tau in (-1.0, 0.0, 1.3):
            fd = (
                gibbs_potential_direct(ONE_MINUS_COS, 1.0, 0.2, tau + h)
                - gibbs_potential_direct(ONE_MINUS_COS, 1.0, 0.2, tau - h)
            ) / (2 * h)
            quad = mean_stretch_direct(ONE_MINUS_COS, 1.0, 0.2, tau)
            assert quad == pytest.approx(fd, abs=1e-7)

    def test_inverse_function_derivatives(self):
        # tension' and tension'' from inverse-function calculus agree with
        # finite differences of the Newton-inverted tension
        r0, h = 0.6, 1e-4
        t = lambda r: tension_direct(ONE_MINUS_COS, 1.0, 0.2, r)
        _, tp, ts = tension_derivatives_direct(ONE_MINUS_COS, 1.0, 0.2, r0)
        fd1 = (t(r0 + h) - t(r0 - h)) / (2 * h)
        fd2 = (t(r0 + h) - 2 * t(r0) + t(r0 - h)) / h ** 2
        assert tp == pytest.approx(fd1, abs=1e-7)
        assert ts == pytest.approx(fd2, abs=1e-4)


class TestAsymptotics:
    SIGMAS = (0.2, 0.1, 0.05, 0.025)

    def test_harmonic_all_zero(self):
        fits = tension_asymptotics(ZERO, 1.0, [0.0, 0.5], self.SIGMAS)
        for fit in fits:
            assert fit.slopes == pytest.approx((0.0, 0.0, 0.0), abs=1e-11)
            assert fit.max_residual <= 1e-11

    def test_first_order_coefficient_oracle(self):
        # fitted C0 equals beta*E[(X - r) U(X)] under N(r, 1/beta)
        (fit,) = tension_asymptotics(ONE_MINUS_COS, 1.0, [0.5], self.SIGMAS)
        oracle = tension_slope_oracle(ONE_MINUS_COS, 1.0, 0.5)
        # Stein identity gives the closed form exp(-1/2) sin(r)
        assert oracle == pytest.approx(np.exp(-0.5) * np.sin(0.5), rel=1e-10)
        assert fit.slopes[0] == pytest.approx(oracle, rel=0.05)

    def test_first_order_coefficient_vanishes_at_origin(self):
        # even perturbation: the sigma-slope of tension(0) is identically 0
        (fit,) = tension_asymptotics(ONE_MINUS_COS, 1.0, [0.0], self.SIGMAS)
        assert abs(tension_slope_oracle(ONE_MINUS_COS, 1.0, 0.0)) <= 1e-12
        assert abs(fit.slopes[0]) <= 1e-10

    def test_loglog_slope_one(self):
        devs = [
            abs(tension_direct(ONE_MINUS_COS, 1.0, s, 0.5) - 0.5) for s in self.SIGMAS
        ]
        slope = loglog_slope(self.SIGMAS, devs)
        assert slope == pytest.approx(1.0, abs=0.15)

    def test_residual_is_little_o_of_sigma(self):
        (fit,) = tension_asymptotics(ONE_MINUS_COS, 1.0, [1.0], self.SIGMAS)
        ratios = fit.residual_over_sigma
        assert np.all(np.diff(ratios) < 0)  # sigma decreasing along the list


class TestSerialization:
    def test_round_trip(self, tmp_path, curve_anh01):
        path = os.path.join(tmp_path, "curve.json")
        curve_anh01.to_json(path)
        loaded = ThermoCurve.from_json(path)
        taus = np.linspace(-2, 2, 17)
        assert np.allclose(loaded.mean_stretch(taus), curve_anh01.mean_stretch(taus),
                           rtol=0, atol=1e-14)
        assert loaded.beta == curve_anh01.beta and loaded.sigma == curve_anh01.sigma

    def test_user_potential_not_serialisable(self, tmp_path):
        pot = Potential.register(u=lambda r: r - np.sin(r),
                                 u1=lambda r: 1 - np.cos(r), u2=np.sin)
        curve = ThermoCurve.build(pot, 1.0, 0.1, tau_max=5.0, nodes=501)
        with pytest.raises(Exception):
            curve.to_json(os.path.join(tmp_path, "c.json"))

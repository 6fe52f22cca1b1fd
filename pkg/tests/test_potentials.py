import numpy as np
import pytest

from chainlab.errors import ConfigError
from chainlab.potentials import (
    ONE_MINUS_COS,
    ZERO,
    ModelParams,
    Potential,
    ScalingRegime,
    compute_sequences,
    fluct_band,
    potential_eval,
    validate_regime,
)


def test_eval_pure_quadratic():
    params = ModelParams(beta=1.0, sigma=0.3, gamma=1.0)
    assert potential_eval(ZERO, params, 2.0, 0) == pytest.approx(2.0, abs=0)


def test_eval_first_derivative_harmonic_limit():
    params = ModelParams(beta=1.0, sigma=0.0, gamma=1.0)
    assert potential_eval(ONE_MINUS_COS, params, 5.0, 1) == pytest.approx(5.0, abs=0)


def test_eval_second_derivative_at_origin():
    params = ModelParams(beta=1.0, sigma=0.1, gamma=1.0)
    assert potential_eval(ONE_MINUS_COS, params, 0.0, 2) == pytest.approx(1.1, abs=1e-15)


def test_curvature_band_on_dense_grid():
    r = np.arange(-50.0, 50.0, 1e-3)
    for sigma in (0.0, 0.3, 0.9):
        params = ModelParams(beta=1.0, sigma=sigma, gamma=1.0)
        v2 = potential_eval(ONE_MINUS_COS, params, r, 2)
        assert np.all(v2 >= 1.0 - sigma - 1e-14)
        assert np.all(v2 <= 1.0 + sigma + 1e-14)


def test_bad_order_rejected():
    params = ModelParams(beta=1.0, sigma=0.1, gamma=1.0)
    with pytest.raises(ConfigError):
        potential_eval(ONE_MINUS_COS, params, 0.0, 3)


def test_registration_accepts_bounded_curvature():
    pot = Potential.register(
        u=lambda r: r - np.sin(r),
        u1=lambda r: 1.0 - np.cos(r),
        u2=np.sin,
    )
    assert pot.kind == "user-supplied"


def test_registration_rejects_quartic():
    with pytest.raises(ConfigError):
        Potential.register(u=lambda r: r ** 4, u1=lambda r: 4 * r ** 3,
                           u2=lambda r: 12 * r ** 2)


def test_registration_rejects_origin_violation():
    with pytest.raises(ConfigError):
        Potential.register(u=lambda r: r + 0 * r, u1=lambda r: 1.0 + 0 * r,
                           u2=lambda r: 0 * r)


def test_model_params_invariants():
    with pytest.raises(ConfigError):
        ModelParams(beta=0.0, sigma=0.1, gamma=1.0)
    with pytest.raises(ConfigError):
        ModelParams(beta=1.0, sigma=1.0, gamma=1.0)


class TestRegime:
    def test_fluct_ok_quarter(self):
        v = validate_regime(ScalingRegime(a=0.25, b=0.25))
        lo, hi = fluct_band(0.25)
        assert lo == pytest.approx(0.0) and hi == pytest.approx(0.5)
        assert v.kind == "fluct_ok"

    def test_reject_small_a(self):
        v = validate_regime(ScalingRegime(a=0.1, b=0.0))
        assert v.kind == "reject"
        assert "a <= 1/5" in v.reason

    def test_reject_large_b(self):
        v = validate_regime(ScalingRegime(a=0.3, b=0.6))
        assert v.kind == "reject"
        assert "b >= 1/2" in v.reason

    def test_hydro_only_band(self):
        # inside the hydrodynamic exponent inequalities but outside the
        # fluctuation band: a = 0.21, b = 0.45 has f+(a) = 0.473... > b,
        # so pick b above f+ yet below 1/2.
        v = validate_regime(ScalingRegime(a=0.21, b=0.48))
        assert v.kind == "hydro_ok"


class TestSequences:
    def test_unit_case(self):
        reg = ScalingRegime(a=0.0, b=0.0, A=1.0, B=1.0)
        sn, gn, k_n, kappa_n = compute_sequences(reg, 1)
        assert (sn, gn) == (1.0, 1.0)
        assert k_n == pytest.approx(1.0)
        assert kappa_n == pytest.approx(1.0)

    def test_closed_formula_high_precision(self):
        # sigma_n = 0.1, gamma_n = 2 at n = 1024; value frozen from a
        # 40-digit evaluation of 0.1^1.2 * 2^-0.2 * 1024^0.8.
        reg = ScalingRegime(a=1.0, b=1.0, A=0.1 * 1024.0, B=2.0 / 1024.0)
        sn, gn, k_n, kappa_n = compute_sequences(reg, 1024)
        assert sn == pytest.approx(0.1)
        assert gn == pytest.approx(2.0)
        assert k_n == pytest.approx(14.061574954318307, rel=1e-13)
        assert kappa_n == pytest.approx(14.061574954318307, rel=1e-13)

    def test_gamma_dominates(self):
        reg = ScalingRegime(a=1.0, b=0.6)
        sn, gn, k_n, _ = compute_sequences(reg, 100)
        # core branch 0.09120... loses against gamma_n = 100^0.6
        assert k_n == pytest.approx(100.0 ** 0.6, rel=1e-14)

    def test_kappa_branch(self):
        reg = ScalingRegime(a=1.0, b=0.6)
        _, _, _, kappa_n = compute_sequences(reg, 100)
        assert kappa_n == pytest.approx(0.01 * 10.0, rel=1e-14)

"""Kernels, drift families, and moduli: values checked against independent
oracles (symbolic differentiation/integration, adaptive quadrature)."""

import math

import numpy as np
import pytest
import sympy as sp
from scipy import integrate

from driftlab.exceptions import DegenerateDataError, DomainError, SingularityError
from driftlab.special_functions import (
    DriftFamily,
    DriftSign,
    DriftSpec,
    KernelParams,
    Modulus,
    chi_forcing,
    drift_deriv,
    drift_eval,
    explicit_modulus,
    explicit_modulus_residual,
    heat_kernel,
    heat_kernel_moment,
    initial_modulus,
    phi_forcing,
    validate_drift_spec,
)


class TestHeatKernel:
    def test_peak_value(self):
        # (16 pi nu t)^(-1/2) = 1 at t = 1/(16 pi)
        assert heat_kernel(1.0 / (16.0 * math.pi), 0.0) == pytest.approx(1.0, rel=1e-14)

    def test_even(self):
        ts = [0.05, 0.3, 2.0]
        ys = np.linspace(0.0, 8.0, 17)
        for t in ts:
            np.testing.assert_allclose(heat_kernel(t, ys), heat_kernel(t, -ys), rtol=0, atol=0)

    @pytest.mark.parametrize("t,nu", [(0.1, 1.0), (1.0, 1.0), (0.5, 2.5)])
    def test_unit_mass(self, t, nu):
        p = KernelParams(nu=nu)
        val, _ = integrate.quad(lambda y: heat_kernel(t, y, p), -np.inf, np.inf)
        assert val == pytest.approx(1.0, abs=1e-10)

    def test_domain_error(self):
        with pytest.raises(DomainError):
            heat_kernel(0.0, 1.0)
        with pytest.raises(DomainError):
            heat_kernel(-1.0, 1.0)


class TestHeatKernelMoment:
    def test_zeroth_is_total_mass(self):
        assert heat_kernel_moment(0.0, 3.7) == pytest.approx(1.0, rel=1e-12)

    def test_second_moment(self):
        # oracle: integral s^2 exp(-s^2) ds = sqrt(pi)/2, so the constant is 8
        assert heat_kernel_moment(2.0, 1.0) == pytest.approx(8.0, rel=1e-11)

    def test_first_moment(self):
        # oracle: integral |s| exp(-s^2) ds = 1 by substitution
        assert heat_kernel_moment(1.0, 1.0) == pytest.approx(4.0 / math.sqrt(math.pi), rel=1e-11)

    @pytest.mark.parametrize("r", [1.0, 2.0, 0.5])
    def test_matches_kernel_quadrature(self, r):
        t, nu = 0.7, 1.3
        p = KernelParams(nu=nu)
        val, _ = integrate.quad(lambda y: abs(y) ** r * heat_kernel(t, y, p), -np.inf, np.inf)
        assert val == pytest.approx(heat_kernel_moment(r, t, p), rel=1e-6)

    def test_domain_error(self):
        with pytest.raises(DomainError):
            heat_kernel_moment(-1.0, 1.0)


@pytest.fixture(scope="module")
def h_eps_spec():
    return DriftSpec(DriftFamily.H_EPS_MOLLIFIED, beta=0.5, mollify_eps=0.01)


@pytest.fixture(scope="module")
def h_bar_spec():
    return DriftSpec(DriftFamily.H_BAR_EPS, beta=0.5, mollify_eps=0.01)


class TestDriftFamilies:
    def test_spec_validation(self):
        with pytest.raises(DomainError):
            DriftSpec(DriftFamily.H0_EXACT, beta=1.0)
        with pytest.raises(DomainError):
            DriftSpec(DriftFamily.H_EPS_MOLLIFIED, beta=0.5, mollify_eps=0.05)
        with pytest.raises(DomainError):
            DriftSpec(DriftFamily.H_BAR_EPS, beta=0.5, mollify_eps=1.5)

    @pytest.mark.parametrize(
        "spec",
        [
            DriftSpec(DriftFamily.H0_EXACT, beta=0.25),
            DriftSpec(DriftFamily.H_EPS_MOLLIFIED, beta=0.5, mollify_eps=0.01),
            DriftSpec(DriftFamily.H_BAR_EPS, beta=0.75, mollify_eps=0.02),
        ],
    )
    def test_oddness_and_even_derivative(self, spec):
        xs = np.linspace(0.02, 30.0, 500)
        np.testing.assert_allclose(drift_eval(spec, xs), -drift_eval(spec, -xs), atol=1e-12, rtol=0)
        np.testing.assert_allclose(drift_deriv(spec, xs), drift_deriv(spec, -xs), atol=1e-12, rtol=0)

    @pytest.mark.parametrize(
        "spec",
        [
            DriftSpec(DriftFamily.H_EPS_MOLLIFIED, beta=0.5, mollify_eps=0.01),
            DriftSpec(DriftFamily.H_EPS_MOLLIFIED, beta=0.25, mollify_eps=0.005),
            DriftSpec(DriftFamily.H_BAR_EPS, beta=0.5, mollify_eps=0.1),
        ],
    )
    def test_concavity_on_half_line(self, spec):
        xs = np.linspace(0.0, 40.0, 2001)
        h = drift_eval(spec, xs)
        assert np.max(np.diff(h, 2)) <= 1e-8
        validate_drift_spec(spec)

    def test_h0_exact_values(self):
        spec = DriftSpec(DriftFamily.H0_EXACT, beta=0.5)
        assert drift_eval(spec, 4.0) == pytest.approx(2.0)
        assert drift_eval(spec, -4.0) == pytest.approx(-2.0)
        assert drift_deriv(spec, 4.0) == pytest.approx(0.25)
        with pytest.raises(SingularityError):
            drift_deriv(spec, 0.0)

    def test_h_bar_at_zero(self, h_bar_spec):
        assert float(drift_eval(h_bar_spec, 0.0)) == 0.0

    @pytest.mark.parametrize("beta,eps", [(0.5, 0.01), (0.25, 0.3), (0.75, 0.002)])
    def test_h_bar_slope_at_zero(self, beta, eps):
        spec = DriftSpec(DriftFamily.H_BAR_EPS, beta=beta, mollify_eps=eps)
        expected = beta * eps ** (-(1.0 - beta) / 2.0)
        assert float(drift_deriv(spec, 0.0)) == pytest.approx(expected, rel=1e-12)

    def test_h_bar_quadrature_oracle(self, h_bar_spec):
        # independent adaptive quadrature of the defining integrand
        a = h_bar_spec.mollify_eps ** 0.25
        for x in [0.3, 2.0, 9.0]:
            oracle, _ = integrate.quad(lambda e: 0.5 / (a + e**0.5), 0.0, x, epsabs=1e-12)
            assert float(drift_eval(h_bar_spec, x)) == pytest.approx(oracle, rel=1e-7)

    def test_h_eps_pointwise_bound(self, h_eps_spec):
        xs = np.geomspace(1e-4, 200.0, 4000)
        h = drift_eval(h_eps_spec, xs)
        assert np.all(h <= xs**0.5 + 1e-12)

    def test_h_eps_derivative_bound(self, h_eps_spec):
        eps, beta = h_eps_spec.mollify_eps, h_eps_spec.beta
        xs = np.geomspace(2.0 * eps, 300.0, 3000)
        hp = drift_deriv(h_eps_spec, xs)
        assert np.all(hp <= 2.0 * beta * xs ** (beta - 1.0) + 1e-12)

    def test_h_eps_derivative_mass_bound(self, h_eps_spec):
        # integral of h' over [-x, x] equals 2 h(x) <= 2 x^beta
        xs = np.geomspace(1e-3, 100.0, 50)
        h = drift_eval(h_eps_spec, xs)
        assert np.all(2.0 * h <= 2.0 * xs**0.5 + 1e-12)

    def test_h_bar_converges_to_power_law(self):
        xs = np.linspace(-10.0, 10.0, 801)
        h0 = np.sign(xs) * np.abs(xs) ** 0.5
        sups = []
        for eps in [1e-1, 1e-2, 1e-3]:
            spec = DriftSpec(DriftFamily.H_BAR_EPS, beta=0.5, mollify_eps=eps)
            sups.append(np.max(np.abs(drift_eval(spec, xs) - h0)))
        assert sups[0] > sups[1] > sups[2]

    def test_sign_factor(self):
        flipped = DriftSpec(DriftFamily.H0_EXACT, beta=0.5, sign=DriftSign.FLIPPED)
        assert flipped.sign_factor == -1.0
        # the raw coefficient is unaffected by the sign convention
        plain = DriftSpec(DriftFamily.H0_EXACT, beta=0.5)
        assert drift_eval(flipped, 2.0) == drift_eval(plain, 2.0)


class TestExplicitModulus:
    def test_vanishes_at_origin(self):
        assert explicit_modulus(0.0, 0.125, 0.5) == 0.0

    def test_value_at_delta(self):
        d = 0.125
        assert explicit_modulus(d, d, 0.5) == pytest.approx(d - d**1.5, rel=1e-14)

    def test_residual_nonpositive_sympy_oracle(self):
        # oracle: differentiate both branches symbolically and substitute
        d, b = 0.125, 0.5
        s = sp.symbols("s", positive=True)
        w1 = s - s ** sp.Rational(3, 2)
        r1 = 4 * sp.diff(w1, s, 2) + s**b * sp.diff(w1, s)
        eta = sp.symbols("eta", positive=True)
        w2_prime = sp.Rational(1, 4) * sp.exp(-(s ** (b + 1)) / (4 * (b + 1)))
        r2 = 4 * sp.diff(w2_prime, s) + s**b * w2_prime
        for sv in [d / 2, d, 2 * d, 1.0, 10.0]:
            got = float(explicit_modulus_residual(sv, d, b))
            oracle = float((r1 if sv <= d else r2).subs(s, sv))
            assert got == pytest.approx(oracle, abs=1e-12)
            assert got <= 1e-12

    def test_residual_nonpositive_scan(self):
        for d in [0.05, 0.125, 0.2]:
            for b in [0.25, 0.5, 0.75]:
                ss = np.geomspace(1e-6, 50.0, 500)
                assert np.all(explicit_modulus_residual(ss, d, b) <= 1e-12)

    def test_delta_domain(self):
        with pytest.raises(DomainError):
            explicit_modulus(0.1, 0.3, 0.5)


class TestInitialModulus:
    def test_coefficients(self):
        m = Modulus.tanh_initial(1.0, 2.0)
        assert m.params["b0"] == pytest.approx(4.0)
        assert m.params["b1"] == pytest.approx(3.0 / math.tanh(1.0))

    def test_zero_at_origin(self):
        assert initial_modulus(1.0, 2.0, 0.0) == 0.0

    def test_strict_obedience_margin(self):
        # slope at 0 over the data Lipschitz constant: 6/tanh(1) > 1
        u0_sup, u0_lip = 1.0, 2.0
        m = Modulus.tanh_initial(u0_sup, u0_lip)
        slope0 = m.params["b0"] * m.params["b1"]
        assert slope0 / u0_lip == pytest.approx(6.0 / math.tanh(1.0), rel=1e-14)
        assert slope0 / u0_lip > 1.0

    def test_concave_and_bounded(self):
        xs = np.linspace(0.0, 20.0, 801)
        vals = initial_modulus(2.0, 3.0, xs)
        assert np.all(np.diff(vals, 2) <= 1e-10)
        assert np.all(vals <= 3 * 2.0 / math.tanh(1.0) + 1e-12)

    def test_degenerate(self):
        with pytest.raises(DegenerateDataError):
            initial_modulus(0.0, 1.0, 1.0)


class TestPhiForcing:
    def test_empty_integral(self):
        m = Modulus.power(1.0)
        assert phi_forcing(0.0, 0.5, m) == 0.0

    def test_unit_slope_exact(self):
        # omega' == 1 gives xi^beta / beta exactly (power modulus with exponent 1)
        m = Modulus.power(1.0)
        for b in [0.25, 0.5, 0.75]:
            for x in [0.3, 1.0, 7.0]:
                assert phi_forcing(x, b, m) == pytest.approx(x**b / b, rel=1e-12)

    def test_heur1_branch_sympy_oracle(self):
        # integral_0^delta eta^(-1/2) (1 - 1.5 sqrt(eta)) d eta = 2 sqrt(delta) - 1.5 delta
        d = 0.125
        m = Modulus.explicit_heur1(d, 0.5)
        eta = sp.symbols("eta", positive=True)
        oracle = float(sp.integrate(eta ** sp.Rational(-1, 2) * (1 - sp.Rational(3, 2) * sp.sqrt(eta)), (eta, 0, sp.Rational(1, 8))))
        assert oracle == pytest.approx(2 * math.sqrt(d) - 1.5 * d, rel=1e-14)
        assert phi_forcing(d, 0.5, m) == pytest.approx(oracle, rel=1e-6)

    def test_bounded_for_decaying_slope(self):
        # tanh slope decays, so phi converges as xi grows
        m = Modulus.tanh_initial(1.0, 1.0)
        v1 = phi_forcing(50.0, 0.5, m)
        v2 = phi_forcing(200.0, 0.5, m)
        assert abs(v2 - v1) < 1e-4
        xs = [0.1, 1.0, 10.0, 50.0]
        vals = [phi_forcing(x, 0.5, m) for x in xs]
        assert all(b >= a - 1e-4 for a, b in zip(vals, vals[1:]))


class TestChiForcing:
    def test_values(self):
        assert chi_forcing(1.0, 0.5) == 1.0
        assert chi_forcing(0.0, 0.5) == 0.0
        assert chi_forcing(0.25, 0.5) == pytest.approx(0.5)

    def test_concave_bounded(self):
        xs = np.linspace(0.0, 3.0, 301)
        vals = chi_forcing(xs, 0.3)
        assert np.all(vals <= 1.0)
        assert np.all(np.diff(vals) >= -1e-15)

    def test_alpha_domain(self):
        with pytest.raises(DomainError):
            chi_forcing(0.5, 1.5)


class TestModulusValidate:
    def test_tabulated_guards(self):
        with pytest.raises(DomainError):
            Modulus.tabulated([0.0, 1.0], [0.1, 0.2])
        m = Modulus.tabulated([0.0, 1.0, 2.0], [0.0, 1.0, 1.5])
        m.validate()
        assert float(m.value(0.5)) == pytest.approx(0.5)
        assert float(m.deriv(1.5)) == pytest.approx(0.5)

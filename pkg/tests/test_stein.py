import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from zerobias.admissible import abs_power, call_function, cosine, indicator, polynomial
from zerobias.errors import DomainError, NumericalError, OrderError
from zerobias.expansion import normal_expectation_reduced
from zerobias.stein import (
    lambda_identity_check,
    modified_derivative,
    modified_solve,
    nested_admissible,
    normal_expectation,
    solve,
)

mp.mp.dps = 30


def _stein_oracle(h_scalar, sigma, x, breaks=()):
    """sigma^-2 exp(x^2/2s^2) int_x^inf (h(t) - Phi h) exp(-t^2/2s^2) dt in 30-digit arithmetic."""
    s2 = mp.mpf(sigma) ** 2
    pts = sorted(set(float(b) for b in breaks))
    mean = mp.quad(lambda t: h_scalar(t) * mp.exp(-t * t / (2 * s2)), [-mp.inf] + pts + [mp.inf])
    mean /= mp.sqrt(2 * mp.pi * s2)
    # integrate from the far side for x < 0 so the integrand never cancels
    if x >= 0:
        tail = mp.quad(lambda t: (h_scalar(t) - mean) * mp.exp((x * x - t * t) / (2 * s2)),
                       [x] + [b for b in pts if b > x] + [mp.inf])
    else:
        tail = -mp.quad(lambda t: (h_scalar(t) - mean) * mp.exp((x * x - t * t) / (2 * s2)),
                        [-mp.inf] + [b for b in pts if b < x] + [x])
    return float(tail / s2)


class TestNormalExpectation:
    def test_constant(self):
        assert normal_expectation(lambda x: np.ones_like(x), 1.3) == pytest.approx(1.0, abs=1e-14)

    @pytest.mark.parametrize("sigma", [0.5, 1.0, 2.0])
    def test_variance(self, sigma):
        assert normal_expectation(lambda x: x * x, sigma) == pytest.approx(sigma**2, rel=1e-13)

    @pytest.mark.parametrize("sigma,k", [(1.0, 0.0), (0.7, 0.3), (2.0, -1.1)])
    def test_call_closed_form(self, sigma, k):
        closed = sigma * math.exp(-0.5 * (k / sigma) ** 2) / math.sqrt(2 * math.pi) - k * special.ndtr(-k / sigma)
        assert normal_expectation(call_function(k), sigma) == pytest.approx(closed, rel=1e-12)

    def test_call_at_zero(self):
        assert normal_expectation(call_function(0.0), 1.0) == pytest.approx(0.3989422804014327, rel=1e-13)

    def test_non_convergence_raises_with_diagnostics(self):
        with pytest.raises(NumericalError) as err:
            normal_expectation(lambda x: np.cos(1e4 * x), 1.0, max_doublings=1)
        assert "estimates" in err.value.diagnostics

    def test_bad_sigma(self):
        with pytest.raises(DomainError):
            normal_expectation(np.cos, 0.0)


class TestSolve:
    @pytest.mark.parametrize("sigma", [0.5, 1.0, 3.0])
    def test_linear_gives_constant(self, sigma):
        x = np.linspace(-6 * sigma, 6 * sigma, 41)
        assert solve(polynomial([0.0, 1.0]), sigma)(x) == pytest.approx(np.ones_like(x), abs=1e-12)

    @pytest.mark.parametrize("sigma", [0.5, 1.0, 3.0])
    def test_square_gives_identity(self, sigma):
        x = np.linspace(-6 * sigma, 6 * sigma, 41)
        s = solve(polynomial([0.0, 0.0, 1.0]), sigma)
        assert s(x) == pytest.approx(x, abs=1e-11 * sigma)
        assert s.derivative(1)(x) == pytest.approx(1.0, abs=1e-11)

    def test_indicator_closed_form(self):
        # f(x) = -sqrt(2 pi)/2 e^{x^2/2} Phi(x) for x <= 0, with Phi(-x) for x > 0
        s = solve(indicator(0.0), 1.0)
        x = np.array([-3.0, -1.0, -0.2, 0.0, 0.4, 2.5])
        expected = -0.5 * math.sqrt(2 * math.pi) * np.exp(x * x / 2) * special.ndtr(-np.abs(x))
        assert s(x) == pytest.approx(expected, rel=1e-11)
        assert s(0.0) == pytest.approx(-math.sqrt(2 * math.pi) / 4, rel=1e-12)

    @pytest.mark.parametrize("x", [-4.0, -1.0, 0.0, 0.3, 0.31, 2.0, 5.0])
    def test_call_against_high_precision_integral(self, x):
        k, sigma = 0.3, 1.5
        s = solve(call_function(k), sigma)
        oracle = _stein_oracle(lambda t: max(t - k, 0), sigma, mp.mpf(x), (k,))
        assert s(x) == pytest.approx(oracle, rel=1e-10, abs=1e-13)

    @pytest.mark.parametrize("make", [lambda: call_function(0.3), lambda: indicator(-0.4), cosine],
                             ids=["call", "indicator", "cos"])
    def test_residual(self, make):
        s = solve(make(), 1.2)
        x = np.linspace(-9, 9, 256)
        assert np.max(np.abs(s.residual(x)) / (1 + x * x)) < 1e-7

    def test_fault_breaks_the_residual(self):
        s = solve(call_function(0.3), 1.0, fault=1e-3)
        assert np.max(np.abs(s.residual(np.linspace(-3, 3, 32)))) > 1e-4

    def test_derivatives_match_finite_differences(self):
        s = solve(cosine(order=3), 0.8)
        x = np.linspace(-3, 3, 25)
        h = 1e-4
        for m in range(1, 4):
            lower = s.derivative(m - 1)
            fd = (lower(x + h) - lower(x - h)) / (2 * h)
            exact = s.derivative(m)(x)
            assert np.max(np.abs(fd - exact) / (1 + np.abs(exact))) < 1e-4

    def test_second_derivative_jump_for_call(self):
        sigma, k = 1.5, 0.3
        s = solve(call_function(k), sigma)
        d2 = s.derivative(2)
        jump = d2(k + 1e-9) - d2(k - 1e-9)
        assert jump == pytest.approx(-1.0 / sigma**2, rel=1e-6)
        assert s.jumps == ((k, -1.0 / sigma**2),)

    def test_order_limit(self):
        s = solve(call_function(0.0), 1.0)
        assert s.order == 2
        with pytest.raises(OrderError):
            s.derivative(3)

    @given(st.floats(-3, 3), st.floats(0.3, 3))
    @settings(max_examples=30, deadline=None)
    def test_indicator_solution_is_bounded(self, k, sigma):
        # |f_h| <= sqrt(2 pi) / (4 sigma) for indicators
        s = solve(indicator(k), sigma)
        x = np.linspace(-10 * sigma, 10 * sigma, 101)
        assert np.max(np.abs(s(x))) <= math.sqrt(2 * math.pi) / (4 * sigma) * (1 + 1e-9)


class TestNested:
    def test_call_level_two_is_order_zero_with_one_jump(self):
        g = nested_admissible(solve(call_function(0.1), 1.0), 2)
        assert g.order == 0
        assert len(g.jumps) == 1 and g.jumps[0][1] == pytest.approx(-1.0)

    def test_smooth_level_one(self):
        g = nested_admissible(solve(polynomial([0.0, 0.0, 0.5]), 1.0), 1)
        assert g.order == 2 and g.jumps == ()

    def test_level_range(self):
        s = solve(indicator(0.0), 1.0)
        with pytest.raises(OrderError):
            nested_admissible(s, 2)


class TestReducedExpectation:
    def test_square(self):
        assert normal_expectation_reduced(solve(polynomial([0.0, 0.0, 1.0]), 1.0), 1) == pytest.approx(1.0)

    @pytest.mark.parametrize("sigma", [0.5, 1.0, 2.0])
    def test_call_level_two(self, sigma):
        h = call_function(0.2)
        red = normal_expectation_reduced(solve(h, sigma), 2)
        brk = (0.2, -math.sqrt(3) * sigma, math.sqrt(3) * sigma)
        target = normal_expectation(lambda x: (x * x / (3 * sigma**2) - 1) * x * h(x), sigma, brk) / sigma**4
        assert red == pytest.approx(target, rel=1e-8)

    def test_level_one_by_hand(self):
        sigma = 1.3
        s = solve(cosine(order=2), sigma)
        by_hand = normal_expectation(lambda x: x * s(x), sigma) / sigma**2
        assert normal_expectation_reduced(s, 1) == pytest.approx(by_hand, rel=1e-9)


class TestModified:
    def test_linear_recovers_classical(self):
        f = modified_solve(polynomial([0.0, 1.0]), 1.0)
        x = np.array([-5.0, -1.0, 1.0, 3.0])
        assert f(x) == pytest.approx(1.0, abs=1e-12)

    def test_inside_unit_interval_rejected(self):
        with pytest.raises(DomainError):
            modified_solve(polynomial([0.0, 1.0]), 1.0)(np.array([0.5]))

    @pytest.mark.parametrize("power", [0, 1, 2, 3])
    def test_residual(self, power):
        f = modified_solve(abs_power(power, 0)[0], 1.0)
        x = np.concatenate([np.linspace(1, 8, 30), -np.linspace(1, 8, 30)])
        assert np.max(np.abs(f.residual(x)) / (1 + np.abs(x) ** (power + 1))) < 1e-7

    def test_lambda_identity_for_square(self):
        assert lambda_identity_check(polynomial([0.0, 0.0, 1.0]), 1.0, np.linspace(1, 6, 51)) < 1e-5

    def test_lambda_identity_for_linear(self):
        assert lambda_identity_check(polynomial([0.0, 1.0]), 1.0, np.linspace(1, 6, 11)) < 1e-9

    @pytest.mark.parametrize("n", [1, 2])
    def test_higher_derivative_formula(self, n):
        h = cosine(order=n)
        lower = modified_derivative(h, 1.0, n - 1) if n > 1 else modified_solve(h.derivatives[0], 1.0)
        x = np.linspace(1.5, 5.0, 15)
        step = 1e-4
        fd = (lower(x + step) - lower(x - step)) / (2 * step)
        assert modified_derivative(h, 1.0, n)(x) == pytest.approx(fd, abs=1e-6)

    def test_modified_derivative_needs_order(self):
        with pytest.raises(OrderError):
            modified_derivative(cosine(order=1), 1.0, 2)

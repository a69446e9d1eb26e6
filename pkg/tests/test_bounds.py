import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from conftest import centred_laws
from zerobias.admissible import call_function, cosine, indicator, polynomial
from zerobias.bounds import (
    ConcentrationConstants,
    XInfo,
    abs_p_moment_leave_one_out,
    beta_function_check,
    concentration_W,
    concentration_constants,
    concentration_leave_one_out,
    leave_one_out_info,
    remainder_bound,
    reverse_taylor_bound,
    reverse_taylor_remainder,
    taylor_remainder,
    u_coefficient,
    v_coefficient,
    zero_bias_distance_bound,
    zero_bias_distance_exact,
)
from zerobias.distributions import finite_discrete, make_two_point, scaled, sum_law, uniform_symmetric
from zerobias.errors import ContractError, DomainError, OrderError, PreconditionError
from zerobias.oracle import iid_family

RADEMACHER = finite_discrete([-1.0, 1.0], [0.5, 0.5])


class TestConcentration:
    @pytest.mark.parametrize("n", [4, 16, 100])
    def test_rademacher_closed_form(self, n):
        summands = iid_family(RADEMACHER, n)
        a, b = -0.3, 0.8
        expected = (b - a) + 4 / math.sqrt(n) + 1 / (2 * math.sqrt(n))
        assert concentration_W(summands, a, b, 1.0) == pytest.approx(expected, rel=1e-12)

    def test_point_interval_is_remainder_only(self):
        summands = iid_family(RADEMACHER, 16)
        cc = concentration_constants(summands, 1.0)
        assert concentration_W(summands, 0.5, 0.5, 1.0) == pytest.approx(cc.r)
        # the largest binomial atom still lies below r
        assert stats.binom.pmf(8, 16, 0.5) <= cc.r

    @given(st.floats(0.05, 1.0), st.floats(0.0, 3.0), st.floats(0.0, 3.0))
    @settings(max_examples=40)
    def test_monotone_in_length(self, alpha, w1, w2):
        summands = iid_family(make_two_point(0.2), 9)
        lo, hi = sorted((w1, w2))
        assert concentration_W(summands, 0.0, lo, alpha) <= concentration_W(summands, 0.0, hi, alpha)

    def test_leave_one_out_structure(self):
        n, alpha = 25, 0.5
        summands = iid_family(make_two_point(0.3), n)
        full = concentration_constants(summands, alpha)
        loo = leave_one_out_info(summands, 3, alpha, 0.0).constants
        assert loo.c == pytest.approx(2 * full.c)
        sw = math.sqrt(sum(s.variance for s in summands))
        sym = 2 * (full.r - math.sqrt(sum(s.variance**2 for s in summands)) / (2 * sw**2))
        extra = 4 * (2 / math.sqrt(n)) ** alpha
        assert loo.r == pytest.approx(sym + 2 * (full.r - sym / 2) + extra)
        a, b = -0.2, 0.4
        assert concentration_leave_one_out(summands, 3, a, b, alpha) == pytest.approx(loo.bound(a, b))

    def test_leave_one_out_against_binomial_pmf(self):
        n = 16
        summands = iid_family(make_two_point(0.2), n)
        law = sum_law(summands, skip=0)
        for a, b in [(-1.0, 0.0), (-0.3, 0.3), (0.5, 2.0)]:
            assert law.prob_between(a, b) <= concentration_leave_one_out(summands, 0, a, b, 1.0)

    def test_errors(self):
        summands = iid_family(RADEMACHER, 4)
        with pytest.raises(DomainError):
            concentration_W(summands, 1.0, 0.0, 1.0)
        with pytest.raises(IndexError):
            concentration_leave_one_out(summands, 4, 0.0, 1.0, 1.0)
        with pytest.raises(DomainError):
            concentration_W(summands, 0.0, 1.0, 1.5)
        with pytest.raises(DomainError):
            ConcentrationConstants(1.0, -1.0, 0.0)


class TestZeroBiasDistance:
    def test_symmetric_two_point_example(self):
        assert zero_bias_distance_bound(make_two_point(0.5), 0.5, 1.0) == pytest.approx(1.0)

    def test_scaling_in_eps(self):
        d = make_two_point(0.3)
        assert zero_bias_distance_bound(d, 0.2, 0.5) / zero_bias_distance_bound(d, 0.8, 0.5) == pytest.approx(2.0)

    def test_exact_two_point(self):
        # X* uniform on (-p, q); X = q w.p. p, -p w.p. q
        p, eps = 0.2, 0.3
        d = make_two_point(p)
        exact = p * (1 - eps) + (1 - p) * (1 - eps)
        assert zero_bias_distance_exact(d, eps) == pytest.approx(exact)

    @pytest.mark.parametrize("dist", [make_two_point(0.2), uniform_symmetric(1.0),
                                      finite_discrete([-1.0, 0.0, 2.0], [0.4, 0.4, 0.2])],
                             ids=["two-point", "uniform", "discrete"])
    def test_domination_against_monte_carlo(self, dist):
        rng = np.random.default_rng(5)
        x = dist.law().sample(rng, 200_000)
        xs = dist.zero_bias().sample(rng, 200_000)
        for eps in (0.1, 0.5, 1.0):
            mc = np.mean(np.abs(x - xs) > eps)
            assert mc == pytest.approx(zero_bias_distance_exact(dist, eps), abs=5e-3)
            assert zero_bias_distance_exact(dist, eps) <= zero_bias_distance_bound(dist, eps, 1.0)

    def test_eps_positive(self):
        with pytest.raises(DomainError):
            zero_bias_distance_bound(make_two_point(0.5), 0.0, 1.0)


class TestTaylorRemainder:
    X = finite_discrete([-1.0, 0.0, 2.0], [0.4, 0.4, 0.2])
    Y = make_two_point(0.3)

    @pytest.mark.parametrize("n", [0, 1, 2, 3])
    def test_exact_for_low_degree(self, n):
        f = polynomial([1.0, -1.0, 0.5, 0.25][: n + 1], order=n)
        assert taylor_remainder(f, self.X, self.Y, n).value == pytest.approx(0.0, abs=1e-14)

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_next_power_by_moment_algebra(self, n):
        # symbolic E[(X+Y)^(n+1)] minus the Taylor terms, with moments substituted
        x, y = sp.symbols("x y")
        poly = sp.expand((x + y) ** (n + 1))
        taylor = sum(y**j / sp.factorial(j) * sp.diff(x ** (n + 1), x, j) for j in range(n + 1))
        rem = sp.Poly(sp.expand(poly - taylor), x, y)
        expected = sum(float(c) * self.X.moment(i) * self.Y.moment(j) for (i, j), c in rem.terms())
        f = polynomial([0.0] * (n + 1) + [1.0], order=n)
        assert taylor_remainder(f, self.X, self.Y, n).value == pytest.approx(expected, abs=1e-13)

    def test_order_zero_definition(self):
        f = cosine(order=1)
        direct = sum_law([self.X, self.Y]).expect(np.cos) - self.X.law().expect(np.cos)
        assert taylor_remainder(f, self.X, self.Y, 0).value == pytest.approx(direct, abs=1e-15)

    def test_quadrature_path_for_continuous_y(self):
        f = polynomial([0.0, 0.0, 0.0, 1.0])
        r = taylor_remainder(f, self.X, uniform_symmetric(1.0), 2)
        assert r.method == "quadrature"
        assert r.value == pytest.approx(0.0, abs=1e-14)  # E[Y^3] = 0

    def test_monte_carlo_contract(self):
        f = cosine(order=2)
        u = uniform_symmetric(1.0)
        with pytest.raises(ContractError):
            taylor_remainder(f, u, u, 1, method="mc")
        with pytest.raises(ContractError, match="independent"):
            taylor_remainder(f, u, u, 1, method="mc", seed_x=3, seed_y=3)
        r = taylor_remainder(f, u, u, 1, method="mc", seed_x=1, seed_y=2, count=200_000)
        # E cos(X + Y) - E cos X = sin(1)^2 - sin(1) for independent uniforms on [-1, 1]
        exact = math.sin(1.0) ** 2 - math.sin(1.0)
        assert abs(r.value - exact) < 4 * r.stderr

    def test_order_errors(self):
        with pytest.raises(OrderError):
            taylor_remainder(call_function(0.0), self.X, self.Y, 2)
        with pytest.raises(OrderError):
            taylor_remainder(call_function(0.0), self.X, self.Y, 1, k=2)


class TestReverseTaylor:
    X = finite_discrete([-1.0, 0.0, 2.0], [0.4, 0.4, 0.2])
    Y = make_two_point(0.3)

    def test_order_one_identity(self):
        f = cosine(order=1)
        xy = sum_law([self.X, self.Y])
        r = reverse_taylor_remainder(f, self.X, self.Y, 1)
        main = xy.expect(np.cos) - self.Y.moment(1) * xy.expect(lambda x: -np.sin(x))
        assert r.main == pytest.approx(main, abs=1e-15)
        assert r.lhs == pytest.approx(r.main + r.epsilon, abs=1e-15)

    def test_cosine_order_three(self):
        r = reverse_taylor_remainder(cosine(order=3), self.X, self.Y, 3)
        assert abs(r.residual) <= 1e-12
        assert r.method == "exact-enumeration"

    @given(centred_laws(), centred_laws(), st.integers(0, 4))
    @settings(max_examples=30, deadline=None)
    def test_polynomials_have_zero_remainder(self, x, y, n):
        f = polynomial([0.3, -1.0, 0.5, 0.2, -0.1][: n + 1], order=n)
        r = reverse_taylor_remainder(f, x, y, n)
        scale = 1.0 + abs(r.lhs)
        assert abs(r.epsilon) <= 1e-12 * scale
        assert abs(r.residual) <= 1e-12 * scale


class TestRemainderBound:
    def test_coefficients(self):
        assert u_coefficient(1.0, 0.0, 1.0) == pytest.approx(3.0)
        assert u_coefficient(0.5, 1.0, 0.2) == pytest.approx(1.6 * math.gamma(1.5))
        assert v_coefficient(0.5, 2.0) == pytest.approx(4 * math.gamma(3.5))

    def test_indicator_is_jump_only(self):
        summands = iid_family(make_two_point(0.2), 16)
        info = leave_one_out_info(summands, 0, 1.0, 0.0)
        rb = remainder_bound(indicator(0.0), info, summands[0], 0, 0)
        assert rb.continuous_part == 0.0
        yl = summands[0].law()
        assert rb.total == pytest.approx(info.constants.c * yl.abs_moment(1.0) + info.constants.r)

    @pytest.mark.parametrize("make", [lambda: indicator(0.1), lambda: call_function(0.1),
                                      lambda: polynomial([0.0, 0.0, 1.0], order=1)],
                             ids=["indicator", "call", "square-H1"])
    @pytest.mark.parametrize("p", [0.2, 0.5])
    def test_domination(self, make, p):
        g = make()
        summands = iid_family(make_two_point(p), 16)
        info = leave_one_out_info(summands, 0, 1.0, g.p)
        w_i = sum_law(summands, skip=0)
        for y in (summands[0], summands[0].zero_bias()):
            for k in range(g.order + 1):
                exact = abs(taylor_remainder(g, w_i, y, g.order, k).value)
                assert exact <= remainder_bound(g, info, y, g.order, k).total + 1e-12
            eps = abs(reverse_taylor_remainder(g, w_i, y, g.order).epsilon)
            assert eps <= reverse_taylor_bound(g, info, y, g.order) + 1e-12

    def test_missing_moment(self):
        d = make_two_point(0.2)
        capped = type(d)("two-point", values=d.values, weights=d.weights, moment_order=2.5)
        info = XInfo(1.0, ConcentrationConstants(1.0, 1.0, 0.1))
        with pytest.raises(PreconditionError, match="order 3"):
            remainder_bound(polynomial([0.0, 0.0, 0.0, 1.0], order=2), info, capped, 2, 0)

    def test_wrong_order(self):
        info = XInfo(1.0, ConcentrationConstants(1.0, 1.0, 0.1))
        with pytest.raises(OrderError):
            remainder_bound(call_function(0.0), info, make_two_point(0.5), 2, 0)


class TestLeaveOneOutMoment:
    def test_exact(self):
        summands = iid_family(make_two_point(0.5), 4)
        # W^(i) = sum of three +-1/4 steps
        law = sum_law(summands[1:])
        assert abs_p_moment_leave_one_out(summands, 0, 1.0) == pytest.approx(law.abs_moment(1.0))

    def test_jensen_fallback(self):
        summands = [uniform_symmetric(1.0)] * 3
        assert abs_p_moment_leave_one_out(summands, 0, 2.0) == pytest.approx(2.0 / 3.0)
        with pytest.raises(PreconditionError):
            abs_p_moment_leave_one_out(summands, 0, 3.0)


@pytest.mark.parametrize("x,y", [(0.5, 0.5), (1.5, 2.5), (2.0, 3.0), (3.5, 1.0)])
def test_beta_function_identity(x, y):
    assert beta_function_check(x, y) < 1e-12

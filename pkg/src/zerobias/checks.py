"""Identity and domination checks run by ``zerobias verify``.

Every suite returns a list of :class:`CheckResult`; a check passes when its
measured deviation is within tolerance (or, for domination checks, when the
number of violations is zero).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .admissible import abs_power, call_function, cosine, indicator, lambda_iterate, lambda_iterate_formula, polynomial
from .bounds import (
    concentration_W,
    concentration_leave_one_out,
    leave_one_out_info,
    remainder_bound,
    reverse_taylor_bound,
    reverse_taylor_remainder,
    taylor_remainder,
    zero_bias_distance_bound,
    zero_bias_distance_exact,
)
from .distributions import finite_discrete, make_two_point, scaled, sum_law, uniform_symmetric
from .oracle import iid_family, zero_bias_identity_exact
from .stein import lambda_identity_check, modified_solve, normal_expectation, solve

SUITES = (
    "zero-bias",
    "moments",
    "reverse-taylor",
    "stein",
    "call-identity",
    "lambda",
    "concentration",
    "remainder",
)

POLY_TESTS = (
    (1.0,),
    (0.0, 1.0),
    (0.0, 0.0, 1.0),
    (0.0, 0.0, 0.0, 1.0),
    (1.0, -2.0, 0.0, 0.0, 1.0),
    (0.0, 1.0, 0.0, 0.0, 0.0, 1.0),
)


def catalog_distributions():
    return {
        "two-point(0.2)": make_two_point(0.2),
        "two-point(0.5)": make_two_point(0.5),
        "uniform(1)": uniform_symmetric(1.0),
        "discrete(-1,0,2)": finite_discrete([-1.0, 0.0, 2.0], [0.4, 0.4, 0.2]),
        "scaled-uniform(0.5)": scaled(uniform_symmetric(1.0), 0.5),
    }


@dataclass(frozen=True)
class CheckResult:
    suite: str
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""

    def as_dict(self):
        return asdict(self)


ROUNDING_SLACK = 1e-12


def _violates(exact, bound):
    """Domination failure beyond floating-point rounding."""
    return int(exact > bound + ROUNDING_SLACK)


def _result(suite, name, value, tol, detail=""):
    return CheckResult(suite, name, bool(value <= tol), float(value), float(tol), detail)


def _poly_pair(coeffs):
    p = np.polynomial.Polynomial(coeffs)
    return p, p.deriv()


def suite_zero_bias(fault=0.0):
    out = []
    for dname, d in catalog_distributions().items():
        worst = 0.0
        for coeffs in POLY_TESTS:
            f, df = _poly_pair(coeffs)
            worst = max(worst, abs(zero_bias_identity_exact(d, f, df)))
        out.append(_result("zero-bias", f"E[Xf(X)] = s^2 E[f'(X*)] {dname}", worst, 1e-9))
    return out


def suite_moments(fault=0.0):
    out = []
    for dname, d in catalog_distributions().items():
        star = d.zero_bias()
        worst = max(abs(star.moment(k) - d.moment(k + 2) / (d.variance * (k + 1))) for k in range(7))
        out.append(_result("moments", f"E[X*^k] k<=6 {dname}", worst, 1e-10))
    return out


REVERSE_PAIRS = (
    ("discrete(-1,0,2)", "two-point(0.3)"),
    ("two-point(0.2)", "discrete(-1,0,2)"),
)


def _law(name):
    if name == "two-point(0.3)":
        return make_two_point(0.3)
    return catalog_distributions()[name]


def suite_reverse_taylor(fault=0.0):
    out = []
    fns = [("cos", cosine(order=6))]
    fns += [(f"poly{len(c) - 1}", c) for c in POLY_TESTS]
    fns += [("poly6", (0.5, 0.0, -1.0, 0.0, 0.0, 0.25, 0.1))]
    for xn, yn in REVERSE_PAIRS:
        x, y = _law(xn), _law(yn)
        worst_resid, worst_eps = 0.0, 0.0
        for name, spec in fns:
            for n in range(5):
                if name == "cos":
                    f = spec
                else:
                    degree = len(spec) - 1
                    f = polynomial(spec, order=max(n, degree))
                r = reverse_taylor_remainder(f, x, y, n)
                worst_resid = max(worst_resid, abs(r.residual))
                if name != "cos" and len(spec) - 1 <= n:
                    worst_eps = max(worst_eps, abs(r.epsilon))
        out.append(_result("reverse-taylor", f"reassembly X={xn} Y={yn}", worst_resid, 1e-12))
        out.append(_result("reverse-taylor", f"eps_N = 0 for degree <= N, X={xn} Y={yn}", worst_eps, 1e-13))
    return out


STEIN_FUNCTIONS = (
    ("x", lambda: polynomial([0.0, 1.0])),
    ("x^2", lambda: polynomial([0.0, 0.0, 1.0])),
    ("call(0.3)", lambda: call_function(0.3)),
    ("indicator(0)", lambda: indicator(0.0)),
)


def suite_stein(fault=0.0):
    out = []
    for name, make in STEIN_FUNCTIONS:
        h = make()
        for sigma in (0.5, 1.0, 2.0):
            s = solve(h, sigma, fault=fault)
            x = np.linspace(-8 * sigma, 8 * sigma, 256)
            scale = 1.0 + np.abs(x) ** (h.p + h.alpha + 1.0)
            worst = float(np.max(np.abs(s.residual(x)) / scale))
            out.append(_result("stein", f"residual h={name} sigma={sigma:g}", worst, 1e-7))
            if name == "x":
                out.append(_result("stein", f"f = 1 for h=x sigma={sigma:g}", float(np.max(np.abs(s(x) - 1.0))), 1e-9))
            if name == "x^2":
                out.append(_result("stein", f"f = x for h=x^2 sigma={sigma:g}", float(np.max(np.abs(s(x) - x))), 1e-9))
    return out


def call_identity_sides(k, sigma, fault=0.0):
    """(sigma^2 Phi(f_h''), sigma^-2 Phi((x^2/(3 sigma^2) - 1) x h), scale) for h = (x - k)_+.

    ``scale`` is sigma^-2 Phi(|(x^2/(3 sigma^2) - 1) x h|); relative errors are
    taken against it because the right side vanishes at k = 0.
    """
    h = call_function(k)
    s = solve(h, sigma, fault=fault)
    lhs = sigma**2 * normal_expectation(s.derivative(2), sigma, h.breakpoints)

    def weight(x):
        return (x * x / (3 * sigma**2) - 1.0) * x * h(x)

    brk = h.breakpoints + (-math.sqrt(3) * sigma, math.sqrt(3) * sigma)
    rhs = normal_expectation(weight, sigma, brk) / sigma**2
    scale = normal_expectation(lambda x: np.abs(weight(x)), sigma, brk) / sigma**2
    return lhs, rhs, scale


def suite_call_identity(fault=0.0):
    out = []
    for sigma in (0.5, 1.0, 2.0):
        for k in (-0.5, 0.0, 0.3):
            lhs, rhs, scale = call_identity_sides(k, sigma, fault)
            rel = abs(lhs - rhs) / max(abs(rhs), scale)
            out.append(_result("call-identity", f"sigma={sigma:g} k={k:g}", rel, 1e-6))
    return out


def suite_lambda(fault=0.0):
    out = []
    grid = np.linspace(1.0, 6.0, 101)
    for degree in (2, 3, 4):
        h = polynomial([0.0] * degree + [1.0])
        dev = max(lambda_identity_check(h, 1.0, grid), lambda_identity_check(h, 1.0, -grid))
        out.append(_result("lambda", f"f~' = x f~_Lambda(h) for x^{degree}", dev, 1e-5))
    x = np.concatenate([-np.linspace(1.0, 6.0, 41), np.linspace(1.0, 6.0, 41)])
    for h in (cosine(order=5), polynomial([1.0, -2.0, 0.0, 0.5, 0.0, 1.0])):
        worst = 0.0
        for n in range(1, 5):
            iterated = lambda_iterate(h, n)(x)
            closed = lambda_iterate_formula(h, n, x)
            worst = max(worst, float(np.max(np.abs(iterated - closed) / (1.0 + np.abs(closed)))))
        out.append(_result("lambda", f"Lambda^N closed form N<=4 ({h.name})", worst, 1e-9))
    # f~_(|x|^l)(x) x^(1-l) tends to 1 for each l, so 2 is a generous ceiling
    xs = np.linspace(1.0, 50.0, 400)
    for l in (0, 1, 2):
        f = modified_solve(abs_power(l, 0)[0], 1.0)
        ratio = np.concatenate([f(xs), f(-xs)]) * np.concatenate([xs, xs]) ** (1 - l)
        out.append(_result("lambda", f"f~_(|x|^{l}) x^(1-{l}) bounded on [1,50]", float(np.max(np.abs(ratio))), 2.0))
    return out


def binomial_family(p, n):
    return iid_family(make_two_point(p), n)


def concentration_rows(base, n, alpha, grid=20, span=3.0):
    """Exact probabilities against the W and W^(i) bounds on a grid of intervals.

    The family is n copies of base / sqrt(n); intervals run over a grid of
    ``grid`` edges on [-span sigma, span sigma].
    """
    summands = iid_family(base, n)
    span = span * base.sigma
    law_w = sum_law(summands)
    law_wi = sum_law(summands, skip=0)
    edges = np.linspace(-span, span, grid)
    rows = []
    for a in edges:
        for b in edges:
            if a > b:
                continue
            for kind, law, bound in (
                ("W", law_w, concentration_W(summands, a, b, alpha)),
                ("W^(i)", law_wi, concentration_leave_one_out(summands, 0, a, b, alpha)),
            ):
                exact = law.prob_between(a, b)
                rows.append({"n": n, "alpha": alpha, "kind": kind, "a": float(a), "b": float(b),
                             "exact": exact, "bound": bound, "violation": _violates(exact, bound)})
    return rows


def zero_bias_distance_rows(alpha, grid=20):
    rows = []
    for dname, d in catalog_distributions().items():
        lo, hi = d.support()
        for eps in np.linspace((hi - lo) / grid, hi - lo, grid):
            exact = zero_bias_distance_exact(d, eps)
            bound = zero_bias_distance_bound(d, eps, alpha)
            rows.append({"dist": dname, "alpha": alpha, "eps": float(eps), "exact": exact, "bound": bound,
                         "violation": _violates(exact, bound)})
    return rows


def suite_concentration(fault=0.0, families=((0.2, 16), (0.2, 256), (0.5, 16), (0.5, 256)), grid=20):
    out = []
    for alpha in (0.5, 1.0):
        for p, n in families:
            rows = concentration_rows(make_two_point(p), n, alpha, grid)
            out.append(_result("concentration", f"P(a<=W<=b) domination p={p:g} n={n} alpha={alpha:g}",
                               sum(r["violation"] for r in rows), 0, f"{len(rows)} cells"))
        rows = zero_bias_distance_rows(alpha, grid)
        out.append(_result("concentration", f"P(|X-X*|>eps) domination alpha={alpha:g}",
                           sum(r["violation"] for r in rows), 0, f"{len(rows)} cells"))
    return out


REMAINDER_FUNCTIONS = (
    ("indicator(0)", lambda: indicator(0.0)),
    ("indicator(0.3)", lambda: indicator(0.3)),
    ("call(0.1)", lambda: call_function(0.1)),
    ("x^2", lambda: polynomial([0.0, 0.0, 1.0])),
    ("x^3 in H^2", lambda: polynomial([0.0, 0.0, 0.0, 1.0], order=2)),
)


def remainder_rows(p=0.2, n=16, alpha=1.0):
    """Exact |delta| and |epsilon| against their bounds, X = W^(i), Y in {X_i, X_i*}."""
    summands = binomial_family(p, n)
    w_i = sum_law(summands, skip=0)
    rows = []
    for name, make in REMAINDER_FUNCTIONS:
        g = make()
        info = leave_one_out_info(summands, 0, alpha, g.p)
        order = g.order
        for yname, y in (("X_i", summands[0]), ("X_i*", summands[0].zero_bias())):
            for k in range(order + 1):
                exact = abs(taylor_remainder(g, w_i, y, order, k).value)
                bound = remainder_bound(g, info, y, order, k, alpha=alpha).total
                rows.append({"function": name, "Y": yname, "kind": f"delta_{order - k}", "exact": exact,
                             "bound": bound, "violation": _violates(exact, bound)})
            exact = abs(reverse_taylor_remainder(g, w_i, y, order).epsilon)
            bound = reverse_taylor_bound(g, info, y, order, alpha=alpha)
            rows.append({"function": name, "Y": yname, "kind": f"eps_{order}", "exact": exact, "bound": bound,
                         "violation": _violates(exact, bound)})
    return rows


def suite_remainder(fault=0.0):
    out = []
    for p, n in ((0.2, 16), (0.5, 16), (0.2, 64)):
        rows = remainder_rows(p, n)
        out.append(_result("remainder", f"|delta|, |eps| domination p={p:g} n={n}",
                           sum(r["violation"] for r in rows), 0, f"{len(rows)} cells"))
    return out


_RUNNERS = {
    "zero-bias": suite_zero_bias,
    "moments": suite_moments,
    "reverse-taylor": suite_reverse_taylor,
    "stein": suite_stein,
    "call-identity": suite_call_identity,
    "lambda": suite_lambda,
    "concentration": suite_concentration,
    "remainder": suite_remainder,
}


def run_checks(names=None, fault=0.0):
    """Run the named suites (all by default); ``fault`` perturbs f_h for negative controls."""
    names = list(SUITES) if not names else list(names)
    unknown = [n for n in names if n not in _RUNNERS]
    if unknown:
        raise KeyError(f"unknown check suite(s) {unknown}; choose from {list(SUITES)}")
    results = []
    for name in names:
        results.extend(_RUNNERS[name](fault))
    return results


__all__ = [
    "CheckResult",
    "POLY_TESTS",
    "SUITES",
    "binomial_family",
    "call_identity_sides",
    "catalog_distributions",
    "concentration_rows",
    "remainder_rows",
    "run_checks",
    "zero_bias_distance_rows",
]

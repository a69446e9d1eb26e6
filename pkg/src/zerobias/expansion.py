"""The zero-bias expansion C_N(h) of E[h(W)] and its error budget.

C_0(h) = Phi(h) and, for N >= 1,

    C_N(h) = C_0(h) + sum_i sigma_i^2 sum_J coef_i(J) C_{N-|J|}(f_h^(|J|+1)),
    coef_i(J) = (-1)^(d-1) m_{X_i}^(J-circ) (m_{X_i*}^(J-dagger) - m_{X_i}^(J-dagger)).

The nested argument depends on J only through |J|, so the recursion is a
sum over levels l = |J| with aggregated weights A_l = sum_i sigma_i^2
sum_{|J|=l} coef_i(J).

Two backends evaluate the nested values:

* ``quadrature`` solves Stein's equation again for every nested function
  (exact recursion, cost grows geometrically with depth);
* ``hermite`` moves every derivative onto a polynomial weight by Gaussian
  integration by parts, so that C_N(h) = Phi(h P_N) for a polynomial P_N.

``auto`` uses quadrature up to depth 2 and the polynomial route beyond.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial

from .admissible import AdmissibleFunction, norm_estimate
from .bounds import (
    as_law,
    leave_one_out_info,
    normalized_abs_moment,
    remainder_bound,
)
from .compositions import Composition, compositions_up_to
from .distributions import zero_bias_normalized_moment
from .errors import DomainError, NumericalError, OrderError, PreconditionError
from .stein import SteinSolution, nested_admissible, normal_expectation, solve

BACKENDS = ("auto", "quadrature", "hermite")
QUADRATURE_MAX_DEPTH = 2
REDUCTION_RTOL = 1e-5


def coefficient(dist, comp):
    """(-1)^(d-1) m_X^(J-circ) (m_{X*}^(J-dagger) - m_X^(J-dagger))."""
    parts = comp.parts if isinstance(comp, Composition) else tuple(comp)
    head = math.prod(dist.normalized_moment(j) for j in parts[:-1])
    last = parts[-1]
    diff = zero_bias_normalized_moment(dist, last) - dist.normalized_moment(last)
    return (-1) ** (len(parts) - 1) * head * diff


def _sigma_w(summands):
    return math.sqrt(math.fsum(s.variance for s in summands))


def _groups(summands):
    """Indices of identical summands, keyed canonically, in first-seen order."""
    groups = {}
    for i, s in enumerate(summands):
        groups.setdefault(s.canonical_key(), []).append(i)
    return list(groups.values())


def required_moment_order(n, alpha, p):
    return n + max(alpha + p, 2.0)


def check_moments(summands, n, alpha, p):
    need = required_moment_order(n, alpha, p)
    for i, s in enumerate(summands):
        if s.moment_order < need:
            raise PreconditionError(
                f"summand {i} has moments up to order {s.moment_order:g}; "
                f"order {n} needs moments of order {need:g}"
            )


def level_weights(summands, n):
    """A_l for l = 1..n (index 0 unused)."""
    weights = [0.0] * (n + 1)
    comps = compositions_up_to(n)
    for idx in _groups(summands):
        s = summands[idx[0]]
        for c in comps:
            weights[c.size] += len(idx) * s.variance * coefficient(s, c)
    return weights


# ---------------------------------------------------------------------------
# polynomial adjoint route
# ---------------------------------------------------------------------------


def gaussian_moment(k, sigma):
    return 0.0 if k % 2 else sigma**k * math.prod(range(k - 1, 0, -2))


def phi_polynomial(poly, sigma):
    """Phi_sigma of a polynomial, exactly."""
    return math.fsum(c * gaussian_moment(k, sigma) for k, c in enumerate(poly.coef))


def adjoint_derivative(poly, sigma):
    """D* R with Phi(R g') = Phi(D*R g): (x R - sigma^2 R') / sigma^2."""
    x = Polynomial([0.0, 1.0])
    return (x * poly - sigma**2 * poly.deriv()) / sigma**2


def stein_adjoint(poly, level, sigma):
    """T_l(R) with Phi(R f_h^(l)) = Phi(h T_l(R)) for every admissible h."""
    for _ in range(level):
        poly = adjoint_derivative(poly, sigma)
    q = poly.integ()
    return (q - phi_polynomial(q, sigma)) / sigma**2


def correction_polynomials(weights, n, sigma):
    """P_0..P_n with C_k(h) = Phi(h P_k)."""
    polys = [Polynomial([1.0])]
    for k in range(1, n + 1):
        acc = Polynomial([1.0])
        for l in range(1, k + 1):
            acc = acc + weights[l] * stein_adjoint(polys[k - l], l + 1, sigma)
        polys.append(acc)
    return polys


def _weighted_expectation(h, poly, sigma):
    return normal_expectation(lambda x: h(x) * poly(x), sigma, h.breakpoints)


def normal_expectation_reduced(s, level, *, rtol=REDUCTION_RTOL):
    """Phi(f_h^(level)) by derivative reduction, checked against direct quadrature."""
    if level < 1:
        raise OrderError("level must be at least 1")
    reduced = _weighted_expectation(s.source, stein_adjoint(Polynomial([1.0]), level, s.sigma), s.sigma)
    direct = normal_expectation(s.derivative(level), s.sigma, s.breakpoints)
    if abs(reduced - direct) > rtol * max(abs(reduced), abs(direct)) + 1e-12:
        raise NumericalError(
            "derivative reduction disagrees with direct quadrature",
            {"reduced": reduced, "direct": direct, "level": level},
        )
    return reduced


# ---------------------------------------------------------------------------
# recursion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TraceEntry:
    """One nested evaluation: C_order(f) for f = f_h^(l1) nested along ``path``."""

    path: tuple
    function: str
    order: int
    value: float
    backend: str


class _Recursion:
    """Memoised depth-first evaluation of C_k for nested Stein derivatives."""

    def __init__(self, weights, sigma, fault=0.0):
        self.weights = weights
        self.sigma = sigma
        self.fault = fault
        self.solutions = {}
        self.nested = {}
        self.values = {}
        self.trace = []
        self._keep = []

    def solution(self, fn):
        key = id(fn)
        if key not in self.solutions:
            self.solutions[key] = solve(fn, self.sigma, fault=self.fault)
            self._keep.append(fn)
        return self.solutions[key]

    def nested_fn(self, fn, l):
        key = (id(fn), l)
        if key not in self.nested:
            self.nested[key] = nested_admissible(self.solution(fn), l)
        return self.nested[key]

    def value(self, fn, k, path=()):
        key = (id(fn), k)
        if key not in self.values:
            if fn.order < k:
                raise OrderError(f"{fn.name} has order {fn.order} < {k}")
            total = [normal_expectation(fn, self.sigma)]
            for l in range(1, k + 1):
                if self.weights[l] != 0.0:
                    g = self.nested_fn(fn, l + 1)
                    total.append(self.weights[l] * self.value(g, k - l, path + (l + 1,)))
            self.values[key] = math.fsum(total)
            self._keep.append(fn)
            self.trace.append(TraceEntry(path, fn.name, k, self.values[key], "quadrature"))
        return self.values[key]


@dataclass
class ExpansionLedger:
    """C_0..C_N with every top-level term (i, J) of C_N recorded."""

    order: int
    sigma_w: float
    values: tuple
    terms: dict
    nested: dict
    trace: list = field(default_factory=list)
    backend: str = "quadrature"

    @property
    def value(self):
        return self.values[-1]

    def reassembly_residual(self):
        return self.values[-1] - (self.values[0] + math.fsum(self.terms.values()))

    def as_dict(self):
        return {
            "order": self.order,
            "sigma_w": self.sigma_w,
            "backend": self.backend,
            "C": list(self.values),
            "terms": [
                {"summand": i, "composition": list(parts), "contribution": v}
                for (i, parts), v in self.terms.items()
            ],
            "nested": {str(l): v for l, v in self.nested.items()},
            "trace": [
                {"path": list(t.path), "function": t.function, "order": t.order, "value": t.value, "backend": t.backend}
                for t in self.trace
            ],
            "reassembly_residual": self.reassembly_residual(),
        }


def _resolve_backend(backend, n):
    if backend not in BACKENDS:
        raise DomainError(f"unknown backend {backend!r}; choose from {BACKENDS}")
    if backend == "auto":
        return "quadrature" if n <= QUADRATURE_MAX_DEPTH else "hermite"
    return backend


def expand(h, summands, n, *, backend="auto", fault=0.0):
    """C_0(h), ..., C_n(h) for W = sum of ``summands``, with the full term ledger."""
    if n < 0:
        raise DomainError("order must be nonnegative")
    if not summands:
        raise DomainError("need at least one summand")
    if h.order < n:
        raise OrderError(f"{h.name} has order {h.order}; an order-{n} expansion needs order >= {n}")
    check_moments(summands, n, h.alpha, h.p)
    backend = _resolve_backend(backend, n)
    sigma = _sigma_w(summands)
    weights = level_weights(summands, n)
    trace = []
    if backend == "quadrature":
        rec = _Recursion(weights, sigma, fault)
        values = tuple(rec.value(h, k) for k in range(n + 1))
        nested = {l: rec.value(rec.nested_fn(h, l + 1), n - l, (l + 1,)) for l in range(1, n + 1)}
        trace = rec.trace
    else:
        polys = correction_polynomials(weights, n, sigma)
        values = tuple(_weighted_expectation(h, polys[k], sigma) for k in range(n + 1))
        nested = {}
        for l in range(1, n + 1):
            nested[l] = _weighted_expectation(h, stein_adjoint(polys[n - l], l + 1, sigma), sigma)
            trace.append(TraceEntry((l + 1,), f"f^({l + 1})[{h.name}]", n - l, nested[l], "hermite"))
    terms = {}
    for i, s in enumerate(summands):
        for c in compositions_up_to(n):
            terms[(i, c.parts)] = s.variance * coefficient(s, c) * nested[c.size]
    ledger = ExpansionLedger(order=n, sigma_w=sigma, values=values, terms=terms, nested=nested,
                             trace=trace, backend=backend)
    resid = ledger.reassembly_residual()
    scale = math.fsum(abs(v) for v in terms.values()) + abs(values[0])
    if abs(resid) > 1e-12 * max(scale, 1.0):
        raise NumericalError("ledger does not reassemble", {"residual": resid, "scale": scale})
    return ledger


# ---------------------------------------------------------------------------
# error budget
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BudgetPart:
    """One nonnegative contribution; ``group`` is recursive, epsilon or delta."""

    group: str
    label: str
    value: float
    depth: int
    heuristic: bool

    def __post_init__(self):
        if not self.value >= 0:
            raise NumericalError("budget parts must be nonnegative", {"label": self.label, "value": self.value})


@dataclass
class ErrorBudget:
    order: int
    alpha: float
    p: float
    parts: list
    norms: dict

    @property
    def total(self):
        return math.fsum(part.value for part in self.parts if part.depth == 0)

    @property
    def heuristic(self):
        return any(part.heuristic for part in self.parts)

    def group_total(self, group):
        return math.fsum(part.value for part in self.parts if part.depth == 0 and part.group == group)

    def as_dict(self):
        return {
            "order": self.order,
            "alpha": self.alpha,
            "p": self.p,
            "total": self.total,
            "heuristic": self.heuristic,
            "groups": {g: self.group_total(g) for g in ("recursive", "epsilon", "delta")},
            "norms": self.norms,
            "parts": [
                {"group": q.group, "label": q.label, "value": q.value, "depth": q.depth, "heuristic": q.heuristic}
                for q in self.parts
            ],
        }


class _SolvedTop:
    """The top derivative f^(M+1) of a solution as a member of H^0, for the bounds."""

    def __init__(self, s: SteinSolution, m):
        self.s = s
        self.m = m
        self.jumps = s.jumps
        self.total_variation = math.fsum(abs(v) for _, v in s.jumps)

    def continuous_top(self, x):
        x = np.asarray(x, dtype=float)
        out = self.s.derivative(self.m + 1)(x)
        for k, size in self.jumps:
            out = out - size * (x > k)
        return out


class _Budget:
    def __init__(self, summands, alpha, p, grid_size, fault=0.0):
        self.summands = summands
        self.alpha = alpha
        self.p = p
        self.grid_size = grid_size
        self.sigma = _sigma_w(summands)
        self.groups = _groups(summands)
        self.info = {g[0]: leave_one_out_info(summands, g[0], alpha, p) for g in self.groups}
        self.solutions = {}
        self.parts = []
        self.norms = {}
        self._keep = []
        self.fault = fault
        self._memo = {}

    def solution(self, fn):
        if id(fn) not in self.solutions:
            self.solutions[id(fn)] = solve(fn, self.sigma, fault=self.fault)
            self._keep.append(fn)
        return self.solutions[id(fn)]

    def top_data(self, fn, m):
        """(V, norm, exact?) of f_fn^(m+1), shared by every term of e_m(fn)."""
        s = self.solution(fn)
        top = _SolvedTop(s, m)
        span = 10.0 * self.sigma
        norm = _norm_of(top, self.alpha, self.p, span, self.grid_size)
        self.norms[f"f^({m + 1})[{fn.name}]"] = norm
        return top.total_variation, norm

    def bound(self, fn, m, depth=0, label=""):
        """Upper bound on |e_m(fn)| for fn in H^m."""
        v_top, norm = self.top_data(fn, m)
        s = self.solution(fn)
        bookkeeping = []
        for idx in self.groups:
            i = idx[0]
            dist = self.summands[i]
            mult = len(idx) * dist.variance
            info = self.info[i]
            star = dist.zero_bias()
            x_law = as_law(dist)
            # delta_m(f', W^(i), X_i*): g = f' in H^m, k = 0
            g = _as_member(s, 1, m, v_top)
            delta = remainder_bound(g, info, star, m, 0, alpha=self.alpha, norm=norm).total
            bookkeeping.append(("delta", f"{label}delta_{m}[i={i}]", mult * delta))
            # epsilon_{m-k}(f^(k+1), W^(i), X_i) * m_{X*}^(k)
            for k in range(m + 1):
                mk = abs(zero_bias_normalized_moment(dist, k))
                if mk == 0.0:
                    continue
                gk = _as_member(s, k + 1, m - k, v_top)
                eps = _reverse_bound(gk, info, x_law, m - k, self.alpha, norm)
                bookkeeping.append(("epsilon", f"{label}eps_{m - k}[i={i}]", mult * mk * eps))
            # recursive terms
            for c in compositions_up_to(m):
                coef = abs(coefficient(dist, c))
                if coef == 0.0:
                    continue
                inner = self.bound_cached(s, c.size + 1, m - c.size, depth + 1, f"{label}{c}")
                bookkeeping.append(("recursive", f"{label}e_{m - c.size}{c}[i={i}]", mult * coef * inner))
        for group, lab, val in bookkeeping:
            self.parts.append(BudgetPart(group, lab, val, depth, True))
        return math.fsum(val for _, _, val in bookkeeping)

    def bound_cached(self, s, l, m, depth, label):
        key = (id(s), l, m)
        if key not in self._memo:
            fn = nested_admissible(s, l)
            self._keep.append(fn)
            self._memo[key] = self.bound(fn, m, depth, label + "/")
        return self._memo[key]


def _norm_of(top, alpha, p, span, grid_size):
    return norm_estimate(top.continuous_top, alpha, p, (-span, span), grid_size)


def _as_member(s, l, m, v_top):
    """f^(l) viewed in H^m; its top derivative is f^(l+m), which carries the jumps."""
    derivs = tuple((lambda j: (lambda x: s.derivatives_upto(x, j)[j]))(j) for j in range(l, l + m + 1))
    return AdmissibleFunction(derivatives=derivs, jumps=s.jumps if l + m == s.order else (),
                              alpha=s.source.alpha, p=s.source.p, name=f"f^({l})[{s.source.name}]")


def _reverse_bound(g, info, y_law, n, alpha, norm):
    ma = [normalized_abs_moment(y_law, j) for j in range(n + 1)]
    parts = [remainder_bound(g, info, y_law, n, 0, alpha=alpha, norm=norm).total]
    for c in compositions_up_to(n):
        weight = math.prod(ma[j] for j in c.parts)
        parts.append(weight * remainder_bound(g, info, y_law, n, c.size, alpha=alpha, norm=norm).total)
    return math.fsum(parts)


def budget_alpha(h, alpha=None):
    """alpha = 1 when h's top derivative is pure jump (any alpha is allowed), else h's own."""
    if alpha is not None:
        return alpha
    return 1.0 if h.top_norm == 0.0 else h.alpha


def error_budget(h, summands, n, *, alpha=None, grid_size=801, fault=0.0):
    """Recursive upper bound on |E[h(W)] - C_n(h)| by absolute values of every term.

    Norms of the continuous parts of the nested top derivatives are grid
    estimates, so the budget is flagged heuristic.
    """
    if h.order < n:
        raise OrderError(f"{h.name} has order {h.order}; the budget needs order >= {n}")
    h = h.truncate(n)
    alpha = budget_alpha(h, alpha)
    need = n + 2 + alpha + h.p
    for i, s in enumerate(summands):
        if s.moment_order < need:
            raise PreconditionError(f"summand {i} has moments up to order {s.moment_order:g}; "
                                    f"the order-{n} budget needs moments of order {need:g}")
    b = _Budget(summands, alpha, h.p, grid_size, fault)
    b.bound(h, n)
    return ErrorBudget(order=n, alpha=alpha, p=h.p, parts=b.parts, norms=b.norms)


__all__ = [
    "BudgetPart",
    "ErrorBudget",
    "ExpansionLedger",
    "TraceEntry",
    "adjoint_derivative",
    "budget_alpha",
    "check_moments",
    "coefficient",
    "correction_polynomials",
    "error_budget",
    "expand",
    "gaussian_moment",
    "level_weights",
    "normal_expectation_reduced",
    "phi_polynomial",
    "required_moment_order",
    "stein_adjoint",
]

"""Concentration inequalities and Taylor / reverse-Taylor remainders.

Normalised moments follow the convention m^(beta) = E[Y^beta] / Gamma(beta+1)
for real beta >= 0 (signed moments for integer beta, absolute moments when
written m_{|Y|}).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import integrate

from ._results import OracleResult, mc_summary
from .admissible import norm_estimate
from .compositions import compositions_up_to
from .distributions import (
    ATOM_CAP,
    FiniteLaw,
    MeanZeroDistribution,
    PiecewiseLaw,
    sum_law,
    symmetrized_abs_moment,
)
from .errors import CapacityError, ContractError, DomainError, OrderError, PreconditionError


def _check_alpha(alpha):
    if not 0.0 < alpha <= 1.0:
        raise DomainError(f"alpha must lie in (0, 1], got {alpha}")


def _check_interval(a, b):
    if a > b:
        raise DomainError(f"empty interval: a = {a} > b = {b}")


def as_law(obj):
    """A :class:`FiniteLaw` or :class:`PiecewiseLaw` for any supported law object."""
    if isinstance(obj, MeanZeroDistribution):
        return obj.law()
    if isinstance(obj, (FiniteLaw, PiecewiseLaw)):
        return obj
    raise DomainError(f"not a law: {type(obj).__name__}")


def normalized_abs_moment(law, beta):
    """m_{|Y|}^(beta) = E|Y|^beta / Gamma(beta + 1)."""
    if beta == 0:
        return 1.0
    return law.abs_moment(beta) / math.gamma(beta + 1.0)


def normalized_moment(law, k):
    """m_Y^(k) = E[Y^k] / k! for integer k."""
    if k == 0:
        return 1.0
    return law.moment(k) / math.factorial(k)


# ---------------------------------------------------------------------------
# concentration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConcentrationConstants:
    """The pair (c, r) in P(a <= X <= b) <= c (b - a)^alpha + r."""

    alpha: float
    c: float
    r: float

    def __post_init__(self):
        _check_alpha(self.alpha)
        if self.c < 0 or self.r < 0:
            raise DomainError("concentration constants must be nonnegative")

    def bound(self, a, b):
        _check_interval(a, b)
        return self.c * (b - a) ** self.alpha + self.r


def _sum_sym_moments(summands, alpha, sigma_w):
    return math.fsum(symmetrized_abs_moment(s, alpha) for s in summands) / sigma_w ** (alpha + 2)


def _sigma_w(summands):
    return math.sqrt(math.fsum(s.variance for s in summands))


def concentration_constants(summands, alpha):
    """Constants of the concentration inequality for W = sum of the summands."""
    _check_alpha(alpha)
    sw = _sigma_w(summands)
    c = 2.0 / (2.0 * sw) ** alpha
    r = (2.0 / (alpha + 1.0)) * _sum_sym_moments(summands, alpha, sw) + math.sqrt(
        math.fsum(s.variance**2 for s in summands)
    ) / (2.0 * sw**2)
    return ConcentrationConstants(alpha=alpha, c=c, r=r)


def concentration_constants_leave_one_out(summands, i, alpha):
    """Constants of the concentration inequality for W^(i) = W - X_i."""
    _check_alpha(alpha)
    if not 0 <= i < len(summands):
        raise IndexError(f"summand index {i} out of range for {len(summands)} summands")
    sw = _sigma_w(summands)
    c = 4.0 / (2.0 * sw) ** alpha
    r = (
        (4.0 / (alpha + 1.0)) * _sum_sym_moments(summands, alpha, sw)
        + math.sqrt(math.fsum(s.variance**2 for s in summands)) / sw**2
        + 4.0 * (2.0 * summands[i].sigma / sw) ** alpha
    )
    return ConcentrationConstants(alpha=alpha, c=c, r=r)


def concentration_W(summands, a, b, alpha):
    """Upper bound on P(a <= W <= b)."""
    _check_interval(a, b)
    return concentration_constants(summands, alpha).bound(a, b)


def concentration_leave_one_out(summands, i, a, b, alpha):
    """Upper bound on P(a <= W^(i) <= b)."""
    _check_interval(a, b)
    return concentration_constants_leave_one_out(summands, i, alpha).bound(a, b)


def zero_bias_distance_bound(dist, eps, alpha):
    """Upper bound on P(|X - X*| > eps) for independent X and X*."""
    _check_alpha(alpha)
    if not eps > 0:
        raise DomainError("eps must be positive")
    return symmetrized_abs_moment(dist, alpha) / (2.0 * eps**alpha * (alpha + 1.0) * dist.variance)


def zero_bias_distance_exact(dist, eps):
    """P(|X - X*| > eps) with X and X* independent, by enumeration and quadrature."""
    if not eps > 0:
        raise DomainError("eps must be positive")
    star = dist.zero_bias()
    law = dist.law()
    if isinstance(law, FiniteLaw):
        inside = [star.prob_between(x - eps, x + eps) for x in law.values]
        return 1.0 - math.fsum(w * q for w, q in zip(law.weights, inside))

    def outside(x):
        x = np.asarray(x, dtype=float)
        return 1.0 - np.array([star.prob_between(t - eps, t + eps) for t in x.ravel()]).reshape(x.shape)

    brk = sorted({b + d for b in star.breakpoints for d in (-eps, eps)})
    return float(law.expect(outside, breaks=brk, n_panels=8))


# ---------------------------------------------------------------------------
# expectations of f(X + Y) for independent X, Y
# ---------------------------------------------------------------------------


def _expect_one(F, law, breaks=()):
    if isinstance(law, FiniteLaw):
        return math.fsum(law.weights * np.asarray(F(law.values), dtype=float))
    return float(law.expect(F, breaks=breaks, n_panels=8))


def _expect_sum(F, x_law, y_law, breaks=()):
    """E[F(X+Y)] exactly (both discrete) or by quadrature (one continuous)."""
    if isinstance(x_law, PiecewiseLaw) and isinstance(y_law, FiniteLaw):
        x_law, y_law = y_law, x_law
    if isinstance(x_law, FiniteLaw) and isinstance(y_law, FiniteLaw):
        if x_law.size * y_law.size > ATOM_CAP:
            raise CapacityError("joint atom count exceeds the cap; use Monte Carlo")
        s = (x_law.values[:, None] + y_law.values[None, :]).ravel()
        w = (x_law.weights[:, None] * y_law.weights[None, :]).ravel()
        return math.fsum(w * np.asarray(F(s), dtype=float)), "exact-enumeration"
    if isinstance(x_law, FiniteLaw):
        parts = []
        for x, wx in zip(x_law.values, x_law.weights):
            brk = [b - x for b in breaks]
            parts.append(wx * _expect_one(lambda y, x=x: F(x + y), y_law, brk))
        return math.fsum(parts), "quadrature"
    raise CapacityError("both laws are continuous; use Monte Carlo")


def _draw(law, seed, count):
    return law.sample(np.random.default_rng(seed), count)


def taylor_remainder(f, x, y, n, k=0, *, method="auto", count=100_000, seed_x=None, seed_y=None):
    """delta_{n-k}(f^(k), X, Y) = E[f^(k)(X+Y)] - sum_{j<=n-k} m_Y^(j) E[f^(k+j)(X)].

    Exact when both laws are discrete, quadrature when one is continuous,
    Monte Carlo otherwise (or on request) with independent streams for X and
    Y.  Returns an :class:`OracleResult`.
    """
    if not 0 <= k <= n:
        raise OrderError(f"need 0 <= k <= n, got k={k}, n={n}")
    if n > f.order:
        raise OrderError(f"{f.name} has order {f.order} < {n}")
    xl, yl = as_law(x), as_law(y)
    ms = [normalized_moment(yl, j) for j in range(n - k + 1)]
    brk = f.breakpoints
    if method == "auto":
        try:
            top, how = _expect_sum(f.derivative(k), xl, yl, brk)
            rest = math.fsum(ms[j] * _expect_one(f.derivative(k + j), xl, brk) for j in range(n - k + 1))
            return OracleResult(top - rest, how, 0.0, 0)
        except CapacityError:
            pass
    if seed_x is None or seed_y is None:
        raise ContractError("Monte Carlo remainders need explicit seeds for X and Y")
    if seed_x == seed_y:
        raise ContractError("X and Y must be drawn from independent streams (seeds are equal)")
    xs, ys = _draw(xl, seed_x, count), _draw(yl, seed_y, count)
    vals = np.asarray(f.derivative(k)(xs + ys), dtype=float)
    for j in range(n - k + 1):
        vals = vals - ms[j] * np.asarray(f.derivative(k + j)(xs), dtype=float)
    mean, se = mc_summary(vals)
    return OracleResult(mean, "monte-carlo", se, count)


def _signed_compositions(n):
    """(sign, J) over d >= 0 and |J| <= n, the empty composition first."""
    yield 1, ()
    for comp in compositions_up_to(n):
        yield (-1) ** comp.depth, comp.parts


@dataclass(frozen=True)
class ReverseTaylorResult:
    epsilon: float
    lhs: float
    main: float
    residual: float
    method: str


def reverse_taylor_remainder(f, x, y, n):
    """epsilon_n(f, X, Y) together with the reassembly check of the reverse Taylor formula.

    ``residual`` is E[f(X)] - (main + epsilon), where main is the signed
    composition sum of E[f^(|J|)(X+Y)].
    """
    if n > f.order:
        raise OrderError(f"{f.name} has order {f.order} < {n}")
    xl, yl = as_law(x), as_law(y)
    ms = [normalized_moment(yl, j) for j in range(n + 1)]
    brk = f.breakpoints
    eps_terms, main_terms, methods = [], [], set()
    for sign, parts in _signed_compositions(n):
        weight = sign * math.prod(ms[j] for j in parts)
        size = sum(parts)
        delta = taylor_remainder(f, xl, yl, n, size)
        eps_terms.append(-weight * delta.value)
        val, how = _expect_sum(f.derivative(size), xl, yl, brk)
        main_terms.append(weight * val)
        methods.update((delta.method, how))
    eps = math.fsum(eps_terms)
    main = math.fsum(main_terms)
    lhs = _expect_one(f, xl, brk)
    method = "exact-enumeration" if methods == {"exact-enumeration"} else "quadrature"
    return ReverseTaylorResult(epsilon=eps, lhs=lhs, main=main, residual=lhs - (main + eps), method=method)


# ---------------------------------------------------------------------------
# remainder bounds
# ---------------------------------------------------------------------------


def u_coefficient(alpha, p, abs_p_moment_x):
    return (1.0 + (1.0 + 2.0**p) * abs_p_moment_x) * math.gamma(alpha + 1.0)


def v_coefficient(alpha, p):
    return 2.0**p * math.gamma(alpha + p + 1.0)


@dataclass(frozen=True)
class XInfo:
    """What the remainder bound needs to know about X: E|X|^p and (c, r)."""

    abs_p_moment: float
    constants: ConcentrationConstants


@dataclass(frozen=True)
class RemainderBound:
    """Two-part bound on |delta_{N-k}(g^(k), X, Y)|."""

    alpha: float
    p: float
    total_variation: float
    norm: float
    norm_is_exact: bool
    c: float
    r: float
    u: float
    v: float
    m_alpha: float
    m_zero: float
    m_alpha_p: float

    @property
    def jump_part(self):
        return self.total_variation * (self.c * self.m_alpha + self.r * self.m_zero)

    @property
    def continuous_part(self):
        return self.norm * (self.u * self.m_alpha + self.v * self.m_alpha_p)

    @property
    def total(self):
        return self.jump_part + self.continuous_part

    def as_dict(self):
        d = asdict(self)
        d.update(jump_part=self.jump_part, continuous_part=self.continuous_part, total=self.total)
        return d


def top_norm(g, alpha, p, interval=(-10.0, 10.0), grid_size=2001):
    """(norm, exact?) for the continuous part of g's top derivative."""
    if g.top_norm is not None and alpha == g.alpha and p == g.p:
        return g.top_norm, True
    return norm_estimate(g.continuous_top, alpha, p, interval, grid_size), False


def remainder_bound(g, x_info, y, n, k, *, alpha=None, norm=None):
    """Bound on |delta_{n-k}(g^(k), X, Y)| for g in H^n_{alpha,p}."""
    if g.order != n:
        raise OrderError(f"{g.name} has order {g.order}, the bound needs order {n}")
    if not 0 <= k <= n:
        raise OrderError(f"need 0 <= k <= n, got k={k}, n={n}")
    alpha = g.alpha if alpha is None else alpha
    p = g.p
    beta = n - k + alpha + p
    if isinstance(y, MeanZeroDistribution) and y.moment_order < beta:
        raise PreconditionError(f"Y needs moments of order {beta:g}, has {y.moment_order:g}")
    yl = as_law(y)
    exact = True
    if norm is None:
        norm, exact = top_norm(g, alpha, p)
    cc = x_info.constants
    return RemainderBound(
        alpha=alpha,
        p=p,
        total_variation=g.total_variation,
        norm=norm,
        norm_is_exact=exact,
        c=cc.c,
        r=cc.r,
        u=u_coefficient(alpha, p, x_info.abs_p_moment),
        v=v_coefficient(alpha, p),
        m_alpha=normalized_abs_moment(yl, n - k + alpha),
        m_zero=normalized_abs_moment(yl, n - k),
        m_alpha_p=normalized_abs_moment(yl, beta),
    )


def reverse_taylor_bound(g, x_info, y, n, *, alpha=None, norm=None):
    """Bound on |epsilon_n(g, X, Y)|: composition-weighted sum of delta bounds."""
    yl = as_law(y)
    if norm is None:
        norm, _ = top_norm(g, g.alpha if alpha is None else alpha, g.p)
    ma = [normalized_abs_moment(yl, j) for j in range(n + 1)]
    parts = []
    for _, comp in _signed_compositions(n):
        weight = math.prod(ma[j] for j in comp)
        parts.append(weight * remainder_bound(g, x_info, y, n, sum(comp), alpha=alpha, norm=norm).total)
    return math.fsum(parts)


def abs_p_moment_leave_one_out(summands, i, p):
    """E|W^(i)|^p, exactly when the law of W^(i) can be enumerated, else by Jensen (p <= 2)."""
    if p == 0:
        return 1.0
    try:
        return sum_law(summands, skip=i).abs_moment(p)
    except (CapacityError, NotImplementedError):
        if p <= 2:
            var = math.fsum(s.variance for j, s in enumerate(summands) if j != i)
            return var ** (p / 2.0)
        raise PreconditionError(f"cannot evaluate E|W^(i)|^{p:g} exactly; enumeration failed and p > 2")


def leave_one_out_info(summands, i, alpha, p):
    return XInfo(
        abs_p_moment=abs_p_moment_leave_one_out(summands, i, p),
        constants=concentration_constants_leave_one_out(summands, i, alpha),
    )


def beta_function_check(x, y):
    """|int_0^1 t^(x-1) (1-t)^(y-1) dt - Gamma(x)Gamma(y)/Gamma(x+y)|."""
    val, _ = integrate.quad(lambda t: 1.0, 0.0, 1.0, weight="alg", wvar=(x - 1.0, y - 1.0))
    return abs(val - math.gamma(x) * math.gamma(y) / math.gamma(x + y))


__all__ = [
    "ConcentrationConstants",
    "RemainderBound",
    "ReverseTaylorResult",
    "XInfo",
    "abs_p_moment_leave_one_out",
    "as_law",
    "beta_function_check",
    "concentration_W",
    "concentration_constants",
    "concentration_constants_leave_one_out",
    "concentration_leave_one_out",
    "leave_one_out_info",
    "normalized_abs_moment",
    "normalized_moment",
    "remainder_bound",
    "reverse_taylor_bound",
    "reverse_taylor_remainder",
    "taylor_remainder",
    "top_norm",
    "u_coefficient",
    "v_coefficient",
    "zero_bias_distance_bound",
    "zero_bias_distance_exact",
]

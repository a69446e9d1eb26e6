"""Summand laws, their zero-bias companions, and exact sums of independent laws.

A :class:`MeanZeroDistribution` is immutable.  Moments are computed exactly
(compensated sums over atoms, closed forms for the uniform law) and the
zero-bias companion is represented by a piecewise-polynomial density:

    p*(x) = E[X 1{X > x}] / sigma^2,

which is piecewise constant between sorted atoms for discrete laws and the
quadratic 3(a^2 - x^2) / (4 a^3) for the uniform law on [-a, a].
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from . import _quad
from .errors import CapacityError, ContractError, DomainError, UnsupportedError

KINDS = ("two-point", "uniform-symmetric", "finite-discrete", "scaled")
K_MAX = 12
MERGE_TOL = 1e-12
ATOM_CAP = 10**7


def _fsum_dot(w, v):
    return math.fsum(float(a) * float(b) for a, b in zip(w, v))


# ---------------------------------------------------------------------------
# generic laws used for W, W^(i) and the zero-bias companions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FiniteLaw:
    """A law with finitely many atoms; ``values`` sorted ascending."""

    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        order = np.argsort(v, kind="stable")
        object.__setattr__(self, "values", v[order])
        object.__setattr__(self, "weights", w[order])

    @property
    def size(self):
        return len(self.values)

    def expect(self, F):
        return _fsum_dot(self.weights, np.asarray(F(self.values), dtype=float))

    def moment(self, k):
        return _fsum_dot(self.weights, self.values**k)

    def abs_moment(self, beta):
        return _fsum_dot(self.weights, np.abs(self.values) ** beta)

    def normalized_abs_moment(self, beta):
        return self.abs_moment(beta) / math.gamma(beta + 1.0)

    def prob_between(self, a, b):
        """P(a <= X <= b)."""
        mask = (self.values >= a) & (self.values <= b)
        return math.fsum(self.weights[mask])

    def sample(self, rng, count):
        return rng.choice(self.values, size=count, p=self.weights / self.weights.sum())


@dataclass(frozen=True)
class PiecewiseLaw:
    """A law with a piecewise-polynomial density.

    ``pieces`` holds ``(a, b, coeffs)`` with ``coeffs`` ascending in x and
    pieces sorted and non-overlapping.
    """

    pieces: tuple

    @property
    def support(self):
        return self.pieces[0][0], self.pieces[-1][1]

    @property
    def breakpoints(self):
        return tuple(sorted({a for a, _, _ in self.pieces} | {b for _, b, _ in self.pieces}))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for a, b, c in self.pieces:
            m = (x > a) & (x < b)
            out[m] = np.polynomial.polynomial.polyval(x[m], c)
        return out

    def _piece_mass(self, a, x, c):
        anti = np.polynomial.polynomial.polyint(c)
        pv = np.polynomial.polynomial.polyval
        return pv(x, anti) - pv(a, anti)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for a, b, c in self.pieces:
            t = np.clip(x, a, b)
            out += self._piece_mass(a, t, c)
        return np.clip(out, 0.0, 1.0)

    def ppf(self, u):
        """Inverse CDF by bisection on the support (monotone, exact to ~1e-16)."""
        u = np.asarray(u, dtype=float)
        lo_s, hi_s = self.support
        lo = np.full_like(u, lo_s)
        hi = np.full_like(u, hi_s)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            below = self.cdf(mid) < u
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return 0.5 * (lo + hi)

    def sample(self, rng, count):
        return self.ppf(rng.random(count))

    def moment(self, k):
        terms = []
        for a, b, c in self.pieces:
            for m, cm in enumerate(c):
                e = k + m + 1
                terms.append(cm * (b**e - a**e) / e)
        return math.fsum(terms)

    def abs_moment(self, beta):
        terms = []
        for a, b, c in self.pieces:
            for lo, hi in ((a, min(b, 0.0)), (max(a, 0.0), b)):
                if hi <= lo:
                    continue
                for m, cm in enumerate(c):
                    e = beta + m + 1
                    if lo >= 0.0:
                        terms.append(cm * (hi**e - lo**e) / e)
                    else:
                        terms.append(cm * (-1) ** m * ((-lo) ** e - (-hi) ** e) / e)
        return math.fsum(terms)

    def normalized_abs_moment(self, beta):
        return self.abs_moment(beta) / math.gamma(beta + 1.0)

    def expect(self, F, breaks=(), n_panels=4):
        """E[F(X)] by GL panels on each piece, cut at ``breaks``."""
        total = []
        for a, b, c in self.pieces:
            dens = np.polynomial.polynomial.polyval
            total.append(
                _quad.integrate_panels(
                    lambda x, c=c: np.asarray(F(x), dtype=float) * dens(x, c), a, b, n_panels, breaks
                )
            )
        return math.fsum(total)

    def prob_between(self, a, b):
        return float(self.cdf(b) - self.cdf(a))

    def scaled(self, factor):
        pieces = tuple(
            (factor * a, factor * b, tuple(cm / factor ** (m + 1) for m, cm in enumerate(c)))
            for a, b, c in self.pieces
        )
        return PiecewiseLaw(pieces)


@dataclass(frozen=True)
class ZeroBiasDistribution(PiecewiseLaw):
    """Zero-bias companion X* of a bounded mean-zero law."""

    parent: "MeanZeroDistribution" = field(default=None, compare=False)

    def density(self, x):
        return self.pdf(x)


# ---------------------------------------------------------------------------
# summand laws
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MeanZeroDistribution:
    """A bounded mean-zero summand law.

    ``kind`` is one of ``two-point``, ``uniform-symmetric``, ``finite-discrete``
    or ``scaled``.  ``moment_order`` declares the highest finite moment; the
    bounded laws built here have all moments, but configurations may cap it
    to model summands lacking higher moments.
    """

    kind: str
    values: tuple = ()
    weights: tuple = ()
    half_width: float = 0.0
    base: "MeanZeroDistribution | None" = None
    factor: float = 1.0
    moment_order: float = math.inf

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown distribution kind {self.kind!r}")
        if self.kind in ("two-point", "finite-discrete"):
            if len(self.values) != len(self.weights) or not self.values:
                raise DomainError("values and weights must be nonempty and of equal length")
            if any(w <= 0 for w in self.weights):
                raise DomainError("weights must be positive")
            if abs(math.fsum(self.weights) - 1.0) > 1e-12:
                raise DomainError("weights must sum to 1")
            scale = max(abs(v) for v in self.values)
            if abs(_fsum_dot(self.weights, self.values)) > 1e-12 * max(scale, 1e-300):
                raise DomainError("law is not centred")
            if len(set(self.values)) != len(self.values):
                raise DomainError("atoms must be distinct")
        elif self.kind == "uniform-symmetric":
            if not self.half_width > 0:
                raise DomainError("half width must be positive")
        elif self.kind == "scaled":
            if self.base is None or not self.factor > 0:
                raise DomainError("scaled law needs a base and a positive factor")
        if self.variance <= 0:
            raise DomainError("variance must be positive")

    # -- moments ---------------------------------------------------------

    @property
    def is_discrete(self):
        if self.kind == "scaled":
            return self.base.is_discrete
        return self.kind != "uniform-symmetric"

    @property
    def variance(self):
        return self.moment(2)

    @property
    def sigma(self):
        return math.sqrt(self.variance)

    def moment(self, k):
        """Raw moment E[X^k]."""
        if k > self.moment_order:
            raise DomainError(f"moment of order {k} is not finite for this law")
        if self.kind == "scaled":
            return self.factor**k * self.base.moment(k)
        if self.kind == "uniform-symmetric":
            return 0.0 if k % 2 else self.half_width**k / (k + 1)
        return _fsum_dot(self.weights, [v**k for v in self.values])

    def normalized_moment(self, k):
        """m^(k) = E[X^k] / k!."""
        return self.moment(k) / math.factorial(k)

    def abs_moment(self, beta):
        """E[|X|^beta] for real beta >= 0."""
        if beta > self.moment_order:
            raise DomainError(f"moment of order {beta} is not finite for this law")
        if self.kind == "scaled":
            return self.factor**beta * self.base.abs_moment(beta)
        if self.kind == "uniform-symmetric":
            return self.half_width**beta / (beta + 1.0)
        return _fsum_dot(self.weights, [abs(v) ** beta for v in self.values])

    def normalized_abs_moment(self, beta):
        """m_{|X|}^(beta) = E[|X|^beta] / Gamma(beta + 1)."""
        return self.abs_moment(beta) / math.gamma(beta + 1.0)

    def moment_table(self, k_max=K_MAX):
        return MomentTable.of(self, k_max)

    # -- support -----------------------------------------------------------

    def atoms(self):
        """(values, weights) as arrays; only for discrete laws."""
        if self.kind == "scaled":
            v, w = self.base.atoms()
            return self.factor * v, w
        if not self.is_discrete:
            raise UnsupportedError("continuous law has no atoms")
        return np.asarray(self.values, dtype=float), np.asarray(self.weights, dtype=float)

    def support(self):
        if self.kind == "scaled":
            lo, hi = self.base.support()
            return self.factor * lo, self.factor * hi
        if self.kind == "uniform-symmetric":
            return -self.half_width, self.half_width
        return min(self.values), max(self.values)

    def law(self):
        """The law as a :class:`FiniteLaw` or :class:`PiecewiseLaw`."""
        if self.is_discrete:
            return FiniteLaw(*self.atoms())
        if self.kind == "scaled":
            return self.base.law().scaled(self.factor)
        a = self.half_width
        return PiecewiseLaw(((-a, a, (1.0 / (2.0 * a),)),))

    def canonical_key(self):
        if self.kind == "scaled":
            return ("scaled", self.factor, self.base.canonical_key())
        return (self.kind, tuple(self.values), tuple(self.weights), self.half_width)

    def sample(self, rng, count):
        return self.law().sample(rng, count)

    def zero_bias(self):
        return zero_bias(self)


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------


def make_two_point(p):
    """Law taking q = 1 - p with probability p and -p with probability q."""
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie in (0, 1), got {p}")
    q = 1.0 - p
    return MeanZeroDistribution("two-point", values=(q, -p), weights=(p, q))


def uniform_symmetric(half_width=1.0):
    return MeanZeroDistribution("uniform-symmetric", half_width=float(half_width))


def finite_discrete(values, weights):
    return MeanZeroDistribution(
        "finite-discrete", values=tuple(map(float, values)), weights=tuple(map(float, weights))
    )


def scaled(base, factor):
    if base.kind == "scaled":
        return MeanZeroDistribution("scaled", base=base.base, factor=base.factor * factor,
                                    moment_order=base.moment_order)
    return MeanZeroDistribution("scaled", base=base, factor=float(factor), moment_order=base.moment_order)


# ---------------------------------------------------------------------------
# moment tables and zero bias
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MomentTable:
    raw: tuple
    normalized: tuple
    abs_normalized: dict
    symmetrized_abs: dict

    @classmethod
    def of(cls, dist, k_max=K_MAX, betas=(0.5, 1.0, 1.5, 2.0, 2.5, 3.0)):
        k_top = int(min(k_max, dist.moment_order))
        raw = tuple(dist.moment(k) for k in range(k_top + 1))
        norm = tuple(r / math.factorial(k) for k, r in enumerate(raw))
        absn = {b: dist.normalized_abs_moment(b) for b in betas if b <= dist.moment_order}
        sym = {a: symmetrized_abs_moment(dist, a) for a in (0.5, 1.0) if a + 2 <= dist.moment_order}
        return cls(raw, norm, absn, sym)


def zero_bias(dist):
    """Zero-bias companion of ``dist`` as a piecewise-polynomial density."""
    if dist.kind == "scaled":
        inner = zero_bias(dist.base)
        return ZeroBiasDistribution(inner.scaled(dist.factor).pieces, parent=dist)
    var = dist.variance
    if dist.kind == "uniform-symmetric":
        a = dist.half_width
        c = 3.0 / (4.0 * a**3)
        return ZeroBiasDistribution(((-a, a, (c * a * a, 0.0, -c)),), parent=dist)
    if dist.kind in ("two-point", "finite-discrete"):
        v, w = dist.atoms()
        order = np.argsort(v)
        v, w = v[order], w[order]
        pieces = []
        for j in range(len(v) - 1):
            tail = _fsum_dot(w[j + 1:], v[j + 1:])
            pieces.append((float(v[j]), float(v[j + 1]), (tail / var,)))
        return ZeroBiasDistribution(tuple(pieces), parent=dist)
    raise UnsupportedError(f"zero bias not implemented for kind {dist.kind!r}")


def zero_bias_moment(dist, k):
    """E[(X*)^k] = E[X^(k+2)] / (sigma^2 (k+1)), from parent moments."""
    if k < 0:
        raise DomainError("k must be nonnegative")
    return dist.moment(k + 2) / (dist.variance * (k + 1))


def zero_bias_normalized_moment(dist, k):
    return zero_bias_moment(dist, k) / math.factorial(k)


def symmetrized_abs_moment(dist, alpha):
    """E[|X - X~|^(alpha + 2)] with X~ an independent copy of X."""
    beta = alpha + 2.0
    if dist.kind == "scaled":
        return dist.factor**beta * symmetrized_abs_moment(dist.base, alpha)
    if dist.is_discrete:
        v, w = dist.atoms()
        d = np.abs(v[:, None] - v[None, :]) ** beta
        return math.fsum((w[:, None] * w[None, :] * d).ravel())
    # X - X~ has the triangular density (2a - |s|) / (4 a^2) on [-2a, 2a]
    a = dist.half_width
    val, _ = integrate.quad(lambda s: s**beta * (2 * a - s) / (4 * a * a), 0.0, 2 * a,
                            epsabs=1e-15, epsrel=1e-13)
    return 2.0 * val


# ---------------------------------------------------------------------------
# sums of independent summands
# ---------------------------------------------------------------------------


def _merge(values, weights, tol=MERGE_TOL):
    order = np.argsort(values, kind="stable")
    v, w = values[order], weights[order]
    scale = max(float(np.max(np.abs(v))), 1e-300)
    new_group = np.empty(len(v), dtype=bool)
    new_group[0] = True
    new_group[1:] = np.diff(v) > tol * scale
    starts = np.flatnonzero(new_group)
    return v[starts], np.add.reduceat(w, starts)


def sum_law(summands, cap=ATOM_CAP, skip=None):
    """Exact law of the sum of independent discrete summands.

    Summands are convolved in a canonical order so the result does not depend
    on how the caller ordered them.  ``skip`` leaves out one index, giving the
    law of W^(i).
    """
    idx = [i for i in range(len(summands)) if i != skip]
    if not idx:
        return FiniteLaw(np.zeros(1), np.ones(1))
    for i in idx:
        if not summands[i].is_discrete:
            raise UnsupportedError("exact enumeration needs discrete summands; use Monte Carlo")
    idx.sort(key=lambda i: summands[i].canonical_key())
    values, weights = np.zeros(1), np.ones(1)
    for i in idx:
        xv, xw = summands[i].atoms()
        if len(values) * len(xv) > cap:
            raise CapacityError(
                f"convolution step needs {len(values) * len(xv)} atom pairs, cap is {cap}; use Monte Carlo"
            )
        values = (values[:, None] + xv[None, :]).ravel()
        weights = (weights[:, None] * xw[None, :]).ravel()
        values, weights = _merge(values, weights)
    return FiniteLaw(values, weights)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Coupling:
    """The size-biased-index construction W* = W^(I) + X_I*.

    ``mode`` fixes the joint law of (X_i, X_i*): ``independent`` draws X_i*
    independently of X_i, ``quantile`` drives both by one uniform.  Either
    way X_i* is independent of W^(i), so W* has the zero-bias law of W.
    """

    summands: tuple
    mode: str = "independent"

    def __post_init__(self):
        if not self.summands:
            raise DomainError("coupling needs at least one summand")
        if self.mode not in ("independent", "quantile"):
            raise DomainError(f"unknown coupling mode {self.mode!r}")


@dataclass(frozen=True)
class CouplingSample:
    w: np.ndarray
    w_star: np.ndarray
    index: np.ndarray
    mode: str


def _draw_coupling(coupling, rng, count):
    summands = coupling.summands
    n = len(summands)
    var = np.array([s.variance for s in summands])
    index = rng.choice(n, size=count, p=var / var.sum())
    u = rng.random((n, count))
    xs = np.empty((n, count))
    for i, s in enumerate(summands):
        xs[i] = s.law().ppf(u[i]) if not s.is_discrete else _discrete_ppf(s, u[i])
    w = xs.sum(axis=0)
    cols = np.arange(count)
    x_i = xs[index, cols]
    if coupling.mode == "independent":
        u_star = rng.random(count)
    else:
        u_star = u[index, cols]
    x_star = np.empty(count)
    for i, s in enumerate(summands):
        m = index == i
        if m.any():
            x_star[m] = s.zero_bias().ppf(u_star[m])
    return CouplingSample(w=w, w_star=w - x_i + x_star, index=index, mode=coupling.mode)


def _discrete_ppf(dist, u):
    v, w = dist.atoms()
    order = np.argsort(v)
    v, w = v[order], w[order]
    cdf = np.cumsum(w)
    k = np.searchsorted(cdf, u, side="right")
    return v[np.minimum(k, len(v) - 1)]


def sample(source, seed, count):
    """Draw ``count`` values from a law, a zero-bias law or a coupling.

    Deterministic for a given seed.  A :class:`Coupling` source returns a
    :class:`CouplingSample` carrying both W and W*.
    """
    if count < 1:
        raise DomainError("count must be at least 1")
    rng = np.random.default_rng(seed)
    if isinstance(source, Coupling):
        return _draw_coupling(source, rng, count)
    if isinstance(source, MeanZeroDistribution) and source.is_discrete:
        return _discrete_ppf(source, rng.random(count))
    if isinstance(source, (MeanZeroDistribution, PiecewiseLaw, FiniteLaw)):
        return source.sample(rng, count)
    if isinstance(source, (list, tuple)):
        if not source:
            raise DomainError("empty summand list")
        raise ContractError("pass a Coupling to sample sums of summands")
    raise DomainError(f"cannot sample from {type(source).__name__}")

"""Test functions with an explicit derivative and jump structure.

An :class:`AdmissibleFunction` of order N carries evaluators for h, h', ...,
h^(N) and the finite jump list of h^(N).  Jumps are stored as
``(location, size)`` with ``size = h^(N)(K+) - h^(N)(K-)``; at a jump point
h^(N) takes its left limit, matching the representation of the pure-jump
part as a combination of ``1{x <= K}``.  Lower derivatives are continuous but
may have kinks at the same locations, which quadrature uses as breakpoints.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import qmc

from .errors import DomainError, OrderError, ValidationError

VALIDATION_RTOL = 1e-5
VALIDATION_POINTS = 64
JUMP_CLEARANCE = 1e-3


def _arr(x):
    return np.asarray(x, dtype=float)


@dataclass(frozen=True, eq=False)
class AdmissibleFunction:
    """A member of H^N_{alpha,p}: derivatives to order N plus jumps of h^(N).

    ``top_norm`` is the exact norm of the continuous part of h^(N) when it is
    known in closed form, else ``None`` (callers fall back to a grid
    estimate).
    """

    derivatives: tuple
    jumps: tuple = ()
    alpha: float = 1.0
    p: float = 0.0
    name: str = "h"
    top_norm: float | None = None
    kinks: tuple = field(default=())

    def __post_init__(self):
        if not self.derivatives:
            raise DomainError("at least the function itself must be given")
        if not 0.0 < self.alpha <= 1.0:
            raise DomainError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.p < 0:
            raise DomainError("p must be nonnegative")
        locs = [k for k, _ in self.jumps]
        if any(b <= a for a, b in zip(locs, locs[1:])):
            raise DomainError("jump locations must be strictly increasing")

    @property
    def order(self):
        return len(self.derivatives) - 1

    def __call__(self, x):
        return self.derivatives[0](_arr(x))

    def derivative(self, m):
        if m > self.order:
            raise OrderError(f"{self.name} has derivatives up to order {self.order}, not {m}")
        return self.derivatives[m]

    @property
    def total_variation(self):
        """V of the pure-jump part of h^(N)."""
        return math.fsum(abs(s) for _, s in self.jumps)

    @property
    def breakpoints(self):
        return tuple(sorted({k for k, _ in self.jumps} | set(self.kinks)))

    def jump_part(self, x):
        """Pure-jump part of h^(N), normalised to vanish left of every jump."""
        x = _arr(x)
        out = np.zeros_like(x)
        for k, s in self.jumps:
            out = out + s * (x > k)
        return out

    def continuous_top(self, x):
        """Continuous part of h^(N)."""
        x = _arr(x)
        return self.derivatives[-1](x) - self.jump_part(x)

    def shift(self):
        """h' as a member of H^(N-1)_{alpha,p} (same jumps, same norm)."""
        if self.order < 1:
            raise OrderError("an order-0 function has no admissible derivative")
        return replace(self, derivatives=self.derivatives[1:], name=f"({self.name})'")

    def truncate(self, order):
        """The same function viewed as a member of H^order (order <= N)."""
        if order > self.order:
            raise OrderError(f"cannot raise order of {self.name} from {self.order} to {order}")
        if order == self.order:
            return self
        return replace(self, derivatives=self.derivatives[: order + 1], jumps=(),
                       top_norm=None, kinks=self.breakpoints)


# ---------------------------------------------------------------------------
# catalog
# ---------------------------------------------------------------------------


def indicator(k):
    """I_k(x) = 1{x <= k}, a member of H^0_{alpha,0} for every alpha."""
    k = float(k)
    return AdmissibleFunction(
        derivatives=(lambda x: (_arr(x) <= k).astype(float),),
        jumps=((k, -1.0),),
        alpha=1.0,
        p=0.0,
        name=f"indicator({k:g})",
        top_norm=0.0,
    )


def call_function(k):
    """h(x) = (x - k)_+ with h' = 1{x > k}; a member of H^1_{alpha,0}."""
    k = float(k)
    return AdmissibleFunction(
        derivatives=(
            lambda x: np.maximum(_arr(x) - k, 0.0),
            lambda x: (_arr(x) > k).astype(float),
        ),
        jumps=((k, 1.0),),
        alpha=1.0,
        p=0.0,
        name=f"call({k:g})",
        top_norm=0.0,
    )


def _poly_top_norm(c, alpha, p):
    """Closed-form norm of a polynomial of degree <= 2 where one is known.

    With p = 0 the weight is 1 + |x|^0 + |y|^0 = 3 everywhere.
    """
    c = list(c) + [0.0] * (3 - len(c))
    if any(c[3:]):
        return None
    a2, a1 = c[2], c[1]
    if a2 == 0.0 and a1 == 0.0:
        return 0.0
    if a2 == 0.0 and alpha == 1.0:
        return abs(a1) / 3.0 if p == 0 else abs(a1)
    if alpha == 1.0 and p == 1.0:
        # |a2 (x + y) + a1| <= max(|a2|, |a1|) (1 + |x| + |y|), attained in the limits
        return max(abs(a2), abs(a1))
    return None


def polynomial(coeffs, order=None, alpha=1.0, p=None):
    """Polynomial with ascending ``coeffs``.

    The default order is the degree (top derivative constant, norm 0); the
    default p is the smallest integer making the top derivative's norm finite
    with alpha = 1.
    """
    poly = np.polynomial.Polynomial(np.asarray(coeffs, dtype=float))
    degree = max(poly.degree(), 0)
    if order is None:
        order = degree
    if p is None:
        p = float(max(degree - order - 1, 0))
    derivs = tuple(
        (lambda q: (lambda x: q(_arr(x))))(poly.deriv(m)) for m in range(order + 1)
    )
    top = poly.deriv(order).coef if order <= degree else [0.0]
    return AdmissibleFunction(
        derivatives=derivs,
        alpha=alpha,
        p=p,
        name=f"poly{tuple(float(c) for c in coeffs)}",
        top_norm=_poly_top_norm(top, alpha, p),
    )


def cosine(order=3, alpha=1.0, p=0.0):
    derivs = tuple(
        (lambda m: (lambda x: np.cos(_arr(x) + m * math.pi / 2)))(m) for m in range(order + 1)
    )
    return AdmissibleFunction(derivatives=derivs, alpha=alpha, p=p, name="cos",
                              top_norm=(1.0 / 3.0 if p == 0 else None) if alpha == 1.0 else None)


def exp_bounded(order=3, alpha=1.0, p=0.0):
    """h(x) = exp(-x^2); h^(m) = (-1)^m H_m(x) exp(-x^2) with physicists' Hermite H_m."""

    def deriv(m):
        coef = [0.0] * m + [1.0]

        def f(x):
            x = _arr(x)
            return (-1) ** m * np.polynomial.hermite.hermval(x, coef) * np.exp(-x * x)

        return f

    return AdmissibleFunction(
        derivatives=tuple(deriv(m) for m in range(order + 1)), alpha=alpha, p=p, name="exp-bounded"
    )


def smooth(h, derivs, order, alpha=1.0, p=0.0, name="smooth", validate=True):
    """Wrap user evaluators [h, h', ..., h^(order)] with no jumps."""
    fs = (h,) + tuple(derivs)
    if len(fs) != order + 1:
        raise ValidationError(f"order {order} needs {order + 1} evaluators, got {len(fs)}")
    fn = AdmissibleFunction(
        derivatives=tuple((lambda g: (lambda x: np.asarray(g(_arr(x)), dtype=float)))(g) for g in fs),
        alpha=alpha,
        p=p,
        name=name,
    )
    if validate:
        validate_derivatives(fn)
    return fn


def validate_derivatives(fn, lo=-5.0, hi=5.0, rtol=VALIDATION_RTOL, points=VALIDATION_POINTS):
    """Check that each derivative evaluator matches a finite difference of the previous one.

    Uses a Halton sequence on [lo, hi], skipping points within
    ``JUMP_CLEARANCE`` of any breakpoint, and a Richardson-extrapolated
    central difference.
    """
    x = qmc.Halton(d=1, scramble=False).random(points + 1)[1:, 0] * (hi - lo) + lo
    for b in fn.breakpoints:
        x = x[np.abs(x - b) > JUMP_CLEARANCE]
    for m in range(fn.order):
        f, df = fn.derivatives[m], fn.derivatives[m + 1]
        step = 1e-3 * (1.0 + np.abs(x))
        d1 = (f(x + step) - f(x - step)) / (2 * step)
        d2 = (f(x + step / 2) - f(x - step / 2)) / step
        fd = (4 * d2 - d1) / 3
        exact = df(x)
        err = np.abs(fd - exact)
        bad = err > rtol * np.maximum(1.0, np.abs(exact))
        if bad.any():
            i = int(np.argmax(err))
            raise ValidationError(
                f"{fn.name}: derivative {m + 1} disagrees with finite difference at x={x[i]:.6g} "
                f"(declared {exact[i]:.9g}, finite difference {fd[i]:.9g})"
            )
    return True


# ---------------------------------------------------------------------------
# norm estimator
# ---------------------------------------------------------------------------


def norm_estimate(f, alpha, p, interval=(-10.0, 10.0), grid_size=2001):
    """Grid lower bound of sup |f(x)-f(y)| / (|x-y|^alpha (1+|x|^p+|y|^p)).

    This is a diagnostic, not a certified norm: the true supremum runs over
    all of R^2.
    """
    if grid_size < 2:
        raise DomainError("grid size must be at least 2")
    x = np.linspace(interval[0], interval[1], grid_size)
    fx = np.asarray(f(x), dtype=float)
    best = 0.0
    ax = np.abs(x) ** p
    chunk = max(1, 4_000_000 // grid_size)
    for s in range(0, grid_size, chunk):
        xi = x[s:s + chunk, None]
        num = np.abs(fx[s:s + chunk, None] - fx[None, :])
        dist = np.abs(xi - x[None, :])
        den = dist**alpha * (1.0 + ax[s:s + chunk, None] + ax[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(dist > 0, num / den, 0.0)
        best = max(best, float(np.max(q)))
    return best


# ---------------------------------------------------------------------------
# the Lambda operator on R \ (-1, 1)
# ---------------------------------------------------------------------------


def _check_domain(x):
    x = _arr(x)
    if np.any(np.abs(x) < 1.0):
        raise DomainError("Lambda is only defined on |x| >= 1")
    return x


@dataclass(frozen=True, eq=False)
class LambdaImage:
    """Lambda(h) = (h/x)' with its own derivatives, from the Leibniz rule.

    ``base`` holds evaluators [h, h', ..., h^(m)]; the image carries
    derivatives up to order m - 1.
    """

    base: tuple

    @property
    def derivatives(self):
        return tuple(self._deriv(j) for j in range(len(self.base) - 1))

    def _deriv(self, j):
        # (h/x)^(j+1) = sum_i C(j+1, i) h^(i) (1/x)^(j+1-i),  (1/x)^(r) = (-1)^r r! / x^(r+1)
        def f(x):
            x = _check_domain(x)
            out = np.zeros_like(x)
            for i in range(j + 2):
                r = j + 1 - i
                out = out + math.comb(j + 1, i) * self.base[i](x) * (-1) ** r * math.factorial(r) / x ** (r + 1)
            return out

        return f

    def __call__(self, x):
        return self._deriv(0)(x)


def lambda_apply(h):
    """Lambda(h)(x) = h'(x)/x - h(x)/x^2 for |x| >= 1.

    ``h`` is an :class:`AdmissibleFunction` or a sequence of derivative
    evaluators [h, h', ...] with at least one derivative.
    """
    base = tuple(h.derivatives) if isinstance(h, AdmissibleFunction) else tuple(h)
    if len(base) < 2:
        raise OrderError("Lambda needs the first derivative of h")
    return LambdaImage(base)


def lambda_iterate(h, n):
    """n-fold application of :func:`lambda_apply`."""
    img = lambda_apply(h)
    for _ in range(n - 1):
        img = lambda_apply(img.derivatives)
    return img


def double_factorial(n):
    """n!! with the convention (-1)!! = 1."""
    return math.prod(range(n, 0, -2)) if n > 0 else 1


def lambda_iterate_formula(h, n, x):
    """Closed form of Lambda^n(h) as a signed sum of h^(n-k) / x^(n+k)."""
    derivs = tuple(h.derivatives) if isinstance(h, AdmissibleFunction) else tuple(h)
    if len(derivs) < n + 1:
        raise OrderError(f"Lambda^{n} needs derivatives of h up to order {n}")
    x = _check_domain(x)
    out = np.zeros_like(x)
    for k in range(n + 1):
        coef = (-1) ** k * double_factorial(2 * k - 1) * math.comb(n + k, 2 * k)
        out = out + coef * derivs[n - k](x) / x ** (n + k)
    return out


def abs_power(power, order):
    """Evaluators of |x|^power and its derivatives away from 0.

    d^m/dx^m |x|^l = l (l-1) ... (l-m+1) |x|^(l-m) sign(x)^m.
    """

    def deriv(m):
        coef = math.prod(power - i for i in range(m))

        def f(x):
            x = _arr(x)
            return coef * np.abs(x) ** (power - m) * np.sign(x) ** m

        return f

    return tuple(deriv(m) for m in range(order + 1))


__all__ = [
    "AdmissibleFunction",
    "abs_power",
    "LambdaImage",
    "call_function",
    "cosine",
    "double_factorial",
    "exp_bounded",
    "indicator",
    "lambda_apply",
    "lambda_iterate",
    "lambda_iterate_formula",
    "norm_estimate",
    "polynomial",
    "smooth",
    "validate_derivatives",
]

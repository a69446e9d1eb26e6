"""Stein's equation x f(x) - sigma^2 f'(x) = h(x) - Phi_sigma(h) and relatives.

f_h is evaluated pointwise through the tail-stable one-sided form

    f_h(x) =  sigma^-2 int_0^inf (h(x+z) - c) exp(-z^2/(2 sigma^2) - z x/sigma^2) dz,   x >= 0
    f_h(x) = -sigma^-2 int_0^inf (h(x-z) - c) exp(-z^2/(2 sigma^2) + z x/sigma^2) dz,   x <  0

with c = Phi_sigma(h).  Both integrands decay at least like a Gaussian, so no
ratio of tiny numbers is ever formed.  Higher derivatives follow from the
recurrence obtained by differentiating the equation m times:

    sigma^2 f^(m+1) = x f^(m) + m f^(m-1) - h^(m)   (m >= 1).

The modified equation on R \\ (-1, 1) uses the same integrals with c = 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _quad
from .admissible import AdmissibleFunction, _arr, double_factorial, lambda_apply, lambda_iterate_formula
from .errors import DomainError, NumericalError, OrderError

SPAN = 12.0
TAIL_EXPONENT = 46.0
INNER_PANELS = 6
MAX_INNER_PANELS = 48
CHUNK_NODES = 200_000
# refinement differences that stop shrinking below this level are treated
# as the integrand's own rounding noise (nested solutions lose digits to
# cancellation in the derivative recurrence when sigma is small)
NOISE_RTOL = 1e-8
SQRT_2PI = math.sqrt(2.0 * math.pi)


def _stalled(diffs, tol):
    """True once successive refinement differences are small and no longer shrinking."""
    return len(diffs) >= 2 and diffs[-1] <= tol and diffs[-1] > 0.25 * diffs[-2]


def normal_pdf(x, sigma):
    x = _arr(x)
    return np.exp(-0.5 * (x / sigma) ** 2) / (sigma * SQRT_2PI)


def normal_expectation(g, sigma, breakpoints=None, *, rtol=1e-11, atol=1e-13, panels=8, max_doublings=6):
    """Phi_sigma(g) by Gauss-Legendre panels on [-12 sigma, 12 sigma].

    Panels are cut at ``breakpoints`` (defaulting to the jump and kink
    locations of an :class:`AdmissibleFunction`) and doubled until two
    successive estimates agree.
    """
    if sigma <= 0:
        raise DomainError("sigma must be positive")
    if breakpoints is None:
        breakpoints = getattr(g, "breakpoints", ())
    lo, hi = -SPAN * sigma, SPAN * sigma

    def integrand(x):
        return np.asarray(g(x), dtype=float) * normal_pdf(x, sigma)

    estimates = [_quad.integrate_panels(integrand, lo, hi, panels, breakpoints)]
    diffs = []
    for _ in range(max_doublings):
        panels *= 2
        estimates.append(_quad.integrate_panels(integrand, lo, hi, panels, breakpoints))
        a, b = estimates[-2], estimates[-1]
        diffs.append(abs(a - b))
        if diffs[-1] <= max(atol, rtol * abs(b)) or _stalled(diffs, max(atol, NOISE_RTOL * abs(b))):
            return b
    raise NumericalError(
        "normal expectation did not converge",
        {"estimates": estimates, "panels": panels, "sigma": sigma},
    )


# ---------------------------------------------------------------------------
# one-sided tail integrals shared by the classical and modified solutions
# ---------------------------------------------------------------------------


def _tail_integral(h, center, sigma, x, breaks, panels):
    """sign(x) sigma^-2 int_0^U (h(x + sign z) - center) exp(-z^2/2s^2 - z|x|/s^2) dz."""
    x = _arr(x)
    shape = x.shape
    x = x.ravel()
    out = np.empty_like(x)
    breaks = np.asarray(breaks, dtype=float)
    per_row = (panels + len(breaks)) * _quad.GL_ORDER
    chunk = max(1, CHUNK_NODES // per_row)
    for s in range(0, len(x), chunk):
        xc = x[s:s + chunk]
        sign = np.where(xc >= 0, 1.0, -1.0)
        ax = np.abs(xc) / sigma
        upper = sigma * (np.sqrt(ax * ax + 2.0 * TAIL_EXPONENT) - ax)
        br = (breaks[None, :] - xc[:, None]) * sign[:, None] if len(breaks) else None

        def integrand(z, xc=xc, sign=sign):
            t = xc[:, None] + sign[:, None] * z
            hv = np.asarray(h(t.ravel()), dtype=float).reshape(t.shape)
            w = np.exp(-0.5 * (z / sigma) ** 2 - z * np.abs(xc)[:, None] / sigma**2)
            return (hv - center) * w

        val = _quad.integrate_rows(integrand, np.zeros_like(xc), upper, panels, br)
        out[s:s + chunk] = sign * val / sigma**2
    return out.reshape(shape)


def _fd_derivative(f, x, step, breaks=()):
    """Fourth-order finite difference that never straddles a breakpoint."""
    x = _arr(x)
    central = (f(x - 2 * step) - 8 * f(x - step) + 8 * f(x + step) - f(x + 2 * step)) / (12 * step)
    if not len(breaks):
        return central
    out = central
    b = np.asarray(breaks, dtype=float)
    near = np.min(np.abs(x[:, None] - b[None, :]), axis=1) <= 2.5 * step
    if near.any():
        xn = x[near]
        bn = b[np.argmin(np.abs(xn[:, None] - b[None, :]), axis=1)]
        d = np.where(xn <= bn, -step, step)
        pts = [f(xn + j * d) for j in range(5)]
        one_sided = (-25 * pts[0] + 48 * pts[1] - 36 * pts[2] + 16 * pts[3] - 3 * pts[4]) / (12 * d)
        out = out.copy()
        out[near] = one_sided
    return out


# ---------------------------------------------------------------------------
# classical Stein solution
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SteinSolution:
    """f_h for a target variance sigma^2, with derivatives up to order N+1.

    ``fault`` adds a constant to f_h; it exists only as a negative control
    for the verification suite.
    """

    source: AdmissibleFunction
    sigma: float
    mean: float
    panels: int = INNER_PANELS
    fault: float = 0.0

    @property
    def order(self):
        return self.source.order + 1

    @property
    def breakpoints(self):
        return self.source.breakpoints

    @property
    def jumps(self):
        """Jumps of f^(N+1): -eps_j / sigma^2 at each jump of h^(N)."""
        return tuple((k, -s / self.sigma**2) for k, s in self.source.jumps)

    def value(self, x):
        f = _tail_integral(self.source, self.mean, self.sigma, x, self.breakpoints, self.panels)
        return f + self.fault if self.fault else f

    __call__ = value

    def derivatives_upto(self, x, m):
        """[f, f', ..., f^(m)] at ``x`` via the differentiated equation."""
        if m > self.order:
            raise OrderError(f"f_h has derivatives up to order {self.order}, asked for {m}")
        x = _arr(x)
        s2 = self.sigma**2
        out = [self.value(x)]
        if m >= 1:
            out.append((x * out[0] - self.source(x) + self.mean) / s2)
        for j in range(1, m):
            out.append((x * out[j] + j * out[j - 1] - self.source.derivative(j)(x)) / s2)
        return out

    def derivative(self, m):
        if m > self.order:
            raise OrderError(f"f_h has derivatives up to order {self.order}, asked for {m}")
        return lambda x: self.derivatives_upto(x, m)[m]

    def residual(self, x, step=None):
        """x f - sigma^2 f'_fd - (h - Phi(h)) with a finite-difference f'."""
        x = _arr(x)
        step = 1e-3 * self.sigma if step is None else step
        df = _fd_derivative(self.value, x, step, self.breakpoints)
        return x * self.value(x) - self.sigma**2 * df - (self.source(x) - self.mean)


def _probe_panels(h, center, sigma, breaks, tol=1e-12):
    probe = np.linspace(-10 * sigma, 10 * sigma, 41)
    if len(breaks):
        probe = np.concatenate([probe, np.asarray(breaks, float) + 1e-3 * sigma,
                                np.asarray(breaks, float) - 1e-3 * sigma])
    panels = INNER_PANELS
    coarse = _tail_integral(h, center, sigma, probe, breaks, panels)
    history = []
    while panels < MAX_INNER_PANELS:
        fine = _tail_integral(h, center, sigma, probe, breaks, 2 * panels)
        err = float(np.max(np.abs(fine - coarse) / (1.0 + np.abs(fine))))
        history.append((panels, err))
        if err <= tol:
            return panels
        if _stalled([e for _, e in history], NOISE_RTOL):
            return 2 * panels
        panels *= 2
        coarse = fine
    raise NumericalError("Stein tail quadrature did not converge", {"history": history})


def solve(h, sigma, fault=0.0):
    """Solve Stein's equation for ``h`` with target N(0, sigma^2)."""
    if sigma <= 0:
        raise DomainError("sigma must be positive")
    mean = normal_expectation(h, sigma)
    panels = _probe_panels(h, mean, sigma, h.breakpoints)
    return SteinSolution(source=h, sigma=float(sigma), mean=mean, panels=panels, fault=fault)


def nested_admissible(s, l):
    """f_h^(l) as a member of H^(N+1-l)_{alpha,p}, ready to be solved again."""
    top = s.order
    if not 1 <= l <= top:
        raise OrderError(f"nested order must lie in [1, {top}], got {l}")
    derivs = tuple((lambda j: (lambda x: s.derivatives_upto(x, j)[j]))(j) for j in range(l, top + 1))
    h = s.source
    return AdmissibleFunction(
        derivatives=derivs,
        jumps=s.jumps,
        alpha=h.alpha,
        p=h.p,
        name=f"f^({l})[{h.name}]",
        top_norm=None,
        kinks=h.breakpoints,
    )


# ---------------------------------------------------------------------------
# modified Stein equation on R \ (-1, 1)
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ModifiedSteinSolution:
    """Solution of x f(x) - sigma^2 f'(x) = h(x) for |x| >= 1 (no centring)."""

    source: object
    sigma: float
    breakpoints: tuple = ()
    panels: int = 2 * INNER_PANELS

    def __call__(self, x):
        x = _arr(x)
        if np.any(np.abs(x) < 1.0):
            raise DomainError("the modified solution is only defined on |x| >= 1")
        return _tail_integral(self.source, 0.0, self.sigma, x, self.breakpoints, self.panels)

    def derivative_fd(self, x, step=1e-3):
        """Finite-difference f~' whose stencil never enters (-1, 1)."""
        x = _arr(x)
        out = np.empty_like(x)
        edge = np.abs(x) - 1.0 < 2.5 * step
        if (~edge).any():
            out[~edge] = _fd_derivative(self, x[~edge], step, self.breakpoints)
        if edge.any():
            xe = x[edge]
            d = np.where(xe >= 0, step, -step)
            pts = [self(xe + j * d) for j in range(5)]
            out[edge] = (-25 * pts[0] + 48 * pts[1] - 36 * pts[2] + 16 * pts[3] - 3 * pts[4]) / (12 * d)
        return out

    def residual(self, x, step=1e-3):
        """x f~ - sigma^2 f~' - h on |x| >= 1."""
        x = _arr(x)
        return x * self(x) - self.sigma**2 * self.derivative_fd(x, step) - np.asarray(self.source(x), dtype=float)


def modified_solve(h, sigma, breakpoints=()):
    """f~_h for an evaluator ``h`` defined on R \\ (-1, 1)."""
    if sigma <= 0:
        raise DomainError("sigma must be positive")
    if isinstance(h, AdmissibleFunction):
        breakpoints = breakpoints or h.breakpoints
    elif isinstance(h, (tuple, list)):
        h = h[0]
    return ModifiedSteinSolution(source=h, sigma=float(sigma), breakpoints=tuple(breakpoints))


def lambda_identity_check(h, sigma, grid):
    """max |f~_h'(x) - x f~_{Lambda(h)}(x)| over ``grid`` (f~_h' by finite difference)."""
    derivs = tuple(h.derivatives) if isinstance(h, AdmissibleFunction) else tuple(h)
    grid = _arr(grid)
    left = modified_solve(derivs[0], sigma).derivative_fd(grid)
    right = grid * modified_solve(lambda_apply(derivs), sigma)(grid)
    return float(np.max(np.abs(left - right)))


def modified_derivative(h, sigma, n):
    """f~_h^(n) from sum_k C(n,2k) (2k-1)!! x^(n-2k) f~_{Lambda^(n-k) h}(x)."""
    derivs = tuple(h.derivatives) if isinstance(h, AdmissibleFunction) else tuple(h)
    if len(derivs) < n + 1:
        raise OrderError(f"f~_h^({n}) needs derivatives of h up to order {n}")

    def f(x):
        x = _arr(x)
        out = np.zeros_like(x)
        for k in range(n // 2 + 1):
            lam = (lambda m: (lambda t: lambda_iterate_formula(derivs, m, t)))(n - k)
            coef = math.comb(n, 2 * k) * double_factorial(2 * k - 1)
            out = out + coef * x ** (n - 2 * k) * modified_solve(lam, sigma)(x)
        return out

    return f

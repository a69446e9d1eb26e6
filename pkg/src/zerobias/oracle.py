"""Ground truth for E[h(W)]: exact convolution, Monte Carlo and order fits."""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ._results import OracleResult, mc_summary
from .distributions import ATOM_CAP, Coupling, sample, scaled, sum_law
from .errors import CapacityError, DegenerateFitError, DomainError
from .expansion import expand

DEFAULT_GRID = (16, 32, 64, 128, 256, 512, 1024)
ERROR_FLOOR = 1e-13
MC_MIN_COUNT = 1000
MC_CHUNK = 2_000_000


def task_seed(root, name, index=0):
    """Seed for one task: SeedSequence(root, spawn_key=(crc32(name), index))."""
    return np.random.SeedSequence(int(root), spawn_key=(zlib.crc32(name.encode()), int(index)))


def exact_expectation(h, summands, cap=ATOM_CAP):
    """E[h(W)] by iterated discrete convolution."""
    try:
        law = sum_law(summands, cap=cap)
    except CapacityError as exc:
        raise CapacityError(f"{exc}; switch the oracle to monte-carlo") from exc
    return OracleResult(law.expect(h), "exact-enumeration", 0.0, law.size)


def _sum_samples(summands, rng, count):
    """count draws of W; identical discrete summands use multinomial counts."""
    groups = {}
    for s in summands:
        groups.setdefault(s.canonical_key(), [s, 0])[1] += 1
    w = np.zeros(count)
    for key in sorted(groups, key=repr):
        s, m = groups[key]
        if s.is_discrete:
            v, p = s.atoms()
            w += rng.multinomial(m, p, size=count) @ v
        else:
            per = max(1, MC_CHUNK // m)
            for a in range(0, count, per):
                b = min(count, a + per)
                w[a:b] += s.law().sample(rng, m * (b - a)).reshape(b - a, m).sum(axis=1)
    return w


def mc_expectation(h, summands, count, seed):
    """Monte Carlo E[h(W)] with standard error sample-std / sqrt(count)."""
    if count < MC_MIN_COUNT:
        raise DomainError(f"count must be at least {MC_MIN_COUNT}")
    rng = np.random.default_rng(seed)
    vals = np.asarray(h(_sum_samples(summands, rng, count)), dtype=float)
    mean, se = mc_summary(vals)
    return OracleResult(mean, "monte-carlo", se, count)


def zero_bias_identity_exact(dist, f, fprime):
    """E[X f(X)] - sigma^2 E[f'(X*)] by enumeration / piecewise quadrature."""
    law = dist.law()
    lhs = law.expect(lambda x: x * f(x))
    rhs = dist.variance * dist.zero_bias().expect(fprime, n_panels=4)
    return lhs - rhs


def zero_bias_identity_mc(summands, f, fprime, count, seed, mode="independent"):
    """E[W f(W)] - sigma_W^2 E[f'(W*)] from the coupling sampler, with SE."""
    draw = sample(Coupling(tuple(summands), mode), seed, count)
    var = math.fsum(s.variance for s in summands)
    vals = draw.w * np.asarray(f(draw.w), dtype=float) - var * np.asarray(fprime(draw.w_star), dtype=float)
    mean, se = mc_summary(vals)
    return OracleResult(mean, "monte-carlo", se, count)


# ---------------------------------------------------------------------------
# convergence order
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OrderFit:
    """Least-squares fit of log|error| against log n."""

    ns: tuple
    errors: tuple
    slope: float
    intercept: float
    slope_stderr: float
    residuals: tuple
    excluded: tuple = ()
    rows: list = field(default_factory=list, compare=False)

    def confidence_interval(self, level=0.95):
        dof = len(self.ns) - len(self.excluded) - 2
        if dof < 1:
            return (self.slope, self.slope)
        t = stats.t.ppf(0.5 + level / 2, dof)
        return (self.slope - t * self.slope_stderr, self.slope + t * self.slope_stderr)

    def as_dict(self):
        return {
            "ns": list(self.ns),
            "errors": list(self.errors),
            "slope": self.slope,
            "intercept": self.intercept,
            "slope_stderr": self.slope_stderr,
            "ci95": list(self.confidence_interval()),
            "residuals": list(self.residuals),
            "excluded": list(self.excluded),
        }


def fit_power_law(ns, errors, floor=ERROR_FLOOR, rows=None):
    """Fit error = C n^slope; errors below ``floor`` are excluded and flagged."""
    ns = tuple(int(n) for n in ns)
    errors = tuple(float(abs(e)) for e in errors)
    if len(ns) < 4 or len(ns) != len(errors):
        raise DomainError("an order fit needs at least 4 (n, error) pairs")
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise DomainError("n must be strictly increasing")
    keep = [j for j, e in enumerate(errors) if e >= floor]
    excluded = tuple(ns[j] for j in range(len(ns)) if j not in keep)
    if len(keep) < 2:
        raise DegenerateFitError(f"only {len(keep)} errors exceed the floor {floor:g}")
    x = np.log([ns[j] for j in keep])
    y = np.log([errors[j] for j in keep])
    if len(keep) == 2:
        slope = (y[1] - y[0]) / (x[1] - x[0])
        return OrderFit(ns, errors, float(slope), float(y[0] - slope * x[0]), math.inf, (0.0, 0.0), excluded,
                        list(rows or []))
    res = stats.linregress(x, y)
    resid = tuple(float(v) for v in y - (res.intercept + res.slope * x))
    return OrderFit(ns, errors, float(res.slope), float(res.intercept), float(res.stderr), resid, excluded,
                    list(rows or []))


def iid_family(base, n):
    """n copies of base / sqrt(n)."""
    return [scaled(base, 1.0 / math.sqrt(n))] * n


def order_fit(base, h, order, n_grid=DEFAULT_GRID, *, oracle="exact", count=200_000, seed=0,
              backend="auto", floor=ERROR_FLOOR):
    """|E[h(W_n)] - C_order(h)| along the iid family base/sqrt(n) and its log-log slope."""
    if len(n_grid) < 4:
        raise DomainError("the n-grid needs at least 4 points")
    rows, errors = [], []
    for n in n_grid:
        summands = iid_family(base, n)
        ledger = expand(h, summands, order, backend=backend)
        if oracle == "exact":
            truth = exact_expectation(h, summands)
        elif oracle == "monte-carlo":
            truth = mc_expectation(h, summands, count, task_seed(seed, "order-fit", n))
        else:
            raise DomainError(f"unknown oracle {oracle!r}")
        errs = [abs(truth.value - c) for c in ledger.values]
        errors.append(errs[-1])
        rows.append({"n": n, "C": list(ledger.values), "oracle": truth.value, "oracle_se": truth.stderr,
                     "errors": errs})
    return fit_power_law(n_grid, errors, floor, rows)


__all__ = [
    "DEFAULT_GRID",
    "OracleResult",
    "OrderFit",
    "exact_expectation",
    "fit_power_law",
    "iid_family",
    "mc_expectation",
    "order_fit",
    "task_seed",
    "zero_bias_identity_exact",
    "zero_bias_identity_mc",
]

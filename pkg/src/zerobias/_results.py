"""Small result records shared by the bounds and oracle modules."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

METHODS = ("exact-enumeration", "quadrature", "monte-carlo")


@dataclass(frozen=True)
class OracleResult:
    """A ground-truth value; ``stderr`` is 0 for the deterministic methods."""

    value: float
    method: str
    stderr: float = 0.0
    count: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown oracle method {self.method!r}")
        if self.method != "monte-carlo" and self.stderr != 0.0:
            raise ValueError("deterministic oracle results carry no standard error")

    def __float__(self):
        return float(self.value)

    def within(self, other, sigmas=3.0):
        """True when ``other`` lies within ``sigmas`` standard errors (plus rounding)."""
        return abs(self.value - float(other)) <= sigmas * self.stderr + 1e-12 * max(1.0, abs(self.value))

    def as_dict(self):
        return {"value": self.value, "method": self.method, "stderr": self.stderr, "count": self.count}


def mc_summary(values):
    """Mean and standard error (sample std / sqrt(count)) of a 1-d array."""
    values = np.asarray(values, dtype=float)
    count = values.size
    mean = float(np.mean(values))
    std = float(np.std(values, ddof=1)) if count > 1 else 0.0
    return mean, std / math.sqrt(count)

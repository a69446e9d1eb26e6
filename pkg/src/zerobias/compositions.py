"""Integer compositions, the index set of the expansion recursion."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError


@dataclass(frozen=True, order=True)
class Composition:
    """An ordered tuple J = (j_1, ..., j_d) of positive integers."""

    parts: tuple

    def __post_init__(self):
        if not self.parts:
            raise DomainError("a composition needs at least one part")
        if any(not isinstance(j, int) or j < 1 for j in self.parts):
            raise DomainError(f"parts must be positive integers, got {self.parts}")

    @property
    def size(self):
        """|J|, the sum of the parts."""
        return sum(self.parts)

    @property
    def depth(self):
        return len(self.parts)

    @property
    def last(self):
        """The last part J-dagger."""
        return self.parts[-1]

    @property
    def head(self):
        """All parts but the last (J-circ), possibly empty."""
        return self.parts[:-1]

    def __str__(self):
        return "(" + ",".join(map(str, self.parts)) + ")"


def compositions_of(m):
    """All compositions of ``m`` in lexicographic order."""
    if m < 1:
        return []
    out = []

    def grow(prefix, rest):
        if rest == 0:
            out.append(Composition(tuple(prefix)))
            return
        for j in range(1, rest + 1):
            grow(prefix + [j], rest - j)

    grow([], m)
    return out


def compositions_up_to(n):
    """Compositions of 1..n, ordered by size and then lexicographically."""
    if n < 0:
        raise DomainError("n must be nonnegative")
    return [c for m in range(1, n + 1) for c in compositions_of(m)]


def count_up_to(n):
    return 2**n - 1 if n >= 1 else 0


def multinomial_weight(parts, moments):
    """prod_j moments[j] for a tuple of parts (1 for the empty tuple)."""
    return math.prod(moments[j] for j in parts)

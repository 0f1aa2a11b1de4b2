"""Gain sequences and expanding families of compact balls."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
import numpy as np

from ._vec import norm

__all__ = [
    "GainSchedule",
    "CustomGain",
    "CompactFamily",
    "H2Report",
    "gain",
    "gain_array",
    "check_h2",
    "contains",
    "compact_index_containing",
    "norm",
]


@dataclass(frozen=True)
class GainSchedule:
    """Power-law gains ``a / (b + n) ** alpha`` for ``n >= 1``."""

    a: float = 1.0
    b: float = 0.0
    alpha: float = 1.0

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError(f"gain.a must be positive, got {self.a!r}")
        if not self.b >= 0:
            raise ValueError(f"gain.b must be nonnegative, got {self.b!r}")
        if not 0.5 < self.alpha <= 1.0:
            raise ValueError(f"gain.alpha must be in (0.5, 1], got {self.alpha!r}")

    @classmethod
    def unchecked(cls, a: float, b: float, alpha: float) -> "GainSchedule":
        """Build a schedule without validation (tests of out-of-range exponents)."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "a", float(a))
        object.__setattr__(obj, "b", float(b))
        object.__setattr__(obj, "alpha", float(alpha))
        return obj

    def gain(self, n: int) -> float:
        if n < 1:
            raise ValueError(f"gain index starts at 1, got {n}")
        return self.a / (self.b + n) ** self.alpha

    def tail_square_sum_bound(self, from_n: int) -> float:
        """Upper bound on ``sum_{n > from_n} gain(n) ** 2`` by integral comparison."""
        e = 2.0 * self.alpha - 1.0
        if e <= 0:
            return math.inf
        return self.a ** 2 * (self.b + from_n) ** (-e) / e


@dataclass(frozen=True)
class CustomGain:
    """Explicit finite list of gains, ``values[n - 1]`` is the gain of step ``n``.

    Exempt from the summability checks; meant for tests and short runs.
    """

    values: tuple = field(default_factory=tuple)

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not vals or any(not v > 0 for v in vals):
            raise ValueError("custom gains must be a nonempty list of positive values")
        object.__setattr__(self, "values", vals)

    @property
    def alpha(self) -> float:
        return math.nan

    def gain(self, n: int) -> float:
        if not 1 <= n <= len(self.values):
            raise IndexError(f"custom gain list has {len(self.values)} entries, asked for n={n}")
        return self.values[n - 1]

    def tail_square_sum_bound(self, from_n: int) -> float:
        return math.fsum(v * v for v in self.values[from_n:])


def gain(schedule, n: int) -> float:
    return schedule.gain(n)


def gain_array(schedule: GainSchedule, n_max: int, start: int = 1) -> np.ndarray:
    """Vectorized gains for ``n = start, ..., n_max`` (analysis only)."""
    if isinstance(schedule, CustomGain):
        return np.asarray(schedule.values[start - 1:n_max])
    n = np.arange(start, n_max + 1, dtype=float)
    return schedule.a / (schedule.b + n) ** schedule.alpha


@dataclass(frozen=True)
class H2Report:
    divergent_sum: bool
    square_summable: bool

    @property
    def holds(self) -> bool:
        return self.divergent_sum and self.square_summable


def check_h2(schedule: GainSchedule) -> H2Report:
    """p-series classification of ``sum gain`` and ``sum gain**2``."""
    alpha = schedule.alpha
    return H2Report(divergent_sum=alpha <= 1.0, square_summable=alpha > 0.5)


@dataclass(frozen=True)
class CompactFamily:
    """Closed balls ``K_j = ball(center, radius(j))`` with strictly growing radii.

    ``growth`` is ``"geometric"`` (``radius(j) = r0 * rate**j``, rate > 1) or
    ``"arithmetic"`` (``radius(j) = r0 + j * rate``, rate > 0).
    """

    center: tuple
    r0: float = 1.0
    growth: str = "geometric"
    rate: float = 2.0

    def __post_init__(self):
        c = tuple(float(v) for v in np.atleast_1d(self.center))
        object.__setattr__(self, "center", c)
        if not self.r0 > 0:
            raise ValueError(f"compacts.r0 must be positive, got {self.r0!r}")
        if self.growth == "geometric":
            if not self.rate > 1:
                raise ValueError(f"geometric growth needs rho > 1, got {self.rate!r}")
        elif self.growth == "arithmetic":
            if not self.rate > 0:
                raise ValueError(f"arithmetic growth needs step > 0, got {self.rate!r}")
        else:
            raise ValueError(f"compacts.growth must be 'geometric' or 'arithmetic', got {self.growth!r}")

    @property
    def dim(self) -> int:
        return len(self.center)

    def radius(self, j: int) -> float:
        if j < 0:
            raise ValueError("compact index must be nonnegative")
        if self.growth == "geometric":
            return self.r0 * self.rate ** j
        return self.r0 + j * self.rate

    def radii(self, n: int) -> np.ndarray:
        """Radii of ``K_0 .. K_{n-1}`` computed with the scalar formula."""
        return np.array([self.radius(j) for j in range(n)])

    def distance(self, x) -> np.ndarray | float:
        return norm(np.asarray(x, dtype=float) - np.asarray(self.center))

    def contains(self, j: int, x) -> bool:
        return bool(self.distance(x) <= self.radius(j))

    def index_containing(self, x) -> int:
        dist = float(self.distance(x))
        if not math.isfinite(dist):
            raise ValueError("point is not finite")
        j = 0
        while dist > self.radius(j):
            j += 1
        return j


def contains(family: CompactFamily, j: int, x) -> bool:
    return family.contains(j, x)


def compact_index_containing(family: CompactFamily, x) -> int:
    return family.index_containing(x)

"""Two-dimensional multi-indices."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator


@dataclass(frozen=True, order=True)
class MultiIndex:
    a1: int = 0
    a2: int = 0

    def __post_init__(self):
        if self.a1 < 0 or self.a2 < 0:
            raise ValueError(f"multi-index entries must be non-negative, got {self.as_tuple()}")

    @classmethod
    def of(cls, alpha) -> "MultiIndex":
        if isinstance(alpha, MultiIndex):
            return alpha
        a1, a2 = alpha
        return cls(int(a1), int(a2))

    def as_tuple(self) -> tuple[int, int]:
        return (self.a1, self.a2)

    def __iter__(self):
        return iter((self.a1, self.a2))

    def __len__(self):
        return 2

    def __getitem__(self, i):
        return self.as_tuple()[i]

    def __add__(self, other) -> "MultiIndex":
        other = MultiIndex.of(other)
        return MultiIndex(self.a1 + other.a1, self.a2 + other.a2)

    @property
    def order(self) -> int:
        """|alpha| = a1 + a2."""
        return self.a1 + self.a2

    def factorial(self) -> int:
        return math.factorial(self.a1) * math.factorial(self.a2)

    def power(self, x1, x2):
        """x^alpha for scalars or arrays."""
        return x1**self.a1 * x2**self.a2

    def __repr__(self):
        return f"MultiIndex({self.a1}, {self.a2})"


def of_order(k: int) -> list[MultiIndex]:
    """All multi-indices with |alpha| = k, ordered by decreasing a1."""
    return [MultiIndex(k - j, j) for j in range(k + 1)]


def up_to(k: int) -> Iterator[MultiIndex]:
    for n in range(k + 1):
        yield from of_order(n)


def time_space_indices(order: int) -> list[tuple[int, MultiIndex]]:
    """Pairs (l, beta) with 2l + |beta| = order."""
    return [(l, beta) for l in range(order // 2 + 1) for beta in of_order(order - 2 * l)]


def time_space_range(lo: int, hi: int) -> list[tuple[int, MultiIndex]]:
    """Pairs (l, beta) with lo <= 2l + |beta| <= hi."""
    out = []
    for n in range(lo, hi + 1):
        out.extend(time_space_indices(n))
    return out

"""Exact derivative tables for radial functions g(|x|^2) on the plane.

For a smooth profile g, every derivative has the form

    D^alpha g(r^2) = sum_k g^(k)(r^2) * P_{alpha,k}(x1, x2)

with integer-coefficient polynomials P.  The recursion

    d_j [g^(k) P] = g^(k+1) * 2 x_j P + g^(k) * d_j P

is carried out in exact integer arithmetic.  Polynomials are dicts mapping
exponent pairs (i, j) to ints.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .multiindex import MultiIndex

MAX_ORDER = 12

Poly = dict  # {(i, j): int}
Table = dict  # {k: Poly}


class UnsupportedOrderError(ValueError):
    """Requested derivative order exceeds the precomputed tables."""


def _check_order(order: int, limit: int = MAX_ORDER):
    if order > limit:
        raise UnsupportedOrderError(f"derivative order {order} exceeds table limit {limit}")


def _poly_add(dst: Poly, src: Poly, scale: int = 1):
    for key, c in src.items():
        v = dst.get(key, 0) + scale * c
        if v:
            dst[key] = v
        else:
            dst.pop(key, None)


def _poly_dx(p: Poly, axis: int) -> Poly:
    out: Poly = {}
    for (i, j), c in p.items():
        e = (i, j)[axis]
        if e:
            key = (i - 1, j) if axis == 0 else (i, j - 1)
            out[key] = out.get(key, 0) + c * e
    return {k: v for k, v in out.items() if v}


def _poly_mulx(p: Poly, axis: int, scale: int = 1) -> Poly:
    if axis == 0:
        return {(i + 1, j): scale * c for (i, j), c in p.items()}
    return {(i, j + 1): scale * c for (i, j), c in p.items()}


def _table_dx(tab: Table, axis: int) -> Table:
    out: Table = {}
    for k, p in tab.items():
        _poly_add(out.setdefault(k + 1, {}), _poly_mulx(p, axis, 2))
        _poly_add(out.setdefault(k, {}), _poly_dx(p, axis))
    return {k: p for k, p in out.items() if p}


@lru_cache(maxsize=None)
def radial_table(a1: int, a2: int) -> tuple:
    """Table of D^alpha g(r^2) as a tuple of (k, ((i, j, coef), ...))."""
    _check_order(a1 + a2, MAX_ORDER + 1)
    if a1 == 0 and a2 == 0:
        tab: Table = {0: {(0, 0): 1}}
    elif a1 > 0:
        tab = _table_dx(_unfreeze(radial_table(a1 - 1, a2)), 0)
    else:
        tab = _table_dx(_unfreeze(radial_table(a1, a2 - 1)), 1)
    return _freeze(tab)


@lru_cache(maxsize=None)
def weighted_table(comp: int, a1: int, a2: int) -> tuple:
    """Table of D^alpha [x_comp g(r^2)] via the Leibniz rule."""
    tab: Table = {}
    for k, p in _unfreeze(radial_table(a1, a2)).items():
        _poly_add(tab.setdefault(k, {}), _poly_mulx(p, comp))
    e = (a1, a2)[comp]
    if e:
        lower = (a1 - 1, a2) if comp == 0 else (a1, a2 - 1)
        for k, p in _unfreeze(radial_table(*lower)).items():
            _poly_add(tab.setdefault(k, {}), p, e)
    return _freeze({k: p for k, p in tab.items() if p})


def _freeze(tab: Table) -> tuple:
    return tuple((k, tuple(sorted((i, j, c) for (i, j), c in p.items()))) for k, p in sorted(tab.items()))


def _unfreeze(frozen: tuple) -> Table:
    return {k: {(i, j): c for i, j, c in terms} for k, terms in frozen}


def laplacian_power(l: int, beta) -> list[tuple[int, MultiIndex]]:
    """Expand Delta^l D^beta = sum_c weight * D^gamma (binomial expansion)."""
    beta = MultiIndex.of(beta)
    from math import comb

    return [(comb(l, j), beta + MultiIndex(2 * j, 2 * (l - j))) for j in range(l + 1)]


class SparseTable:
    """Float-valued collapsed table: sum of coef * radial_k * x1^i x2^j per output component.

    Stored as flat arrays so the compiled core can stream them.
    """

    __slots__ = ("ncomp", "comp", "k", "i", "j", "coef")

    def __init__(self, ncomp: int):
        self.ncomp = ncomp
        self.comp = np.zeros(0, dtype=np.int32)
        self.k = np.zeros(0, dtype=np.int32)
        self.i = np.zeros(0, dtype=np.int32)
        self.j = np.zeros(0, dtype=np.int32)
        self.coef = np.zeros(0, dtype=np.float64)

    @classmethod
    def from_dict(cls, ncomp: int, acc: dict) -> "SparseTable":
        """Build from {(comp, k, i, j): coef}; zero entries dropped."""
        tab = cls(ncomp)
        items = [(key, v) for key, v in sorted(acc.items()) if v != 0.0]
        if items:
            keys = np.array([key for key, _ in items], dtype=np.int32)
            tab.comp, tab.k, tab.i, tab.j = (np.ascontiguousarray(keys[:, n]) for n in range(4))
            tab.coef = np.array([v for _, v in items], dtype=np.float64)
        return tab

    @property
    def kmax(self) -> int:
        return int(self.k.max()) if self.k.size else 0

    def __len__(self):
        return int(self.coef.size)


def accumulate(acc: dict, comp: int, frozen: tuple, scale: float):
    """Add scale * (frozen table) into the accumulator for one output component."""
    if scale == 0.0:
        return
    for k, terms in frozen:
        for i, j, c in terms:
            key = (comp, k, i, j)
            acc[key] = acc.get(key, 0.0) + scale * c

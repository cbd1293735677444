"""Heat, Biot-Savart and Riesz-tensor kernels on the plane.

Conventions
-----------
G(t, x) = (4 pi t)^-1 exp(-|x|^2 / 4t).

``bs_kernel`` is the Oseen-vortex kernel  -grad^perp (-Delta)^-1 G, so that the
Biot-Savart velocity is u = bs * omega.  Writing f(r^2) = (1 - e^{-r^2/4t}) / (2 pi r^2),

    bs = (-x2 f, x1 f),      (R^perp R G)_{ij} = -d_j bs_i.

All time derivatives are rewritten through d_t = Delta, which holds for every
kernel here.  Derivatives come from the exact integer tables in ``tables``;
f^(k) is evaluated by the compiled core.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import backend
from .multiindex import MultiIndex
from .tables import (
    MAX_ORDER,
    SparseTable,
    UnsupportedOrderError,
    accumulate,
    laplacian_power,
    radial_table,
    weighted_table,
)

__all__ = [
    "DomainError",
    "AccuracyError",
    "UnsupportedOrderError",
    "SpaceTimePoint",
    "KernelValue",
    "MultiplierSpec",
    "KernelCombo",
    "gauss",
    "gauss_deriv",
    "bs_kernel",
    "bs_kernel_deriv",
    "riesz_tensor",
    "riesz_tensor_deriv",
    "fourier_oracle",
    "BS_MAX_ORDER",
    "RIESZ_MAX_ORDER",
]

# public order limits; the tables go further (MAX_ORDER) for internal series use
BS_MAX_ORDER = 8
RIESZ_MAX_ORDER = 8


class DomainError(ValueError):
    """Kernel evaluated at non-positive time."""


class AccuracyError(RuntimeError):
    """Quadrature could not reach the requested tolerance."""

    def __init__(self, message, achieved):
        super().__init__(message)
        self.achieved = achieved


class SpaceTimePoint(NamedTuple):
    t: float
    x: tuple

    def check(self) -> "SpaceTimePoint":
        _check_time(self.t)
        return self


@dataclass
class KernelValue:
    rank: str  # "scalar" | "vector2" | "tensor2x2"
    entries: np.ndarray
    error: float = 0.0

    def __post_init__(self):
        size = {"scalar": 1, "vector2": 2, "tensor2x2": 4}[self.rank]
        if np.size(self.entries) != size:
            raise ValueError(f"{self.rank} needs {size} entries, got {np.size(self.entries)}")


@dataclass(frozen=True)
class MultiplierSpec:
    family: str  # "heat" | "biot_savart" | "riesz_tensor"
    time_order: int = 0
    space_index: MultiIndex = field(default_factory=MultiIndex)

    def __post_init__(self):
        if self.family not in ("heat", "biot_savart", "riesz_tensor"):
            raise ValueError(f"unknown kernel family {self.family!r}")
        object.__setattr__(self, "space_index", MultiIndex.of(self.space_index))


def _check_time(t):
    if not np.all(np.asarray(t) > 0):
        raise DomainError(f"kernels are singular at t <= 0 (t={t})")


def _split(x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != 2:
        raise ValueError("points must have a trailing axis of length 2")
    return x[..., 0], x[..., 1]


class KernelCombo:
    """Linear combination of heat, Biot-Savart and Riesz kernel derivatives.

    Each output component is a sum of terms ``coef * D^gamma G`` and
    ``coef * D^gamma [x_i f(r^2)]``.  The same term list is realized either
    pointwise from the closed forms (:meth:`evaluate`) or as a Fourier
    symbol on a lattice (:meth:`symbol`), which gives the periodized kernel
    on a torus.
    """

    def __init__(self, ncomp: int = 1):
        self.ncomp = ncomp
        self._gauss: dict = {}
        self._pot: dict = {}
        self._terms: dict = {}  # (comp, kind, g1, g2) -> coef ; kind -1 heat, 0/1 potential x_i f
        self._tables = None

    # -- building ---------------------------------------------------------
    def _add_heat_gamma(self, comp, gamma, coef):
        gamma = MultiIndex.of(gamma)
        if gamma.order > MAX_ORDER:
            raise UnsupportedOrderError(f"order {gamma.order} exceeds table limit {MAX_ORDER}")
        key = (comp, -1, gamma.a1, gamma.a2)
        self._terms[key] = self._terms.get(key, 0.0) + coef
        self._tables = None

    def _add_pot_gamma(self, comp, i, gamma, coef):
        gamma = MultiIndex.of(gamma)
        if gamma.order > MAX_ORDER:
            raise UnsupportedOrderError(f"order {gamma.order} exceeds table limit {MAX_ORDER}")
        key = (comp, i, gamma.a1, gamma.a2)
        self._terms[key] = self._terms.get(key, 0.0) + coef
        self._tables = None

    def add_heat(self, comp: int, l: int, beta, coef: float = 1.0):
        """coef * d_t^l D^beta G into output component ``comp``."""
        for w, gamma in laplacian_power(l, beta):
            self._add_heat_gamma(comp, gamma, coef * w)
        return self

    def add_bs(self, comp: int, i: int, l: int, beta, coef: float = 1.0):
        """coef * d_t^l D^beta bs_i (bs_0 = -x2 f, bs_1 = x1 f)."""
        src, sign = (1, -1.0) if i == 0 else (0, 1.0)
        for w, gamma in laplacian_power(l, beta):
            self._add_pot_gamma(comp, src, gamma, sign * coef * w)
        return self

    def add_riesz(self, comp: int, i: int, j: int, l: int, beta, coef: float = 1.0):
        """coef * d_t^l D^beta (R^perp R G)_{ij}."""
        e_j = MultiIndex(1, 0) if j == 0 else MultiIndex(0, 1)
        return self.add_bs(comp, i, l, MultiIndex.of(beta) + e_j, -coef)

    def add_riesz_applied(self, l: int, beta, vector, coef: float = 1.0):
        """coef * d_t^l D^beta R^perp R G applied to a constant 2-vector (output has 2 comps)."""
        for i in range(2):
            for j in range(2):
                if vector[j] != 0.0:
                    self.add_riesz(i, i, j, l, beta, coef * float(vector[j]))
        return self

    def extend(self, other: "KernelCombo", scale: float = 1.0):
        if other.ncomp != self.ncomp:
            raise ValueError("component count mismatch")
        for key, c in other._terms.items():
            self._terms[key] = self._terms.get(key, 0.0) + scale * c
        self._tables = None
        return self

    def scaled(self, scale: float) -> "KernelCombo":
        out = KernelCombo(self.ncomp)
        return out.extend(self, scale)

    @property
    def is_zero(self) -> bool:
        return all(c == 0.0 for c in self._terms.values())

    @property
    def max_order(self) -> int:
        return max((g1 + g2 for (_, _, g1, g2) in self._terms), default=0)

    # -- closed-form realization -----------------------------------------
    def _collapse(self):
        if self._tables is None:
            gauss, pot = {}, {}
            for (comp, kind, g1, g2), c in self._terms.items():
                if kind < 0:
                    accumulate(gauss, comp, radial_table(g1, g2), c)
                else:
                    accumulate(pot, comp, weighted_table(kind, g1, g2), c)
            self._tables = (SparseTable.from_dict(self.ncomp, gauss), SparseTable.from_dict(self.ncomp, pot))
        return self._tables

    def evaluate(self, t: float, x1, x2) -> np.ndarray:
        """Values at points (x1, x2); returns shape (ncomp, *x1.shape)."""
        _check_time(t)
        x1 = np.asarray(x1, dtype=np.float64)
        x2 = np.broadcast_to(np.asarray(x2, dtype=np.float64), x1.shape)
        shape = x1.shape
        a1, a2 = x1.ravel(), np.ascontiguousarray(x2).ravel()
        s = a1 * a1 + a2 * a2
        a = 1.0 / (4.0 * t)
        out = np.zeros((self.ncomp, a1.size))
        gtab, ptab = self._collapse()
        if len(gtab):
            kmax = gtab.kmax
            g = np.exp(-a * s) * (a / math.pi)
            rad = g[None, :] * ((-a) ** np.arange(kmax + 1))[:, None]
            out += backend.table_sum(a1, a2, rad, gtab.comp, gtab.k, gtab.i, gtab.j, gtab.coef, self.ncomp)
        if len(ptab):
            rad = backend.potential_radials(s, a, ptab.kmax) / (2.0 * math.pi)
            out += backend.table_sum(a1, a2, rad, ptab.comp, ptab.k, ptab.i, ptab.j, ptab.coef, self.ncomp)
        return out.reshape((self.ncomp,) + shape)

    # -- Fourier realization ---------------------------------------------
    def symbol(self, t: float, k1, k2) -> np.ndarray:
        """Transform  F~(k) = int F(x) e^{-i k.x} dx  at wavevectors (k1, k2).

        The k = 0 value of the potential family is set to zero (it is only
        defined as a principal value for first-order terms).
        """
        _check_time(t)
        k1 = np.asarray(k1, dtype=np.float64)
        k2 = np.asarray(k2, dtype=np.float64)
        k1, k2 = np.broadcast_arrays(k1, k2)
        ksq = k1 * k1 + k2 * k2
        heat = np.exp(-t * ksq)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = np.where(ksq > 0, 1.0 / np.where(ksq > 0, ksq, 1.0), 0.0)
        out = np.zeros((self.ncomp,) + k1.shape, dtype=np.complex128)
        ik1, ik2 = 1j * k1, 1j * k2
        powers: dict = {}

        def mono(g1, g2):
            key = (g1, g2)
            if key not in powers:
                powers[key] = ik1**g1 * ik2**g2
            return powers[key]

        for (comp, kind, g1, g2), c in self._terms.items():
            if c == 0.0:
                continue
            if kind < 0:
                out[comp] += c * mono(g1, g2) * heat
            else:
                kk = k1 if kind == 0 else k2
                out[comp] += c * mono(g1, g2) * (-1j * kk) * inv * heat
        return out


# --------------------------------------------------------------------------
# point evaluators


def _single(combo: KernelCombo, t, x):
    _check_time(t)
    x1, x2 = _split(x)
    vals = combo.evaluate(t, x1, x2)
    return np.moveaxis(vals, 0, -1)


def gauss(t, x):
    """Heat kernel (4 pi t)^-1 exp(-|x|^2/4t)."""
    _check_time(t)
    x1, x2 = _split(x)
    return np.exp(-(x1 * x1 + x2 * x2) / (4.0 * t)) / (4.0 * math.pi * t)


def gauss_deriv(alpha, t, x):
    """D^alpha G from the Hermite-type tables (exact integer coefficients)."""
    alpha = MultiIndex.of(alpha)
    if alpha.order > MAX_ORDER:
        raise UnsupportedOrderError(f"order {alpha.order} exceeds table limit {MAX_ORDER}")
    return _single(KernelCombo(1).add_heat(0, 0, alpha), t, x)[..., 0]


def bs_kernel(t, x):
    """Oseen kernel x^perp (1 - e^{-|x|^2/4t}) / (2 pi |x|^2), continuous at the origin."""
    return bs_kernel_deriv((0, 0), t, x)


def bs_kernel_deriv(alpha, t, x):
    """D^alpha of the Oseen kernel; vector of length 2 on the trailing axis."""
    alpha = MultiIndex.of(alpha)
    if alpha.order > BS_MAX_ORDER:
        raise UnsupportedOrderError(f"Biot-Savart derivative order {alpha.order} > {BS_MAX_ORDER}")
    combo = KernelCombo(2)
    combo.add_bs(0, 0, 0, alpha)
    combo.add_bs(1, 1, 0, alpha)
    return _single(combo, t, x)


def riesz_tensor(t, x):
    """R^perp R G laid out as [[-R2R1, -R2^2], [R1^2, R1R2]] G on the trailing two axes."""
    return riesz_tensor_deriv(0, (0, 0), t, x)


def riesz_tensor_deriv(l, beta, t, x):
    """d_t^l D^beta R^perp R G, using d_t = Delta."""
    beta = MultiIndex.of(beta)
    if 2 * l + beta.order > RIESZ_MAX_ORDER:
        raise UnsupportedOrderError(f"order 2l+|beta| = {2 * l + beta.order} > {RIESZ_MAX_ORDER}")
    combo = KernelCombo(4)
    for i in range(2):
        for j in range(2):
            combo.add_riesz(2 * i + j, i, j, l, beta)
    vals = _single(combo, t, x)
    return vals.reshape(vals.shape[:-1] + (2, 2))


# --------------------------------------------------------------------------
# independent quadrature oracle


def _family_symbol(spec: MultiplierSpec, xi1, xi2, t):
    """Symbol in the (2 pi)^-1 normalized transform, as an array (..., ncomp)."""
    rho2 = xi1 * xi1 + xi2 * xi2
    base = np.exp(-t * rho2) / (2.0 * math.pi)
    b = spec.space_index
    deriv = (1j * xi1) ** b.a1 * (1j * xi2) ** b.a2 * (-rho2) ** spec.time_order
    common = base * deriv
    if spec.family == "heat":
        return common[..., None]
    inv = 1.0 / rho2
    if spec.family == "biot_savart":
        # -i xi^perp / |xi|^2, xi^perp = (-xi2, xi1)
        return np.stack([1j * xi2 * inv * common, -1j * xi1 * inv * common], axis=-1)
    # -xi^perp_i xi_j / |xi|^2
    perp = (-xi2, xi1)
    xi = (xi1, xi2)
    return np.stack([-perp[i] * xi[j] * inv * common for i in range(2) for j in range(2)], axis=-1)


def _oracle_nodes(t, radius_scale, nrho, ntheta):
    rho, wr = np.polynomial.legendre.leggauss(nrho)
    rho = 0.5 * radius_scale * (rho + 1.0)
    wr = 0.5 * radius_scale * wr
    theta = 2.0 * math.pi * np.arange(ntheta) / ntheta
    wt = 2.0 * math.pi / ntheta
    R, T = np.meshgrid(rho, theta, indexing="ij")
    W = (wr[:, None] * wt) * R
    return R * np.cos(T), R * np.sin(T), W


def _oracle_sum(spec, t, x, radius, nrho, ntheta):
    xi1, xi2, w = _oracle_nodes(t, radius, nrho, ntheta)
    sym = _family_symbol(spec, xi1, xi2, t)
    phase = np.exp(1j * (x[0] * xi1 + x[1] * xi2))
    vals = np.tensordot(w * phase, sym, axes=([0, 1], [0, 1])) / (2.0 * math.pi)
    return vals.real


def fourier_oracle(spec: MultiplierSpec, t, x, nrho: int | None = None, ntheta: int | None = None,
                   tol: float = 1e-11) -> KernelValue:
    """(2 pi)^-1 int symbol(xi) e^{i x.xi} d xi by polar Gauss-Legendre x trapezoid quadrature.

    The disk radius makes the Gaussian tail (times the polynomial growth of
    the derivative factor) fall below 1e-16.  The error estimate is the change
    when both node counts grow by half; exceeding ``tol`` (relative to the
    value scale) raises AccuracyError.
    """
    _check_time(t)
    x = np.asarray(x, dtype=np.float64)
    deg = spec.space_index.order + 2 * spec.time_order
    radius = math.sqrt((37.0 + deg * math.log(1.0 + 40.0 / t)) / t)
    reach = float(np.hypot(x[0], x[1])) * radius
    if nrho is None:
        nrho = int(max(64, 0.5 * reach + 48 + 2 * deg))
    if ntheta is None:
        ntheta = int(max(64, 2 * (int(reach) + 24 + deg)))
    v1 = _oracle_sum(spec, t, x, radius, nrho, ntheta)
    v2 = _oracle_sum(spec, t, x, radius, nrho + nrho // 2, ntheta + ntheta // 2)
    err = float(np.max(np.abs(v2 - v1)))
    scale = max(float(np.max(np.abs(v2))), 1e-300)
    rank = {"heat": "scalar", "biot_savart": "vector2", "riesz_tensor": "tensor2x2"}[spec.family]
    if err > tol * max(scale, _value_scale(spec, t)):
        raise AccuracyError(f"oracle error {err:.3e} above tolerance", err)
    return KernelValue(rank, v2, err)


def _value_scale(spec, t):
    """Typical magnitude of the kernel at time t (its sup is ~ t^-(n+order)/2)."""
    n = {"heat": 2, "biot_savart": 1, "riesz_tensor": 2}[spec.family]
    return t ** (-(n + spec.space_index.order + 2 * spec.time_order) / 2.0) / (4.0 * math.pi)

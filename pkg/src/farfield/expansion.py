"""Asymptotic profiles of the velocity and their assembly into approximations.

Every profile except J_m is a finite sum of kernel derivatives with scalar
(or 2-vector) coefficients, so it is represented as a :class:`KernelCombo`
and realized on a grid either pointwise (``"plane"``) or as the periodized
kernel via its Fourier symbol (``"torus"``, the default, consistent with the
periodic solver).  The nonlinear profiles I_5 and I_6 are pointwise products.
J_m is a space-time integral evaluated mode by mode in Fourier space.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .fields import GridSpec, ScalarField, VectorField, ShapeError, moments as field_moments
from .kernels import KernelCombo
from .multiindex import MultiIndex, of_order, time_space_indices, time_space_range, up_to
from .solver import DependencyError, MomentTable, Trajectory, accumulate_renormalized_moments, power_integral

__all__ = [
    "ExpansionOptions",
    "ExpansionCoefficients",
    "ProfileTerm",
    "PrecisionWarning",
    "IntegrationError",
    "DefinitionError",
    "build_U_m",
    "build_U_m_t",
    "build_U_m_inf",
    "build_Omega_m",
    "build_I_p",
    "build_K_m",
    "build_J_m",
    "build_V_m",
    "J_certificate",
    "assemble",
    "residual",
    "term",
    "tail_integral",
    "tail_difference",
    "VARIANTS",
]

KINDS = {"U_m": (1, 4), "U_m_t": (1, 4), "U_m_inf": (1, 4), "Omega_m": (2, 3), "I_p": (5, 6),
         "K_m": (3, 4), "J_m": (3, 4), "V_m": (3, 4)}
PROFILE_MOMENT_ORDER = 12


class PrecisionWarning(UserWarning):
    pass


class IntegrationError(RuntimeError):
    pass


class DefinitionError(ValueError):
    pass


@dataclass(frozen=True)
class ExpansionOptions:
    tail_model: str = "profile"  # "profile" or "none"
    unit_n: int = 128
    unit_L: float = 14.0
    eps_fraction: float = 1.0 / 64.0
    eps_levels: int = 3
    panel_nodes: int = 16
    series_orders: int = 8
    k_cut: float = 80.0
    fixed_point_tol: float = 1e-13
    fixed_point_maxiter: int = 60
    tail_warning: float = 0.1

    def __post_init__(self):
        if self.tail_model not in ("profile", "none"):
            raise ValueError(f"unknown tail model {self.tail_model!r}")


@dataclass
class ProfileTerm:
    kind: str
    order: int
    t: float
    field: object
    uncertainty: float = 0.0
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        lo, hi = KINDS.get(self.kind, (1, 0))
        if not lo <= self.order <= hi:
            raise ValueError(f"{self.kind} is not defined for order {self.order}")


# --------------------------------------------------------------------------
# closed-form time integrals


def tail_integral(l: int, a: float, T: float, shift: float = 0.0) -> float:
    """int_T^inf (-s)^l (shift + s)^a ds; requires l + a < -1."""
    if l + a >= -1:
        raise DefinitionError(f"tail exponent {l + a} is not integrable at infinity")
    if shift == 0.0:
        e = l + a + 1
        return -((-1) ** l) * T**e / e
    total = 0.0
    for j in range(l + 1):
        e = j + a + 1
        c = math.comb(l, j) * (-1) ** (l - j) * (-1) ** l
        total -= c * (shift + T) ** e / e
    return total


def _antiderivative(l, a, s, shift):
    """Antiderivative of (-s)^l (shift + s)^a with logs kept explicit."""
    if shift == 0.0:
        e = l + a + 1
        return (-1) ** l * (math.log(s) if e == 0 else s**e / e)
    total = 0.0
    for j in range(l + 1):
        e = j + a + 1
        c = math.comb(l, j) * (-1) ** (l - j) * (-1) ** l
        total += c * (math.log(shift + s) if e == 0 else (shift + s) ** e / e)
    return total


def tail_difference(l: int, a: float, T: float) -> float:
    """int_T^inf (-s)^l [s^a - (1 + s)^a] ds, convergent also when l + a = -1."""
    if l + a > -1:
        raise DefinitionError(f"tail exponent {l + a} is not integrable at infinity")
    if l + a < -1:
        return tail_integral(l, a, T) - tail_integral(l, a, T, shift=1.0)
    return -(_antiderivative(l, a, T, 0.0) - _antiderivative(l, a, T, 1.0))


# --------------------------------------------------------------------------
# kernel combinations


def _vec(v):
    return np.asarray(v, dtype=float).reshape(2)


def combo_U(m: int, coeffs) -> KernelCombo:
    combo = KernelCombo(2)
    for alpha in of_order(m + 1):
        c = coeffs.initial_moment(alpha) / alpha.factorial()
        if c != 0.0:
            for i in range(2):
                combo.add_bs(i, i, 0, alpha, c)
    return combo


def _riesz_sum(m: int, vectors: dict, lfact: bool) -> KernelCombo:
    combo = KernelCombo(2)
    for (l, beta), v in vectors.items():
        norm = beta.factorial() * (math.factorial(l) if lfact else 1)
        v = _vec(v)
        if np.any(v != 0.0):
            combo.add_riesz_applied(l, beta, v / norm)
    return combo


def _order_indices(m):
    if m <= 2:
        return [(0, b) for b in of_order(m)]
    return time_space_indices(m)


def combo_U_t(m: int, t: float, coeffs) -> KernelCombo:
    if t == 0.0:
        return KernelCombo(2)
    vecs = {key: coeffs.finite(m, key, t) for key in _order_indices(m)}
    return _riesz_sum(m, vecs, lfact=(m == 4))


def combo_U_inf(m: int, coeffs) -> KernelCombo:
    vecs = {key: coeffs.infinite(m, key) for key in _order_indices(m)}
    return _riesz_sum(m, vecs, lfact=(m == 4))


def combo_Omega(m: int, coeffs) -> KernelCombo:
    combo = KernelCombo(1)
    for alpha in of_order(m):
        c = coeffs.initial_moment(alpha) / alpha.factorial()
        if c != 0.0:
            combo.add_heat(0, 0, alpha, c)
    for beta in of_order(m - 1):
        v = _vec(coeffs.infinite(m - 1, (0, beta))) / beta.factorial()
        for j in range(2):
            if v[j] != 0.0:
                e = MultiIndex(1, 0) if j == 0 else MultiIndex(0, 1)
                combo.add_heat(0, 0, beta + e, -v[j])
    return combo


def combo_K(m: int, t: float, coeffs, shift: float = 1.0) -> KernelCombo:
    """The profile argument is shifted to ``shift`` + s; shift = 1 is the expansion term."""
    p = m + 2
    vecs = {}
    for l, beta in time_space_indices(m):
        a = (beta.order - p) / 2.0
        w = power_integral(l, a, 0.0, t, shift=shift) if t > 0 else 0.0
        vecs[(l, beta)] = w * _vec(coeffs.profile_moment(p, beta))
    return _riesz_sum(m, vecs, lfact=(m == 4))


def combo_V(m: int, t: float, coeffs) -> KernelCombo:
    p = m + 2
    keys = [(0, b) for k in (1, 2) for b in of_order(k)] if m == 3 else time_space_range(1, 3)
    vecs = {}
    for l, beta in keys:
        a = (beta.order - p) / 2.0
        vecs[(l, beta)] = -tail_integral(l, a, t) * _vec(coeffs.profile_moment(p, beta))
    return _riesz_sum(m, vecs, lfact=False)


# --------------------------------------------------------------------------
# realization on a grid


def _half_lattice(grid: GridSpec):
    n = grid.n
    m1 = np.fft.fftfreq(n, d=1.0 / n).astype(int)
    m2 = np.arange(n // 2 + 1)
    k1 = m1 * (math.pi / grid.L)
    k2 = m2 * (math.pi / grid.L)
    phase = np.where((m1[:, None] + m2[None, :]) % 2 == 0, 1.0, -1.0)
    return k1, k2, phase


def _from_half_symbol(grid: GridSpec, sym: np.ndarray) -> np.ndarray:
    _, _, phase = _half_lattice(grid)
    n = grid.n
    return np.fft.irfft2(sym * phase, s=(n, n), axes=(-2, -1)) * (n * n / grid.area)


def realize(combo: KernelCombo, t: float, grid: GridSpec, mode: str = "torus") -> np.ndarray:
    """Samples (ncomp, n, n) of a kernel combination at time t."""
    if combo.is_zero:
        return np.zeros((combo.ncomp, grid.n, grid.n))
    if mode == "plane":
        X1, X2 = grid.coords
        return combo.evaluate(t, X1, X2)
    if mode != "torus":
        raise ValueError(f"unknown realization {mode!r}")
    k1, k2, _ = _half_lattice(grid)
    K1, K2 = np.meshgrid(k1, k2, indexing="ij")
    return _from_half_symbol(grid, combo.symbol(t, K1, K2))


# --------------------------------------------------------------------------
# coefficients


class ExpansionCoefficients:
    """Initial moments, finite- and infinite-horizon flux integrals, and the
    unit-time moments of the nonlinear profiles I_5 and I_6."""

    def __init__(self, initial: dict, table: MomentTable | None, T: float, options: ExpansionOptions | None = None):
        self.initial = {MultiIndex.of(k): float(v) for k, v in initial.items()}
        self.table = table
        self.T = T
        self.options = options or ExpansionOptions()
        self.S_inf: dict = {}
        self.tails: dict = {}
        self.uncertainty: dict = {}
        self.mu: dict = {}
        self.iterations = 0
        self._unit = {}
        self._cache = {}

    # -- access ------------------------------------------------------------
    def initial_moment(self, alpha) -> float:
        alpha = MultiIndex.of(alpha)
        if alpha not in self.initial:
            raise DependencyError(f"initial moment {tuple(alpha)} is not available")
        return self.initial[alpha]

    @staticmethod
    def _kind(m):
        return "plain" if m <= 2 else ("order3" if m == 3 else "order4")

    def finite(self, m, key, t) -> np.ndarray:
        l, beta = key
        if self.table is None:
            return np.zeros(2)
        return self.table.S(l, beta, t, kind=self._kind(m))

    def infinite(self, m, key) -> np.ndarray:
        l, beta = key
        k = (self._kind(m), l, MultiIndex.of(beta))
        if k not in self.S_inf:
            raise DependencyError(f"no infinite-horizon coefficient for {k}")
        return self.S_inf[k]

    def profile_moment(self, p, beta) -> np.ndarray:
        if p not in self.mu:
            raise DependencyError(f"unit-time moments of I_{p} are not available")
        return self.mu[p][MultiIndex.of(beta)]

    # -- construction --------------------------------------------------------
    @classmethod
    def zeros(cls, options=None, T=1.0):
        c = cls({a: 0.0 for a in up_to(7)}, None, T, options)
        for kind, order in (("plain", 1), ("plain", 2), ("order3", 3), ("order4", 4)):
            for l, beta in _order_indices(order):
                c.S_inf[(kind, l, beta)] = np.zeros(2)
                c.tails[(kind, l, beta)] = np.zeros(2)
                c.uncertainty[(kind, l, beta)] = 0.0
        c._refresh_profiles()
        return c

    @classmethod
    def from_trajectory(cls, traj: Trajectory, options: ExpansionOptions | None = None, T: float | None = None):
        table = traj.moments
        T = float(table.times[-1]) if T is None else T
        c = cls(table.initial, table, T, options)
        c._solve_infinite()
        accumulate_renormalized_moments(traj, lambda p: c.mu.get(p))
        c._renormalized_infinite()
        return c

    @classmethod
    def from_moments(cls, initial: dict, S_inf: dict, options=None):
        """Coefficients given directly (m = 1, 2 infinite-horizon vectors keyed by beta)."""
        c = cls.zeros(options)
        c.initial.update({MultiIndex.of(k): float(v) for k, v in initial.items()})
        for beta, v in S_inf.items():
            beta = MultiIndex.of(beta)
            c.S_inf[("plain", 0, beta)] = _vec(v)
        c._refresh_profiles()
        return c

    def _refresh_profiles(self):
        self._unit = {}
        self._cache = {}
        for p in (5, 6):
            f = self.unit_profile(p)
            self.mu[p] = field_moments(f, PROFILE_MOMENT_ORDER)

    def unit_grid(self) -> GridSpec:
        return GridSpec(self.options.unit_n, self.options.unit_L)

    def unit_profile(self, p: int) -> VectorField:
        if p not in self._unit:
            self._unit[p] = build_I_p(p, 1.0, self.unit_grid(), self, mode="plane")
        return self._unit[p]

    def _model_tail(self, l, beta, T):
        """Tail of the flux moment integral predicted by the I_5 + I_6 profiles."""
        a5 = (beta.order - 5) / 2.0
        a6 = (beta.order - 6) / 2.0
        return tail_integral(l, a5, T) * self.mu[5][beta] + tail_integral(l, a6, T) * self.mu[6][beta]

    def _flux_residual_envelope(self, l, beta, next_exponent):
        """Tail bound from the part of the flux moment at T that the profiles miss,
        assuming it decays with the next half-integer power."""
        table, T = self.table, self.T
        a5 = (beta.order - 5) / 2.0
        a6 = (beta.order - 6) / 2.0
        model = T**a5 * self.mu[5][beta] + T**a6 * self.mu[6][beta]
        r = (-T) ** l * (table.sample(beta)[table._index(T)] - model)
        return float(np.linalg.norm(r)) * T / abs(next_exponent + 1.0)

    def _solve_infinite(self):
        opts, T, table = self.options, self.T, self.table
        keys = [(0, b) for k in (1, 2) for b in of_order(k)]
        for l, beta in keys:
            self.S_inf[("plain", l, beta)] = table.S(l, beta, T).copy()
        self._refresh_profiles()
        if opts.tail_model == "none":
            for l, beta in keys:
                self.tails[("plain", l, beta)] = np.zeros(2)
            self.uncertainty.update({("plain", l, b): float("nan") for l, b in keys})
            return
        for it in range(opts.fixed_point_maxiter):
            change, scale = 0.0, 0.0
            for l, beta in keys:
                tail = self._model_tail(l, beta, T)
                new = table.S(l, beta, T) + tail
                old = self.S_inf[("plain", l, beta)]
                change = max(change, float(np.max(np.abs(new - old))))
                scale = max(scale, float(np.max(np.abs(new))))
                self.S_inf[("plain", l, beta)] = new
                self.tails[("plain", l, beta)] = tail
            self._refresh_profiles()
            self.iterations = it + 1
            if change <= opts.fixed_point_tol * max(scale, 1e-300):
                break
        else:
            raise IntegrationError("infinite-horizon fixed point did not converge")
        for l, beta in keys:
            self.uncertainty[("plain", l, beta)] = self._flux_residual_envelope(l, beta, (beta.order - 7) / 2.0)

    def _renormalized_infinite(self):
        T, table = self.T, self.table
        none = self.options.tail_model == "none"
        for l, beta in time_space_indices(3):
            a5 = (beta.order - 5) / 2.0
            a6 = (beta.order - 6) / 2.0
            if none:
                tail = np.zeros(2)
            else:
                tail = tail_difference(l, a5, T) * self.mu[5][beta] + tail_integral(l, a6, T) * self.mu[6][beta]
            self.S_inf[("order3", l, beta)] = table.S(l, beta, T, kind="order3") + tail
            self.tails[("order3", l, beta)] = tail
            self.uncertainty[("order3", l, beta)] = float("nan") if none else self._flux_residual_envelope(l, beta, -2.0)
        for l, beta in time_space_indices(4):
            a5 = (beta.order - 5) / 2.0
            a6 = (beta.order - 6) / 2.0
            tail = np.zeros(2) if none else tail_difference(l, a6, T) * self.mu[6][beta]
            self.S_inf[("order4", l, beta)] = table.S(l, beta, T, kind="order4") + tail
            self.tails[("order4", l, beta)] = tail
            self.uncertainty[("order4", l, beta)] = float("nan") if none else self._flux_residual_envelope(l, beta, -1.5)
        self._cache = {}

    def tail_report(self) -> list:
        """(kind, l, beta, coefficient, tail, uncertainty) rows."""
        rows = []
        for key in sorted(self.S_inf, key=lambda k: (k[0], k[1], k[2].as_tuple())):
            rows.append((key[0], key[1], key[2], self.S_inf[key], self.tails.get(key), self.uncertainty.get(key)))
        return rows


# --------------------------------------------------------------------------
# profile builders


def _check_m(kind, m):
    lo, hi = KINDS[kind]
    if not lo <= m <= hi:
        raise ValueError(f"{kind} is defined for orders {lo}..{hi}, got {m}")


def _cached(coeffs, key, fn):
    if key not in coeffs._cache:
        coeffs._cache[key] = fn()
    return coeffs._cache[key]


def build_U_m(m: int, t: float, grid: GridSpec, coeffs, mode: str = "torus") -> VectorField:
    """sum over |alpha| = m+1 of D^alpha bs(t) m_alpha / alpha!  (bs = -grad^perp (-Lap)^-1 G)."""
    _check_m("U_m", m)
    return VectorField(grid, realize(combo_U(m, coeffs), t, grid, mode), t)


def build_U_m_t(m: int, t: float, grid: GridSpec, coeffs, mode: str = "torus") -> VectorField:
    _check_m("U_m_t", m)
    return VectorField(grid, realize(combo_U_t(m, t, coeffs), t, grid, mode), t)


def build_U_m_inf(m: int, t: float, grid: GridSpec, coeffs, mode: str = "torus") -> VectorField:
    _check_m("U_m_inf", m)
    kind = ExpansionCoefficients._kind(m)
    thr = coeffs.options.tail_warning
    for l, beta in _order_indices(m):
        key = (kind, l, MultiIndex.of(beta))
        tail = coeffs.tails.get(key)
        coef = coeffs.S_inf.get(key)
        if tail is not None and coef is not None and np.linalg.norm(tail) > thr * np.linalg.norm(coef) > 0:
            warnings.warn(f"tail of {key} exceeds {thr:.0%} of the coefficient", PrecisionWarning, stacklevel=2)
    return VectorField(grid, realize(combo_U_inf(m, coeffs), t, grid, mode), t)


def build_Omega_m(m: int, t: float, grid: GridSpec, coeffs, mode: str = "torus") -> ScalarField:
    _check_m("Omega_m", m)
    return ScalarField(grid, realize(combo_Omega(m, coeffs), t, grid, mode)[0], t)


def build_I_p(p: int, t: float, grid: GridSpec, coeffs, mode: str = "torus") -> VectorField:
    """I_5 = Omega_2 (U_1 + U_1^inf);  I_6 = Omega_3 (U_1 + U_1^inf) + Omega_2 (U_2 + U_2^inf)."""
    _check_m("I_p", p)

    def vel(m):
        c = combo_U(m, coeffs).extend(combo_U_inf(m, coeffs))
        return realize(c, t, grid, mode)

    om2 = realize(combo_Omega(2, coeffs), t, grid, mode)[0]
    if p == 5:
        out = om2[None] * vel(1)
    else:
        om3 = realize(combo_Omega(3, coeffs), t, grid, mode)[0]
        out = om3[None] * vel(1) + om2[None] * vel(2)
    return VectorField(grid, out, t)


def build_K_m(m: int, t: float, grid: GridSpec, coeffs, mode: str = "torus", shift: float = 1.0) -> VectorField:
    """Closed form with int_0^t (-s)^l (shift+s)^((|beta|-p)/2) ds done exactly."""
    _check_m("K_m", m)
    return VectorField(grid, realize(combo_K(m, t, coeffs, shift), t, grid, mode), t)


def build_V_m(m: int, t: float, grid: GridSpec, coeffs, mode: str = "torus") -> VectorField:
    _check_m("V_m", m)
    return VectorField(grid, realize(combo_V(m, t, coeffs), t, grid, mode), t)


# --------------------------------------------------------------------------
# J_m by Fourier-space quadrature


def _riesz_base(K1, K2):
    """Transform of R^perp R G at t = 0 without the heat factor; zero at k = 0."""
    ksq = K1 * K1 + K2 * K2
    inv = np.where(ksq > 0, 1.0 / np.where(ksq > 0, ksq, 1.0), 0.0)
    # rows: (-R2 R_j, R1 R_j), R_a R_b -> -k_a k_b / |k|^2
    return np.array([[K2 * K1 * inv, K2 * K2 * inv], [-K1 * K1 * inv, -K1 * K2 * inv]])


class _JQuadrature:
    """Transform of J_m at lattice modes within the heat-factor cutoff."""

    def __init__(self, m, t, grid, coeffs, panel_nodes=None):
        opts = coeffs.options
        self.m, self.t, self.grid, self.coeffs = m, t, grid, coeffs
        self.p = m + 2
        self.N = m
        k1, k2, _ = _half_lattice(grid)
        kc = math.sqrt(opts.k_cut / t)
        self.sel1 = np.nonzero(np.abs(k1) <= kc)[0]
        self.sel2 = np.nonzero(k2 <= kc)[0]
        self.k1 = k1[self.sel1]
        self.k2 = k2[self.sel2]
        K1, K2 = np.meshgrid(self.k1, self.k2, indexing="ij")
        self.ksq = K1 * K1 + K2 * K2
        self.base = _riesz_base(K1, K2)
        self.iK1, self.iK2 = 1j * K1, 1j * K2
        self.heat_t = np.exp(-t * self.ksq)
        ug = coeffs.unit_grid()
        self.z = ug.x
        self.hu2 = ug.h**2
        self.prof = np.asarray(coeffs.unit_profile(self.p).samples)
        self.mu = coeffs.mu[self.p]
        self.q = panel_nodes or opts.panel_nodes
        self.levels = int(round(math.log2(1.0 / opts.eps_fraction))) + opts.eps_levels - 1
        self._taylor_cache = {}

    def _apply(self, vec_fields):
        """Tensor symbol applied to a 2-vector of mode arrays."""
        b = self.base
        return np.array([b[0, 0] * vec_fields[0] + b[0, 1] * vec_fields[1],
                         b[1, 0] * vec_fields[0] + b[1, 1] * vec_fields[1]])

    def taylor_symbol(self, l, beta):
        """(-|k|^2)^l (ik)^beta / (l! beta!) * R^perp R G~(t, k) mu_beta."""
        key = (l, beta)
        if key not in self._taylor_cache:
            mu = _vec(self.mu[beta])
            fac = (-self.ksq) ** l * self.iK1**beta.a1 * self.iK2**beta.a2 * self.heat_t
            fac = fac / (math.factorial(l) * beta.factorial())
            self._taylor_cache[key] = self._apply(np.array([mu[0] * fac, mu[1] * fac]))
        return self._taylor_cache[key]

    def integrand(self, s):
        root = math.sqrt(s)
        E1 = np.exp(-1j * root * np.outer(self.k1, self.z))
        E2 = np.exp(-1j * root * np.outer(self.z, self.k2))
        It = np.array([E1 @ self.prof[c] @ E2 for c in range(2)]) * (self.hu2 * s ** (-self.p / 2.0))
        conv = self._apply(It) * np.exp(-(self.t - s) * self.ksq)
        for j in range(self.N + 1):
            for l, beta in time_space_indices(j):
                e = l + (beta.order - self.p) / 2.0
                conv = conv - self.taylor_symbol(l, beta) * ((-1) ** l * s**e)
        return conv

    def panel(self, a, b):
        x, w = np.polynomial.legendre.leggauss(self.q)
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        total = 0.0
        for xi, wi in zip(x, w):
            total = total + wi * half * self.integrand(mid + half * xi)
        return total

    def series(self, eps):
        """Analytic integral over [0, eps] of the Taylor orders above N."""
        total = 0.0
        top = min(self.N + self.coeffs.options.series_orders, PROFILE_MOMENT_ORDER)
        for j in range(self.N + 1, top + 1):
            e = (j - self.p) / 2.0
            for l, beta in time_space_indices(j):
                total = total + self.taylor_symbol(l, beta) * ((-1) ** l * eps ** (e + 1) / (e + 1))
        return total

    def run(self):
        """Return (J~ at eps_min with series correction, [J~ numerical part at each eps level], eps levels)."""
        t = self.t
        panels = []
        for j in range(self.levels):
            panels.append(self.panel(t / 2 ** (j + 1), t / 2**j))
        eps0_level = int(round(math.log2(1.0 / self.coeffs.options.eps_fraction)))
        partial, eps_vals = [], []
        acc = 0.0
        for j, pv in enumerate(panels):
            acc = acc + pv
            if j + 1 >= eps0_level:
                partial.append(acc.copy())
                eps_vals.append(t / 2 ** (j + 1))
        full = acc + self.series(t / 2**self.levels)
        return full, partial, eps_vals

    def to_field(self, modes):
        n = self.grid.n
        sym = np.zeros((2, n, n // 2 + 1), dtype=complex)
        sym[np.ix_([0, 1], self.sel1, self.sel2)] = modes
        return _from_half_symbol(self.grid, sym)


def _j_result(m, t, grid, coeffs, panel_nodes=None):
    def compute():
        quad = _JQuadrature(m, t, grid, coeffs, panel_nodes)
        full, partial, eps = quad.run()
        return quad.to_field(full), [quad.to_field(pv) for pv in partial], eps

    key = ("J", m, float(t), grid, panel_nodes or coeffs.options.panel_nodes)
    return _cached(coeffs, key, compute)


def build_J_m(m: int, t: float, grid: GridSpec, coeffs, mode: str = "torus", panel_nodes: int | None = None) -> VectorField:
    """int_0^t int [R^perp R G(t-s, x-y) - Taylor_m] I_{m+2}(s, y) dy ds on the torus."""
    _check_m("J_m", m)
    if mode != "torus":
        raise ValueError("J_m is realized on the torus only")
    if coeffs.mu.get(m + 2) is None:
        raise DependencyError(f"J_{m} requires the I_{m + 2} profile")
    full, _, _ = _j_result(m, t, grid, coeffs, panel_nodes)
    return VectorField(grid, full, t)


def J_certificate(m: int, t: float, grid: GridSpec, coeffs, panel_nodes: int | None = None) -> dict:
    """eps-sequence of truncated integrals, their increments and Richardson limit.

    The truncated integral over [eps, t] behaves like J - a eps^(1/2) - b eps;
    eliminating both terms from three levels gives the extrapolated value.
    """
    full, partial, eps = _j_result(m, t, grid, coeffs, panel_nodes)
    incr = [float(np.max(np.abs(b - a))) for a, b in zip(partial, partial[1:])]
    monotone = all(y < x for x, y in zip(incr, incr[1:]))
    rich = None
    if len(partial) >= 3:
        A = np.array([[1.0, -math.sqrt(e), -e] for e in eps[-3:]])
        coef = np.linalg.solve(A, np.eye(3))[0]
        rich = sum(c * f for c, f in zip(coef, partial[-3:]))
    scale = max(float(np.max(np.abs(full))), 1e-300)
    gap = float(np.max(np.abs(rich - full))) / scale if rich is not None else float("nan")
    if not monotone:
        raise IntegrationError(f"eps-sequence increments do not shrink: {incr}")
    return {"eps": eps, "increments": incr, "monotone": monotone, "richardson": rich,
            "richardson_gap": gap, "value": full}


# --------------------------------------------------------------------------
# assembly


VARIANTS = ("prop_lowt", "prop_lows", "thm_st", "thm_t")


def _terms_for(variant):
    if variant == "prop_lowt":
        return [("U_m", m) for m in (1, 2)] + [("U_m_inf", m) for m in (1, 2)]
    if variant == "prop_lows":
        return [("U_m", m) for m in (1, 2)] + [("U_m_t", m) for m in (1, 2)]
    if variant == "thm_st":
        return ([("U_m", m) for m in range(1, 5)] + [("U_m_t", m) for m in range(1, 5)]
                + [(k, m) for m in (3, 4) for k in ("K_m", "J_m")])
    if variant == "thm_t":
        return ([("U_m", m) for m in range(1, 5)] + [("U_m_inf", m) for m in range(1, 5)]
                + [(k, m) for m in (3, 4) for k in ("K_m", "J_m", "V_m")])
    raise ValueError(f"unknown variant {variant!r}")


BUILDERS = {"U_m": build_U_m, "U_m_t": build_U_m_t, "U_m_inf": build_U_m_inf, "Omega_m": build_Omega_m,
            "I_p": build_I_p, "K_m": build_K_m, "J_m": build_J_m, "V_m": build_V_m}


def assemble(variant: str, t: float, grid: GridSpec, coeffs, drop: tuple = ()) -> VectorField:
    """Sum of the variant's terms; ``drop`` lists (kind, order) pairs to omit."""
    total = np.zeros((2, grid.n, grid.n))
    combo = KernelCombo(2)
    for kind, m in _terms_for(variant):
        if (kind, m) in drop:
            continue
        if kind == "J_m":
            total += build_J_m(m, t, grid, coeffs).samples
        elif kind == "U_m":
            combo.extend(combo_U(m, coeffs))
        elif kind == "U_m_t":
            combo.extend(combo_U_t(m, t, coeffs))
        elif kind == "U_m_inf":
            combo.extend(combo_U_inf(m, coeffs))
        elif kind == "K_m":
            combo.extend(combo_K(m, t, coeffs))
        elif kind == "V_m":
            combo.extend(combo_V(m, t, coeffs))
    total += realize(combo, t, grid)
    return VectorField(grid, total, t)


def residual(u: VectorField, approx: VectorField) -> VectorField:
    if u.grid != approx.grid:
        raise ShapeError("fields live on different grids")
    return VectorField(u.grid, u.samples - approx.samples, u.time)


def term(kind: str, order: int, t: float, grid: GridSpec, coeffs) -> ProfileTerm:
    """Build a profile and attach its propagated coefficient uncertainty (sup norm bound)."""
    f = BUILDERS[kind](order, t, grid, coeffs)
    unc = 0.0
    if kind in ("U_m_inf", "Omega_m"):
        m = order if kind == "U_m_inf" else order - 1
        kname = ExpansionCoefficients._kind(m)
        for l, beta in _order_indices(m):
            e = coeffs.uncertainty.get((kname, l, MultiIndex.of(beta)), 0.0)
            if e and np.isfinite(e):
                norm = (math.factorial(l) if m == 4 else 1) * beta.factorial()
                for j in range(2):
                    v = np.zeros(2)
                    v[j] = 1.0
                    c = KernelCombo(2).add_riesz_applied(l, beta, v / norm)
                    unc += e * float(np.max(np.hypot(*realize(c, t, grid))))
    return ProfileTerm(kind, order, t, f, unc)

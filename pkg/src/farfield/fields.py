"""Uniform periodic grids on [-L, L)^2 and the fields that live on them."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .multiindex import MultiIndex

__all__ = [
    "GridSpec",
    "ScalarField",
    "VectorField",
    "SpectralField",
    "ShapeError",
    "MassError",
    "UnresolvedError",
    "to_spectral",
    "from_spectral",
    "biot_savart_velocity",
    "curl",
    "divergence",
    "weighted_norm",
    "moment",
    "moments",
    "pointwise_product",
    "gamma_q",
    "grid_converged",
    "write_field",
    "read_field",
    "write_field_csv",
]


class ShapeError(ValueError):
    pass


class MassError(ValueError):
    """Vorticity with non-negligible mean cannot be inverted on the torus."""


class UnresolvedError(RuntimeError):
    pass


def gamma_q(q) -> float:
    """Decay rate 1 - 1/q of the 2D Gaussian in L^q."""
    return 1.0 if q == np.inf else 1.0 - 1.0 / q


@dataclass(frozen=True)
class GridSpec:
    n: int
    L: float
    dealias_fraction: float = 2.0 / 3.0

    def __post_init__(self):
        if self.n < 2 or self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two, got {self.n}")
        if self.L <= 0:
            raise ValueError("half box length must be positive")
        if not 0 < self.dealias_fraction <= 1:
            raise ValueError("dealias_fraction must lie in (0, 1]")

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.n

    @property
    def area(self) -> float:
        return (2.0 * self.L) ** 2

    @cached_property
    def x(self) -> np.ndarray:
        return -self.L + self.h * np.arange(self.n)

    @cached_property
    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """(X1, X2) with axis 0 along x1."""
        return tuple(np.meshgrid(self.x, self.x, indexing="ij"))

    @cached_property
    def radius(self) -> np.ndarray:
        X1, X2 = self.coords
        return np.hypot(X1, X2)

    @cached_property
    def k(self) -> np.ndarray:
        """Integer multiples of pi/L in FFT order."""
        return np.fft.fftfreq(self.n, d=1.0 / self.n) * (math.pi / self.L)

    @cached_property
    def wavevectors(self) -> tuple[np.ndarray, np.ndarray]:
        return tuple(np.meshgrid(self.k, self.k, indexing="ij"))

    @cached_property
    def deriv_k(self) -> np.ndarray:
        """Wavenumbers for odd derivatives (Nyquist mode zeroed)."""
        k = self.k.copy()
        k[self.n // 2] = 0.0
        return k

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        kmax = math.pi / self.h
        cut = self.dealias_fraction * kmax
        K1, K2 = self.wavevectors
        return (np.abs(K1) < cut) & (np.abs(K2) < cut)

    @cached_property
    def phase_shift(self) -> np.ndarray:
        """exp(i k.L) so that FFT coefficients refer to a box starting at -L."""
        K1, K2 = self.wavevectors
        return np.exp(1j * (K1 + K2) * self.L)

    def scaled(self, lam: float) -> "GridSpec":
        return GridSpec(self.n, self.L * lam, self.dealias_fraction)

    def refined(self) -> "GridSpec":
        return GridSpec(2 * self.n, self.L, self.dealias_fraction)


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


class ScalarField:
    def __init__(self, grid: GridSpec, samples, time: float | None = None):
        samples = _frozen(samples)
        if samples.shape != (grid.n, grid.n):
            raise ShapeError(f"expected {(grid.n, grid.n)} samples, got {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("field has non-finite entries")
        self.grid = grid
        self.samples = samples
        self.time = time

    kind = "scalar"

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.samples, dtype=dtype)

    def integral(self) -> float:
        return float(self.samples.sum() * self.grid.h**2)

    def mean(self) -> float:
        return float(self.samples.mean())

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.samples)))

    def boundary_max(self) -> float:
        s = self.samples
        return float(max(np.abs(s[0]).max(), np.abs(s[:, 0]).max(), np.abs(s[-1]).max(), np.abs(s[:, -1]).max()))

    def __add__(self, other):
        _same_grid(self, other)
        return ScalarField(self.grid, self.samples + other.samples, self.time)

    def __sub__(self, other):
        _same_grid(self, other)
        return ScalarField(self.grid, self.samples - other.samples, self.time)

    def __mul__(self, c):
        return ScalarField(self.grid, self.samples * float(c), self.time)

    __rmul__ = __mul__

    def magnitude(self) -> np.ndarray:
        return np.abs(self.samples)


class VectorField:
    def __init__(self, grid: GridSpec, samples, time: float | None = None):
        samples = _frozen(samples)
        if samples.shape != (2, grid.n, grid.n):
            raise ShapeError(f"expected {(2, grid.n, grid.n)} samples, got {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("field has non-finite entries")
        self.grid = grid
        self.samples = samples
        self.time = time

    kind = "vector"

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.samples, dtype=dtype)

    def integral(self) -> np.ndarray:
        return self.samples.sum(axis=(1, 2)) * self.grid.h**2

    def max_abs(self) -> float:
        return float(np.max(self.magnitude()))

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.samples[0], self.samples[1])

    def component(self, i: int) -> ScalarField:
        return ScalarField(self.grid, self.samples[i], self.time)

    def __add__(self, other):
        _same_grid(self, other)
        return VectorField(self.grid, self.samples + other.samples, self.time)

    def __sub__(self, other):
        _same_grid(self, other)
        return VectorField(self.grid, self.samples - other.samples, self.time)

    def __mul__(self, c):
        return VectorField(self.grid, self.samples * float(c), self.time)

    __rmul__ = __mul__

    @classmethod
    def zeros(cls, grid, time=None):
        return cls(grid, np.zeros((2, grid.n, grid.n)), time)


@dataclass(frozen=True)
class SpectralField:
    """FFT coefficients normalized so the zero mode equals the grid mean."""

    grid: GridSpec
    coefficients: np.ndarray

    def norm(self) -> float:
        """L^2 norm over the box, via Parseval."""
        return math.sqrt(self.grid.area * float(np.sum(np.abs(self.coefficients) ** 2)))


def _same_grid(a, b):
    if a.grid != b.grid or a.samples.shape != b.samples.shape:
        raise ShapeError("fields live on different grids")


def to_spectral(f: ScalarField) -> SpectralField:
    n = f.grid.n
    return SpectralField(f.grid, np.fft.fft2(f.samples) / n**2)


def from_spectral(s: SpectralField, time=None) -> ScalarField:
    if s.coefficients.shape != (s.grid.n, s.grid.n):
        raise ShapeError("coefficient array does not match grid")
    return ScalarField(s.grid, np.fft.ifft2(s.coefficients * s.grid.n**2).real, time)


def grid_l2(f) -> float:
    return math.sqrt(float(np.sum(np.asarray(f.samples) ** 2)) * f.grid.h**2)


def biot_savart_velocity(omega: ScalarField, mass_tol: float = 1e-10) -> VectorField:
    """u = -grad^perp (-Delta)^-1 omega on the torus; zero mode of u set to 0.

    The box mean of omega must be below ``mass_tol`` relative to max|omega|;
    it is then removed.
    """
    grid = omega.grid
    scale = max(omega.max_abs(), 1e-300)
    if abs(omega.mean()) > mass_tol * scale:
        raise MassError(f"mean vorticity {omega.mean():.3e} is not negligible")
    w = np.fft.fft2(omega.samples)
    w[0, 0] = 0.0
    u1, u2 = velocity_from_hat(grid, w)
    return VectorField(grid, np.stack([u1, u2]), omega.time)


def velocity_symbols(grid: GridSpec):
    """Multipliers mapping omega_hat to (u1_hat, u2_hat)."""
    K1, K2 = np.meshgrid(grid.deriv_k, grid.deriv_k, indexing="ij")
    ksq = grid.wavevectors[0] ** 2 + grid.wavevectors[1] ** 2
    inv = np.zeros_like(ksq)
    inv[ksq > 0] = 1.0 / ksq[ksq > 0]
    return 1j * K2 * inv, -1j * K1 * inv


def velocity_from_hat(grid: GridSpec, w_hat):
    m1, m2 = velocity_symbols(grid)
    return np.fft.ifft2(m1 * w_hat).real, np.fft.ifft2(m2 * w_hat).real


def _dx(grid, f_hat, axis):
    k = grid.deriv_k
    k = k[:, None] if axis == 0 else k[None, :]
    return np.fft.ifft2(1j * k * f_hat).real


def curl(u: VectorField) -> ScalarField:
    """d1 u2 - d2 u1 by spectral differentiation."""
    grid = u.grid
    u1 = np.fft.fft2(u.samples[0])
    u2 = np.fft.fft2(u.samples[1])
    return ScalarField(grid, _dx(grid, u2, 0) - _dx(grid, u1, 1), u.time)


def divergence(u: VectorField) -> ScalarField:
    grid = u.grid
    u1 = np.fft.fft2(u.samples[0])
    u2 = np.fft.fft2(u.samples[1])
    return ScalarField(grid, _dx(grid, u1, 0) + _dx(grid, u2, 1), u.time)


def gradient(f: ScalarField) -> VectorField:
    fh = np.fft.fft2(f.samples)
    return VectorField(f.grid, np.stack([_dx(f.grid, fh, 0), _dx(f.grid, fh, 1)]), f.time)


def weighted_norm(f, mu: float = 0.0, q=2, radius: float | None = None) -> float:
    """|| |x|^mu f ||_q over the box (or the disk |x| <= radius).

    Vector fields use the pointwise Euclidean magnitude.  q = inf is the grid
    maximum; q in {1, 2} is the periodic trapezoid rule.
    """
    if mu < 0:
        raise ValueError("weight exponent must be non-negative")
    if q not in (1, 2, np.inf, math.inf, "inf"):
        raise ValueError(f"unsupported q={q!r}; expected 1, 2 or inf")
    grid = f.grid
    mag = f.magnitude()
    if mu:
        mag = mag * grid.radius**mu
    if radius is not None:
        mag = np.where(grid.radius <= radius, mag, 0.0)
    if q in (np.inf, "inf"):
        return float(mag.max())
    return float((np.sum(mag**q) * grid.h**2) ** (1.0 / q))


def critical_radius(grid: GridSpec, mu: float, q, fraction: float = 0.9) -> float | None:
    """Disk radius used for weights near the critical orders (mu -> 5 in L^1, mu -> 7 in L^inf)."""
    q_inf = q in (np.inf, "inf")
    if (q_inf and mu >= 6) or (not q_inf and mu >= 4):
        return fraction * grid.L
    return None


def _vandermonde(x, order):
    return x[:, None] ** np.arange(order + 1)[None, :]


def moments(f, max_order: int) -> dict:
    """All moments int (-y)^alpha f dy with |alpha| <= max_order.

    Returns {MultiIndex: value}; value is a float for scalar fields and a
    length-2 array for vector fields.  Uses V1^T f V2 on the tensor grid.
    """
    grid = f.grid
    V = _vandermonde(-grid.x, max_order)
    s = np.asarray(f.samples)
    if s.ndim == 2:
        M = V.T @ s @ V * grid.h**2
        return {MultiIndex(i, j): float(M[i, j]) for i in range(max_order + 1) for j in range(max_order + 1 - i)}
    M = np.einsum("ai,cab,bj->cij", V, s, V) * grid.h**2
    return {MultiIndex(i, j): M[:, i, j].copy() for i in range(max_order + 1) for j in range(max_order + 1 - i)}


def moment(f, alpha) -> float | np.ndarray:
    """int (-y)^alpha f(y) dy by the trapezoid rule."""
    alpha = MultiIndex.of(alpha)
    if alpha.order > 7:
        raise ValueError("moments are only defined up to order 7")
    return moments(f, alpha.order)[alpha]


def pointwise_product(omega: ScalarField, u: VectorField, dealias: bool = False):
    """omega * u and its integral.  With ``dealias`` both factors and the
    product are truncated to the 2/3 band."""
    if omega.grid != u.grid:
        raise ShapeError("fields live on different grids")
    grid = omega.grid
    w, v = omega.samples, u.samples
    if dealias:
        mask = grid.dealias_mask
        w = np.fft.ifft2(np.fft.fft2(w) * mask).real
        v = np.fft.ifft2(np.fft.fft2(v, axes=(1, 2)) * mask, axes=(1, 2)).real
    prod = w[None] * v
    if dealias:
        prod = np.fft.ifft2(np.fft.fft2(prod, axes=(1, 2)) * grid.dealias_mask, axes=(1, 2)).real
    out = VectorField(grid, prod, omega.time)
    return out, out.integral()


def grid_converged(build, grid: GridSpec, norm, rel_tol: float = 5e-3):
    """Evaluate ``norm(build(grid))`` and on the refined grid.

    Returns (value, relative change, converged flag).
    """
    a = norm(build(grid))
    b = norm(build(grid.refined()))
    change = abs(b - a) / max(abs(b), 1e-300)
    return b, change, change < rel_tol


# --------------------------------------------------------------------------
# snapshot I/O: header then row-major float64 payload

_MAGIC = b"FFLD"
_HEADER = struct.Struct("<4sIIIdd")  # magic, version, n, ncomp, L, time
_KIND = {"scalar": 1, "vector": 2}


def write_field(path, f) -> None:
    ncomp = _KIND[f.kind]
    time = float("nan") if f.time is None else float(f.time)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, 1, f.grid.n, ncomp, f.grid.L, time))
        fh.write(np.ascontiguousarray(f.samples, dtype="<f8").tobytes())


def read_field(path, dealias_fraction: float = 2.0 / 3.0):
    raw = Path(path).read_bytes()
    magic, version, n, ncomp, L, time = _HEADER.unpack_from(raw)
    if magic != _MAGIC or version != 1:
        raise ValueError(f"{path}: not a field snapshot")
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    grid = GridSpec(n, L, dealias_fraction)
    time = None if math.isnan(time) else time
    if ncomp == 1:
        return ScalarField(grid, data.reshape(n, n), time)
    return VectorField(grid, data.reshape(2, n, n), time)


def write_field_csv(path, f) -> None:
    X1, X2 = f.grid.coords
    cols = [X1.ravel(), X2.ravel()]
    if f.kind == "scalar":
        cols.append(np.asarray(f.samples).ravel())
        header = "x1,x2,value"
    else:
        cols += [f.samples[0].ravel(), f.samples[1].ravel()]
        header = "x1,x2,v1,v2"
    np.savetxt(path, np.column_stack(cols), delimiter=",", header=header, comments="", fmt="%.17g")

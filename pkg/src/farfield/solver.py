"""Pseudo-spectral integration of the 2D vorticity equation on a periodic box.

The state is the real FFT of omega.  Diffusion is integrated exactly with an
integrating factor (or by exponential time differencing); the advective term
is evaluated in divergence form -div(omega u) with 2/3 dealiasing.  Every
nonlinear evaluation also yields the flux moments int (-y)^beta (omega u) dy,
which are integrated in time with the stepper's own quadrature weights.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import yaml

from .fields import GridSpec, ScalarField, VectorField, biot_savart_velocity, read_field, write_field
from .multiindex import MultiIndex, up_to, time_space_range

__all__ = [
    "InitialDataSpec",
    "SolverConfig",
    "MomentTable",
    "Trajectory",
    "ConstructionError",
    "CFLError",
    "TruncationError",
    "DependencyError",
    "make_initial_vorticity",
    "step",
    "run",
    "heat_flow",
    "accumulate_renormalized_moments",
]

FLUX_ORDER = 4  # |beta| <= 4 flux moments are recorded
INITIAL_ORDER = 7


class ConstructionError(ValueError):
    pass


class CFLError(RuntimeError):
    def __init__(self, message, suggested_dt):
        super().__init__(message)
        self.suggested_dt = suggested_dt


class TruncationError(RuntimeError):
    def __init__(self, message, time):
        super().__init__(message)
        self.time = time


class DependencyError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# initial data


@dataclass(frozen=True)
class InitialDataSpec:
    """omega_0 = Laplacian of a smooth decaying potential phi.

    ``asymmetry`` maps exponent pairs (i, j) to coefficients c of the
    modulation phi = g(|x|^2) (1 + sum c (x1/s)^i (x2/s)^j).
    ``cancel_order`` K > 1 adds Gaussian-polynomial corrections so that the
    moments of phi of orders 2..K vanish, i.e. the moments of omega_0 of orders
    4..K+2 vanish.

    A Laplacian of an integrable phi always has isotropic second moments, in
    which case Omega_2 U_1 is divergence free and drops out of every nonlinear
    term.  ``quadrupole`` = (a, b) adds s^2 (a d1 d2 + b (d1^2 - d2^2) / 2) g,
    the Laplacian of a decaying but non-integrable potential, which breaks
    that isotropy while keeping the moments of order <= 1 zero.
    """

    amplitude: float = 0.1
    width: float = 1.0
    shape: str = "laplacian_gaussian"
    asymmetry: tuple = ()
    cancel_order: int = 0
    correction_width: float = 1.5
    quadrupole: tuple = (0.0, 0.0)
    samples: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.shape not in ("laplacian_gaussian", "curl_of_compact_bump", "custom_samples"):
            raise ValueError(f"unknown initial shape {self.shape!r}")
        if self.width <= 0:
            raise ValueError("width must be positive")
        asym = self.asymmetry.items() if isinstance(self.asymmetry, dict) else self.asymmetry
        object.__setattr__(self, "asymmetry", tuple(sorted((tuple(map(int, k)), float(c)) for k, c in asym)))
        quad = tuple(float(c) for c in self.quadrupole)
        if len(quad) != 2:
            raise ValueError("quadrupole takes two coefficients")
        object.__setattr__(self, "quadrupole", quad)


def _profile(shape, s, width):
    """g, g', g'' of the radial factor as functions of s = |x|^2."""
    if shape == "laplacian_gaussian":
        c = 1.0 / width**2
        g = np.exp(-c * s)
        return g, -c * g, c * c * g
    R2 = (3.0 * width) ** 2
    k = 8
    w = np.clip(1.0 - s / R2, 0.0, None)
    return w**k, -k / R2 * w ** (k - 1), k * (k - 1) / R2**2 * w ** (k - 2)


def _poly_parts(coeffs, x1, x2):
    """p, d1 p, d2 p, Lap p for a polynomial given as a 2D coefficient array."""
    P = np.polynomial.polynomial
    d1 = P.polyder(coeffs, axis=0)
    d2 = P.polyder(coeffs, axis=1)
    lap = P.polyder(coeffs, 2, axis=0)
    lap2 = P.polyder(coeffs, 2, axis=1)
    val = P.polyval2d(x1, x2, coeffs)
    ev = lambda c: P.polyval2d(x1, x2, c) if c.size else np.zeros_like(x1)
    return val, ev(d1), ev(d2), ev(lap) + ev(lap2)


def _laplacian_of_product(shape, width, coeffs, x1, x2):
    s = x1 * x1 + x2 * x2
    g, g1, g2 = _profile(shape, s, width)
    p, p1, p2, plap = _poly_parts(coeffs, x1, x2)
    lap_g = 4.0 * g1 + 4.0 * s * g2
    return p * lap_g + 4.0 * g1 * (x1 * p1 + x2 * p2) + g * plap, g * p


def _coeff_array(terms, degree, scale):
    C = np.zeros((degree + 1, degree + 1))
    for (i, j), c in terms:
        C[i, j] += c / scale ** (i + j)
    return C


def _gauss_moment_1d(a, c):
    return 0.0 if a % 2 else math.gamma((a + 1) / 2.0) * c ** (a + 1)


def make_initial_vorticity(spec: InitialDataSpec, grid: GridSpec, moment_tol: float = 1e-10) -> ScalarField:
    """Sample omega_0 on ``grid`` with max|omega_0| = amplitude."""
    if spec.shape == "custom_samples":
        if spec.samples is None:
            raise ConstructionError("custom_samples requires a samples array")
        w = np.array(spec.samples, dtype=float)
        if w.shape != (grid.n, grid.n):
            raise ConstructionError("custom samples do not match the grid")
    else:
        if spec.width > grid.L / 16:
            raise ConstructionError(f"width {spec.width} exceeds L/16 = {grid.L / 16}")
        if spec.amplitude == 0.0:
            return ScalarField(grid, np.zeros((grid.n, grid.n)), 0.0)
        X1, X2 = grid.coords
        deg = max([i + j for (i, j), _ in spec.asymmetry] + [0])
        C = _coeff_array(((((0, 0), 1.0),) + spec.asymmetry), deg, spec.width)
        w, phi = _laplacian_of_product(spec.shape, spec.width, C, X1, X2)
        if spec.cancel_order >= 2:
            w = w + _moment_correction(spec, grid, phi, X1, X2)
        if any(spec.quadrupole):
            a, b = spec.quadrupole
            _, _, g2 = _profile(spec.shape, X1 * X1 + X2 * X2, spec.width)
            w = w + spec.width**2 * g2 * (4.0 * a * X1 * X2 + 2.0 * b * (X1 * X1 - X2 * X2))
    scale = np.max(np.abs(w))
    if spec.shape != "custom_samples" and scale > 0:
        w = w * (spec.amplitude / scale)
    omega0 = ScalarField(grid, w, 0.0)
    _check_low_moments(omega0, moment_tol)
    return omega0


def _moment_correction(spec, grid, phi, X1, X2):
    """Laplacian of sum a_g x^g exp(-|x|^2/c^2) cancelling phi moments of orders 2..K."""
    K = spec.cancel_order
    c = spec.correction_width * spec.width
    idx = [g for k in range(2, K + 1) for g in ((k - j, j) for j in range(k + 1))]
    h2 = grid.h**2
    V = grid.x[:, None] ** np.arange(2 * K + 1)[None, :]
    target = np.array([V[:, a].T @ phi @ V[:, b] * h2 for a, b in idx])
    gram = np.array(
        [[_gauss_moment_1d(a + p, c) * _gauss_moment_1d(b + q, c) for p, q in idx] for a, b in idx]
    )
    coef = np.linalg.solve(gram, -target)
    out = np.zeros_like(X1)
    for (p, q), a in zip(idx, coef):
        C = np.zeros((p + 1, q + 1))
        C[p, q] = a
        lap, _ = _laplacian_of_product("laplacian_gaussian", c, C, X1, X2)
        out += lap
    return out


def _check_low_moments(omega0: ScalarField, tol: float):
    X1, X2 = omega0.grid.coords
    w = np.asarray(omega0.samples)
    h2 = omega0.grid.h**2
    scale = max(np.sum(np.abs(w)) * h2, 1e-300)
    length = omega0.grid.L
    vals = [np.sum(w) * h2 / scale, np.sum(X1 * w) * h2 / (scale * length), np.sum(X2 * w) * h2 / (scale * length)]
    if max(abs(v) for v in vals) > tol:
        raise ConstructionError(f"low-order moments of omega_0 do not vanish: {vals}")


# --------------------------------------------------------------------------
# configuration and records


@dataclass(frozen=True)
class SolverConfig:
    grid: GridSpec
    dt: float
    T_max: float
    snapshot_times: tuple = ()
    dealias: str = "two_thirds"
    stepper: str = "imex_integrating_factor"
    cfl_limit: float = 0.5
    boundary_floor: float = 1e-12
    boundary_relative: bool = True
    nonlinear: bool = True
    check_window: bool = True

    def __post_init__(self):
        if self.dt <= 0 or self.T_max <= 0:
            raise ValueError("dt and T_max must be positive")
        if self.stepper not in ("imex_integrating_factor", "etdrk4"):
            raise ValueError(f"unknown stepper {self.stepper!r}")
        if self.dealias != "two_thirds":
            raise ValueError("only two_thirds dealiasing is supported")
        times = tuple(float(t) for t in self.snapshot_times)
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("snapshot times must be strictly increasing")
        if times and (times[0] < 0 or times[-1] > self.T_max + 1e-12):
            raise ValueError("snapshot times must lie in [0, T_max]")
        object.__setattr__(self, "snapshot_times", times)

    @property
    def nsteps(self) -> int:
        return int(round(self.T_max / self.dt))

    def snapshot_steps(self) -> list[int]:
        return [int(round(t / self.dt)) for t in self.snapshot_times]

    def window_limit(self) -> float:
        return (self.grid.L / 8.0) ** 2


FLUX_INDICES = list(up_to(FLUX_ORDER))
TS_INDICES = time_space_range(0, 4)  # (l, beta) with 2l + |beta| <= 4


@dataclass
class MomentTable:
    """Initial moments and time integrals of the flux moments.

    ``samples[n, b, c]``  int (-y)^beta (omega u)_c dy at times[n];
    ``integrals[(l, beta)][n, c]``  S(l, beta; times[n]) accumulated with the
    stepper's stage weights; ``renormalized`` holds the variants with the
    self-similar profiles subtracted.
    """

    initial: dict
    times: np.ndarray
    samples: np.ndarray
    integrals: dict
    renormalized: dict = field(default_factory=dict)

    def sample(self, beta) -> np.ndarray:
        return self.samples[:, FLUX_INDICES.index(MultiIndex.of(beta)), :]

    def _index(self, t):
        n = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[n] - t) > 1e-9 * max(1.0, t):
            raise KeyError(f"t={t} is not on the step grid")
        return n

    def S(self, l, beta, t, kind="plain") -> np.ndarray:
        key = (l, MultiIndex.of(beta))
        table = self.integrals if kind == "plain" else self.renormalized.get(kind)
        if table is None or key not in table:
            raise DependencyError(f"no {kind} integral for l={l}, beta={tuple(key[1])}")
        return table[key][self._index(t)]

    def quadrature(self, l, beta, rule="trapezoid") -> np.ndarray:
        """Cumulative integral from the stored step samples (cross-check)."""
        from scipy.integrate import cumulative_simpson, cumulative_trapezoid

        f = (-self.times[:, None]) ** l * self.sample(beta)
        if rule == "trapezoid":
            return cumulative_trapezoid(f, self.times, axis=0, initial=0.0)
        if rule == "simpson":
            return cumulative_simpson(f, x=self.times, axis=0, initial=0.0)
        raise ValueError(f"unknown rule {rule!r}")


@dataclass
class Trajectory:
    grid: GridSpec
    config: SolverConfig
    snapshots: list  # [(t, ScalarField)]
    moments: MomentTable
    diagnostics: dict

    @property
    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.snapshots])

    def omega(self, t) -> ScalarField:
        for s, w in self.snapshots:
            if abs(s - t) <= 1e-9 * max(1.0, t):
                return w
        raise KeyError(f"no snapshot at t={t}")

    def velocity(self, t) -> VectorField:
        return biot_savart_velocity(self.omega(t))

    # -- directory layout ------------------------------------------------
    def save(self, path, extra_meta: dict | None = None) -> None:
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        cfg = self.config
        meta = {
            "grid": {"n": cfg.grid.n, "L": cfg.grid.L, "dealias_fraction": cfg.grid.dealias_fraction},
            "solver": {k: v for k, v in asdict(cfg).items() if k != "grid"},
            "snapshots": [{"index": i, "time": float(t)} for i, (t, _) in enumerate(self.snapshots)],
        }
        meta["solver"]["snapshot_times"] = list(cfg.snapshot_times)
        if extra_meta:
            meta.update(extra_meta)
        (path / "meta").write_text(yaml.safe_dump(meta, sort_keys=True))
        for i, (_, w) in enumerate(self.snapshots):
            write_field(path / f"snap_{i}", w)
        _write_moments(path, self.moments)
        with open(path / "diagnostics.csv", "w", newline="") as fh:
            keys = sorted(self.diagnostics)
            wr = csv.writer(fh)
            wr.writerow(keys)
            for row in zip(*(self.diagnostics[k] for k in keys)):
                wr.writerow([repr(float(v)) for v in row])

    @classmethod
    def load(cls, path) -> "Trajectory":
        path = Path(path)
        if not (path / "meta").exists():
            raise DependencyError(f"{path} has no trajectory meta file")
        meta = yaml.safe_load((path / "meta").read_text())
        g = meta["grid"]
        grid = GridSpec(int(g["n"]), float(g["L"]), float(g["dealias_fraction"]))
        solver = dict(meta["solver"])
        cfg = SolverConfig(grid=grid, **solver)
        snaps = []
        for s in meta["snapshots"]:
            w = read_field(path / f"snap_{s['index']}", grid.dealias_fraction)
            snaps.append((float(s["time"]), w))
        moments = _read_moments(path)
        diag = {}
        with open(path / "diagnostics.csv") as fh:
            rows = list(csv.reader(fh))
        for j, k in enumerate(rows[0]):
            diag[k] = np.array([float(r[j]) for r in rows[1:]])
        return cls(grid, cfg, snaps, moments, diag)


def _write_moments(path: Path, table: MomentTable) -> None:
    with open(path / "moments.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t", "l", "beta1", "beta2", "component", "value"])
        for n, t in enumerate(table.times):
            for (l, beta), vals in table.integrals.items():
                for c in range(2):
                    wr.writerow([repr(float(t)), l, beta.a1, beta.a2, c, repr(float(vals[n, c]))])
    with open(path / "flux_samples.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t", "beta1", "beta2", "component", "value"])
        for n, t in enumerate(table.times):
            for b, beta in enumerate(FLUX_INDICES):
                for c in range(2):
                    wr.writerow([repr(float(t)), beta.a1, beta.a2, c, repr(float(table.samples[n, b, c]))])
    with open(path / "initial_moments.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["alpha1", "alpha2", "value"])
        for alpha, v in table.initial.items():
            wr.writerow([alpha.a1, alpha.a2, repr(float(v))])


def _read_moments(path: Path) -> MomentTable:
    def rows(name):
        with open(path / name) as fh:
            r = csv.reader(fh)
            next(r)
            return [list(map(float, row)) for row in r]

    flux = np.array(rows("flux_samples.csv"))
    times = np.unique(flux[:, 0])
    nb = len(FLUX_INDICES)
    samples = flux[:, 4].reshape(len(times), nb, 2)
    integ = {}
    data = np.array(rows("moments.csv"))
    for l, beta in TS_INDICES:
        sel = (data[:, 1] == l) & (data[:, 2] == beta.a1) & (data[:, 3] == beta.a2)
        integ[(l, beta)] = data[sel, 5].reshape(len(times), 2)
    initial = {MultiIndex(int(a), int(b)): v for a, b, v in rows("initial_moments.csv")}
    return MomentTable(initial, times, samples, integ)


# --------------------------------------------------------------------------
# dynamics


class _Dynamics:
    """Precomputed spectral operators on the rfft layout."""

    def __init__(self, grid: GridSpec, nonlinear: bool = True):
        n = grid.n
        self.grid = grid
        self.nonlinear = nonlinear
        k1 = grid.k
        k2 = np.fft.rfftfreq(n, d=1.0 / n) * (math.pi / grid.L)
        K1, K2 = np.meshgrid(k1, k2, indexing="ij")
        self.ksq = K1**2 + K2**2
        d1 = k1.copy()
        d1[n // 2] = 0.0
        d2 = k2.copy()
        d2[-1] = 0.0
        D1, D2 = np.meshgrid(d1, d2, indexing="ij")
        cut = grid.dealias_fraction * math.pi / grid.h
        self.mask = (np.abs(K1) < cut) & (np.abs(K2) < cut)
        inv = np.zeros_like(self.ksq)
        inv[self.ksq > 0] = 1.0 / self.ksq[self.ksq > 0]
        self.iD1 = 1j * D1 * self.mask
        self.iD2 = 1j * D2 * self.mask
        self.vel1 = 1j * D2 * inv
        self.vel2 = -1j * D1 * inv
        self.V = (-grid.x)[:, None] ** np.arange(FLUX_ORDER + 1)[None, :]
        self.h2 = grid.h**2

    def forward(self, w):
        return np.fft.rfft2(w) * self.mask

    def inverse(self, w_hat):
        return np.fft.irfft2(w_hat, s=(self.grid.n, self.grid.n))

    def __call__(self, w_hat):
        """Return (N_hat, flux moments (nb, 2), max|u|, omega, u1, u2)."""
        w = self.inverse(w_hat)
        u1 = self.inverse(self.vel1 * w_hat)
        u2 = self.inverse(self.vel2 * w_hat)
        p1 = w * u1
        p2 = w * u2
        M1 = self.V.T @ p1 @ self.V * self.h2
        M2 = self.V.T @ p2 @ self.V * self.h2
        mom = np.array([[M1[b.a1, b.a2], M2[b.a1, b.a2]] for b in FLUX_INDICES])
        if self.nonlinear:
            N = -(self.iD1 * np.fft.rfft2(p1) + self.iD2 * np.fft.rfft2(p2))
        else:
            N = np.zeros_like(w_hat)
        umax = math.sqrt(float(np.max(u1 * u1 + u2 * u2)))
        return N, mom, umax, w, u1, u2


class _Stepper:
    def __init__(self, dyn: _Dynamics, dt: float, kind: str):
        self.dyn = dyn
        self.dt = dt
        self.kind = kind
        Lh = -dyn.ksq * dt
        self.E = np.exp(Lh)
        self.E2 = np.exp(Lh / 2)
        if kind == "etdrk4":
            self._etd_coefficients(Lh)

    def _etd_coefficients(self, Lh, M=32):
        # contour-integral evaluation of the phi functions
        r = np.exp(1j * math.pi * (np.arange(1, M + 1) - 0.5) / M)
        LR = Lh[..., None] + r
        dt = self.dt
        self.Q = dt * np.real(np.mean((np.exp(LR / 2) - 1) / LR, axis=-1))
        self.f1 = dt * np.real(np.mean((-4 - LR + np.exp(LR) * (4 - 3 * LR + LR**2)) / LR**3, axis=-1))
        self.f2 = dt * np.real(np.mean((2 + LR + np.exp(LR) * (-2 + LR)) / LR**3, axis=-1))
        self.f3 = dt * np.real(np.mean((-4 - 3 * LR - LR**2 + np.exp(LR) * (4 - LR)) / LR**3, axis=-1))

    def __call__(self, v, first=None):
        """Advance one step.  Returns (v_next, stage records, first-stage record)."""
        dyn, dt, E, E2 = self.dyn, self.dt, self.E, self.E2
        a = first if first is not None else dyn(v)
        Na = a[0]
        if self.kind == "imex_integrating_factor":
            b = dyn(E2 * (v + 0.5 * dt * Na))
            c = dyn(E2 * v + 0.5 * dt * b[0])
            d = dyn(E * v + dt * E2 * c[0])
            v_next = E * v + dt / 6.0 * (E * Na + 2.0 * E2 * (b[0] + c[0]) + d[0])
        else:
            b = dyn(E2 * v + self.Q * Na)
            c = dyn(E2 * v + self.Q * b[0])
            d = dyn(E2 * (E2 * v + self.Q * Na) + self.Q * (2.0 * c[0] - Na))
            v_next = E * v + self.f1 * Na + 2.0 * self.f2 * (b[0] + c[0]) + self.f3 * d[0]
        return v_next, (a, b, c, d)


def step(state, cfg: SolverConfig):
    """Advance (t, omega_hat) by one step of cfg.dt.  omega_hat is the rfft2 of omega."""
    t, w_hat = state
    dyn = _Dynamics(cfg.grid, cfg.nonlinear)
    stepper = _Stepper(dyn, cfg.dt, cfg.stepper)
    rec = dyn(w_hat)
    _check_cfl(rec[2], cfg, t)
    v_next, _ = stepper(w_hat, rec)
    return t + cfg.dt, v_next


def _check_cfl(umax, cfg, t):
    h = cfg.grid.h
    if umax * cfg.dt > cfg.cfl_limit * h:
        raise CFLError(
            f"CFL violated at t={t:.6g}: max|u| dt / h = {umax * cfg.dt / h:.3g}",
            suggested_dt=0.9 * cfg.cfl_limit * h / umax,
        )


def initial_moments(omega0: ScalarField, order: int = INITIAL_ORDER) -> dict:
    from .fields import moments

    return moments(omega0, order)


def run(omega0: ScalarField, cfg: SolverConfig, progress=None) -> Trajectory:
    """Integrate to cfg.T_max, recording snapshots, flux moments and diagnostics."""
    grid = cfg.grid
    if omega0.grid != grid:
        raise ValueError("initial field does not live on the solver grid")
    if cfg.check_window and cfg.T_max > cfg.window_limit() * (1 + 1e-12):
        raise TruncationError(
            f"T_max={cfg.T_max} exceeds the validity window (L/8)^2 = {cfg.window_limit():.4g}", cfg.T_max
        )
    dyn = _Dynamics(grid, cfg.nonlinear)
    stepper = _Stepper(dyn, cfg.dt, cfg.stepper)
    nsteps = cfg.nsteps
    snap_steps = dict(zip(cfg.snapshot_steps(), cfg.snapshot_times))
    w_hat = dyn.forward(np.asarray(omega0.samples))
    floor = cfg.boundary_floor * (omega0.max_abs() if cfg.boundary_relative else 1.0)
    floor_active = omega0.max_abs() > 0

    nb = len(FLUX_INDICES)
    times = cfg.dt * np.arange(nsteps + 1)
    samples = np.zeros((nsteps + 1, nb, 2))
    integrals = {key: np.zeros((nsteps + 1, 2)) for key in TS_INDICES}
    diag = {k: np.zeros(nsteps + 1) for k in (
        "t", "omega_l1", "omega_l2", "omega_linf", "u_l1", "u_l2", "u_linf",
        "cfl", "mean_vorticity", "flux_integral", "boundary_max")}
    snapshots = []
    h2 = grid.h**2

    rec = dyn(w_hat)
    for n in range(nsteps + 1):
        t = times[n]
        _, mom, umax, w, u1, u2 = rec
        samples[n] = mom
        umag = np.sqrt(u1 * u1 + u2 * u2)
        bmax = float(max(np.abs(w[0]).max(), np.abs(w[:, 0]).max()))
        diag["t"][n] = t
        diag["omega_l1"][n] = np.abs(w).sum() * h2
        diag["omega_l2"][n] = math.sqrt(float((w * w).sum()) * h2)
        diag["omega_linf"][n] = np.abs(w).max()
        diag["u_l1"][n] = umag.sum() * h2
        diag["u_l2"][n] = math.sqrt(float((umag * umag).sum()) * h2)
        diag["u_linf"][n] = umax
        diag["cfl"][n] = umax * cfg.dt / grid.h
        diag["mean_vorticity"][n] = w_hat[0, 0].real / grid.n**2
        diag["flux_integral"][n] = math.hypot(mom[0, 0], mom[0, 1])
        diag["boundary_max"][n] = bmax
        if floor_active and bmax > floor:
            raise TruncationError(
                f"|omega| at the box edge reached {bmax:.3e} > floor {floor:.3e} at t={t:.6g}", t
            )
        if n in snap_steps:
            snapshots.append((snap_steps[n], ScalarField(grid, w, snap_steps[n])))
        if n == nsteps:
            break
        _check_cfl(umax, cfg, t)
        w_hat, stages = stepper(w_hat, rec)
        # stage times 0, dt/2, dt/2, dt with weights 1/6, 1/3, 1/3, 1/6
        st = (t, t + cfg.dt / 2, t + cfg.dt / 2, t + cfg.dt)
        wt = (1 / 6, 1 / 3, 1 / 3, 1 / 6)
        for (l, beta), arr in integrals.items():
            b = FLUX_INDICES.index(beta)
            incr = sum(wk * (-sk) ** l * s[1][b] for wk, sk, s in zip(wt, st, stages))
            arr[n + 1] = arr[n] + cfg.dt * incr
        rec = dyn(w_hat)
        if progress is not None:
            progress(n + 1, nsteps)

    table = MomentTable(initial_moments(omega0), times, samples, integrals)
    return Trajectory(grid, cfg, snapshots, table, diag)


def heat_flow(omega0: ScalarField, t: float) -> ScalarField:
    """G(t) * omega_0 computed spectrally on the torus."""
    w = np.fft.fft2(omega0.samples)
    K1, K2 = omega0.grid.wavevectors
    return ScalarField(omega0.grid, np.fft.ifft2(w * np.exp(-t * (K1**2 + K2**2))).real, t)


# --------------------------------------------------------------------------
# renormalized accumulators


def power_integral(l: int, a: float, lo: float, hi: float, shift: float = 0.0) -> float:
    """int_lo^hi (-s)^l (shift + s)^a ds in closed form (shift >= 0)."""
    if shift == 0.0:
        e = l + a
        if e == -1:
            return (-1) ** l * (math.log(hi) - math.log(lo))
        if lo == 0.0 and e <= -1:
            raise ValueError(f"exponent {e} is not integrable at 0")
        return (-1) ** l * (hi ** (e + 1) - lo ** (e + 1)) / (e + 1)
    # s^l = sum_j C(l, j) (shift + s)^j (-shift)^(l - j)
    total = 0.0
    for j in range(l + 1):
        e = j + a
        c = math.comb(l, j) * (-shift) ** (l - j) * (-1) ** l
        if e == -1:
            total += c * (math.log(shift + hi) - math.log(shift + lo))
        else:
            total += c * ((shift + hi) ** (e + 1) - (shift + lo) ** (e + 1)) / (e + 1)
    return total


def accumulate_renormalized_moments(traj: Trajectory, profile_moments) -> MomentTable:
    """Add renormalized S-integrals to the trajectory's moment table.

    ``profile_moments(p)`` returns {beta: 2-vector} with the unit-time moments
    int (-y)^beta I_p(1, y) dy, or None when the profiles are unavailable.
    Order 3 integrands use omega u - I_5(1 + s); order 4 integrands use
    omega u - I_5(s) - I_6(1 + s).  The profile parts are exact power laws in
    s and are integrated in closed form.
    """
    if profile_moments is None:
        raise DependencyError("renormalization requires the unit-time profile moments")
    table = traj.moments
    mu5 = profile_moments(5)
    mu6 = profile_moments(6)
    if mu5 is None or mu6 is None:
        raise DependencyError("renormalization requires I_5 and I_6 moments from a base run")
    times = table.times
    ren3, ren4 = {}, {}
    for l, beta in time_space_range(3, 3):
        a = (beta.order - 5) / 2.0
        sub = np.array([power_integral(l, a, 0.0, t, shift=1.0) for t in times])
        ren3[(l, beta)] = table.integrals[(l, beta)] - sub[:, None] * np.asarray(mu5[beta])[None, :]
    for l, beta in time_space_range(4, 4):
        a5 = (beta.order - 5) / 2.0
        a6 = (beta.order - 6) / 2.0
        sub5 = np.array([power_integral(l, a5, 0.0, t) if t > 0 else 0.0 for t in times])
        sub6 = np.array([power_integral(l, a6, 0.0, t, shift=1.0) for t in times])
        ren4[(l, beta)] = (
            table.integrals[(l, beta)]
            - sub5[:, None] * np.asarray(mu5[beta])[None, :]
            - sub6[:, None] * np.asarray(mu6[beta])[None, :]
        )
    table.renormalized["order3"] = ren3
    table.renormalized["order4"] = ren4
    return table

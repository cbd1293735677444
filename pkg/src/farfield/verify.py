"""Decay-rate fits of residual norms and the checks built on them.

Every check produces a :class:`CheckReport` tagged with the claim it tests.
Rate claims fit log(value) - p log(log(t + shift)) against log t over the
late part of a trajectory; scaling claims compare a term with its rescaled
copy; sanity claims compare a measured deviation with a threshold.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, fields

import numpy as np

from .fields import (
    GridSpec,
    ScalarField,
    VectorField,
    biot_savart_velocity,
    critical_radius,
    curl,
    divergence,
    gamma_q,
    gradient,
    moments,
    pointwise_product,
    weighted_norm,
)
from .kernels import (
    KernelCombo,
    MultiplierSpec,
    bs_kernel_deriv,
    fourier_oracle,
    gauss_deriv,
    riesz_tensor,
    riesz_tensor_deriv,
    gauss,
)
from .multiindex import MultiIndex, of_order
from .solver import SolverConfig, TruncationError, heat_flow, run
from .expansion import (
    BUILDERS,
    ExpansionCoefficients,
    J_certificate,
    PrecisionWarning,
    assemble,
    build_I_p,
    build_J_m,
    build_K_m,
    build_Omega_m,
    build_U_m,
    build_U_m_inf,
    realize,
    residual,
    term,
)

__all__ = [
    "FitError",
    "RateFit",
    "CheckReport",
    "VerifyOptions",
    "rate_fit",
    "judge",
    "residual_norms",
    "theorem_suite",
    "mu_slope",
    "vorticity_suite",
    "lemma_suite",
    "scaling_suite",
    "kernel_oracle_check",
    "solver_sanity",
    "curl_consistency",
    "k_sharpness",
    "j_stability",
    "ablation",
    "write_report",
    "summary_text",
    "REPORT_COLUMNS",
]

INF = math.inf


class FitError(ValueError):
    pass


# --------------------------------------------------------------------------
# rate fits


@dataclass(frozen=True)
class RateFit:
    exponent: float
    log_power: int
    amplitude: float
    r_squared: float
    window: tuple
    n_points: int
    log_shift: float = 0.0


def rate_fit(times, values, log_power: int = 0, log_shift: float = 0.0,
             min_points: int = 6, min_spread: float = 4.0) -> RateFit:
    """Least-squares slope of log(value) - log_power * log(log(t + log_shift)) against log t.

    ``log_shift`` = 0 fits the plain log t factor and then needs t > 1 at
    every point; a shift of 2 matches bounds written with log(2 + t).
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.shape != v.shape or t.ndim != 1:
        raise FitError("times and values must be 1-d arrays of equal length")
    if log_power not in (0, 1, 2):
        raise FitError(f"log_power must be 0, 1 or 2, got {log_power}")
    if t.size < min_points:
        raise FitError(f"need at least {min_points} points, got {t.size}")
    if np.any(np.diff(t) <= 0) or t[0] <= 0:
        raise FitError("times must be positive and increasing")
    if t[-1] / t[0] < min_spread:
        raise FitError(f"times span a factor {t[-1] / t[0]:.3g} < {min_spread}")
    if not np.all(np.isfinite(v)) or np.any(v <= 0):
        raise FitError("values must be positive and finite")
    y = np.log(v)
    if log_power:
        lg = np.log(t + log_shift)
        if np.any(lg <= 0):
            raise FitError("log factor is not positive on the window; raise log_shift or the window start")
        y = y - log_power * np.log(lg)
    x = np.log(t)
    slope, intercept = np.polyfit(x, y, 1)
    res = y - (slope * x + intercept)
    ss_res = float(res @ res)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot > 0:
        r2 = max(0.0, 1.0 - ss_res / ss_tot)
    else:
        r2 = 1.0
    if abs(slope) < 1e-12:
        slope = 0.0
    return RateFit(float(slope), int(log_power), float(math.exp(intercept)), float(r2),
                   (float(t[0]), float(t[-1])), int(t.size), float(log_shift))


# --------------------------------------------------------------------------
# reports


REPORT_COLUMNS = ("claim_tag", "q", "mu", "expected_exponent", "log_power", "measured_exponent", "r2",
                  "verdict", "check", "tolerance", "gated", "notes")


@dataclass
class CheckReport:
    """One claim checked against one measurement.

    ``check`` is "two_sided" (|measured - expected| <= tol), "upper"
    (measured <= expected + tol) or "deviation" (measured <= tol).
    """

    claim: str
    measured: float
    expected: float | None
    tolerance: float
    check: str = "two_sided"
    q: object = ""
    mu: object = ""
    log_power: object = ""
    r2: object = ""
    fit: RateFit | None = None
    gated: bool = True
    verdict: str = ""
    notes: str = ""

    def __post_init__(self):
        if not self.verdict:
            self.verdict = "pass" if judge(self.measured, self.expected, self.tolerance, self.check) else "fail"

    @property
    def passed(self) -> bool:
        return self.verdict in ("pass", "inconclusive")

    def row(self) -> dict:
        q = self.q
        if isinstance(q, float) and math.isinf(q):
            q = "inf"
        return {
            "claim_tag": self.claim,
            "q": q,
            "mu": self.mu,
            "expected_exponent": "" if self.expected is None else _fmt(self.expected),
            "log_power": self.log_power,
            "measured_exponent": _fmt(self.measured),
            "r2": _fmt(self.r2) if self.r2 != "" else "",
            "verdict": self.verdict,
            "check": self.check,
            "tolerance": _fmt(self.tolerance),
            "gated": int(self.gated),
            "notes": self.notes,
        }


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.10g}"


def judge(measured, expected, tol, check="two_sided") -> bool:
    if measured is None or not np.isfinite(measured):
        return False
    if check == "two_sided":
        return abs(measured - expected) <= tol
    if check == "upper":
        return measured <= expected + tol
    if check == "deviation":
        return measured <= tol
    raise ValueError(f"unknown check {check!r}")


def write_report(path, reports) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in reports:
            w.writerow(r.row())


def summary_text(reports) -> str:
    lines = []
    for r in reports:
        where = ""
        if r.q != "":
            where += f" q={'inf' if r.q == INF else r.q}"
        if r.mu != "":
            where += f" mu={r.mu}"
        target = "" if r.expected is None else f" expected {r.expected:+.4g}"
        op = {"two_sided": "+/-", "upper": "<= +", "deviation": "<="}[r.check]
        gate = "" if r.gated else " (reported, not gated)"
        lines.append(f"{r.verdict.upper():12s} {r.claim}{where}: measured {r.measured:+.4g}{target} "
                     f"[{op}{r.tolerance:.3g}]{gate}" + (f"  {r.notes}" if r.notes else ""))
    gated = [r for r in reports if r.gated]
    failed = [r for r in gated if r.verdict == "fail"]
    lines.append("")
    lines.append(f"{len(reports)} checks, {len(gated)} gated, {len(failed)} gated failures, "
                 f"{sum(r.verdict == 'inconclusive' for r in reports)} inconclusive")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# options


@dataclass(frozen=True)
class VerifyOptions:
    variants: tuple = ("prop_lowt", "prop_lows", "thm_st", "thm_t")
    mus_inf: tuple = (0.0, 2.0, 4.0)
    mus_l1: tuple = (0.0, 2.0)
    window_fraction: float = 1.0 / 16.0
    log_shift: float = 2.0
    tol_low: float = 0.15
    tol: float = 0.25
    tol_thm_st: float = 0.3
    tol_decay: float = 0.2
    tol_lemma: float = 0.2
    tol_mu_slope: float = 0.1
    noise_factor: float = 10.0
    roundoff: float = 1e-13
    vorticity_weight: int = 4
    scaling_lambdas: tuple = (0.5, 2.0)
    scaling_time: float = 1.0
    scaling_tol_exact: float = 1e-9
    scaling_tol_quad: float = 1e-6
    kernel_points: int = 50
    kernel_tol: float = 1e-7
    trace_tol: float = 1e-9
    seed: int = 20240101
    mean_tol: float = 1e-13
    div_tol: float = 1e-10
    heat_tol: float = 1e-8
    flux_tol: float = 1e-8
    heat_time: float = 1.0
    curl_tol: float = 1e-8
    k_window: tuple = (1.0e11, 1.0e12)
    k_points: int = 11
    k_drift: float = 0.1
    j_time: float = 1.0
    j_tol: float = 1e-4

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


# --------------------------------------------------------------------------
# residual series


def _window_times(traj, fraction):
    T = float(traj.times[-1])
    return [float(t) for t in traj.times if t >= fraction * T * (1 - 1e-12) and t > 0]


def _norm(f, mu, q):
    return weighted_norm(f, mu, q, critical_radius(f.grid, mu, q))


def _weight_norm(grid, mu, q):
    """Norm of the weight |x|^mu itself, used to spread a sup-norm envelope."""
    ones = ScalarField(grid, np.ones((grid.n, grid.n)))
    return _norm(ones, mu, q)


def _envelope(variant, t, grid, coeffs):
    """Sup-norm bound on the propagated infinite-horizon coefficient error."""
    total = 0.0
    kinds = {"prop_lowt": [("U_m_inf", 1), ("U_m_inf", 2)],
             "thm_t": [("U_m_inf", m) for m in range(1, 5)]}.get(variant, [])
    for kind, m in kinds:
        total += term(kind, m, t, grid, coeffs).uncertainty
    if variant in ("thm_st", "thm_t"):
        for m in (3, 4):
            cert = J_certificate(m, t, grid, coeffs)
            total += cert["richardson_gap"] * float(np.max(np.abs(cert["value"])))
    return total


def residual_norms(variant, traj, coeffs, pairs, times=None, drop=()):
    """{(mu, q): (values, floors)} for the residual u - assembly at ``times``."""
    times = traj.times if times is None else times
    grid = traj.grid
    out = {pq: ([], []) for pq in pairs}
    for t in times:
        u = traj.velocity(t)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", PrecisionWarning)
            r = residual(u, assemble(variant, t, grid, coeffs, drop=drop))
            env = _envelope(variant, t, grid, coeffs) if not drop else 0.0
        for mu, q in pairs:
            vals, floors = out[(mu, q)]
            vals.append(_norm(r, mu, q))
            floors.append(_norm(u, mu, q) * 1e-13 + env * _weight_norm(grid, mu, q))
    return out


@dataclass(frozen=True)
class _Clause:
    tag: str
    log_power: int
    check: str
    tol_name: str
    exponent: object  # callable (q, mu) -> expected
    admissible: object  # callable (q, mu) -> bool
    gated_q: tuple = (INF,)


def _clauses(variant):
    g = gamma_q
    if variant == "prop_lowt":
        return [
            _Clause("prop_lowt", 0, "upper", "tol_low", lambda q, mu: -g(q) - 1.0, lambda q, mu: mu == 0),
            _Clause("prop_lowt_log", 1, "two_sided", "tol", lambda q, mu: -g(q) - 1.5, lambda q, mu: mu == 0),
        ]
    if variant == "prop_lows":
        return [_Clause("prop_lows", 1, "upper", "tol",
                        lambda q, mu: (-1.5 if q == 1 else -2.5) + mu / 2.0,
                        lambda q, mu: (q == 1 and 0 <= mu < 3) or (q == INF and 0 <= mu <= 5))]
    if variant == "thm_st":
        return [_Clause("thm_st", 2, "two_sided", "tol_thm_st",
                        lambda q, mu: (-2.5 if q == 1 else -3.5) + mu / 2.0,
                        lambda q, mu: (q == 1 and 0 <= mu < 5) or (q == INF and 0 <= mu <= 7))]
    if variant == "thm_t":
        return [
            _Clause("thm_t", 0, "upper", "tol", lambda q, mu: -g(q) - 2.0, lambda q, mu: mu == 0),
            _Clause("thm_t_log", 2, "upper", "tol", lambda q, mu: -g(q) - 2.5, lambda q, mu: mu == 0),
        ]
    raise ValueError(f"unknown variant {variant!r}")


def _rate_report(tag, times, vals, floors, expected, log_power, check, tol, opts, q, mu, gated, notes=""):
    fit = rate_fit(times, vals, log_power, opts.log_shift if log_power else 0.0)
    rep = CheckReport(tag, fit.exponent, expected, tol, check, q=q, mu=mu, log_power=log_power,
                      r2=fit.r_squared, fit=fit, gated=gated, notes=notes)
    if rep.verdict == "fail" and floors is not None:
        ratio = min(v / f for v, f in zip(vals, floors) if f > 0) if any(f > 0 for f in floors) else INF
        if ratio < opts.noise_factor:
            rep.verdict = "inconclusive"
            rep.notes = (rep.notes + f" residual within {ratio:.3g}x of the noise floor").strip()
    return rep


def theorem_suite(variant, traj, coeffs, mus=None, qs=(INF, 1), options: VerifyOptions | None = None):
    """Rate checks of one assembly variant on the trajectory's late window."""
    opts = options or VerifyOptions()
    times = _window_times(traj, opts.window_fraction)
    clauses = _clauses(variant)
    pairs = []
    for q in qs:
        cand = mus if mus is not None else (opts.mus_inf if q == INF else opts.mus_l1)
        for mu in cand:
            if any(c.admissible(q, mu) for c in clauses) and (mu, q) not in pairs:
                pairs.append((mu, q))
    if not pairs:
        raise ValueError(f"no admissible (mu, q) for {variant}")
    norms = residual_norms(variant, traj, coeffs, pairs, times)
    reports = []
    for c in clauses:
        for mu, q in pairs:
            if not c.admissible(q, mu):
                continue
            vals, floors = norms[(mu, q)]
            reports.append(_rate_report(c.tag, times, vals, floors, c.exponent(q, mu), c.log_power, c.check,
                                        getattr(opts, c.tol_name), opts, q, mu, gated=q in c.gated_q))
        reports.extend(mu_slope([r for r in reports if r.claim == c.tag], opts))
    return reports


def mu_slope(reports, options: VerifyOptions | None = None):
    """Regression of fitted exponents against mu (expected slope 1/2) for each q."""
    opts = options or VerifyOptions()
    out = []
    for q in sorted({r.q for r in reports}, key=lambda x: -1 if x == INF else x):
        rs = [r for r in reports if r.q == q and r.verdict != "inconclusive"]
        if len({r.mu for r in rs}) < 2:
            continue
        mu = np.array([r.mu for r in rs], dtype=float)
        ex = np.array([r.measured for r in rs])
        slope = float(np.polyfit(mu, ex, 1)[0])
        out.append(CheckReport(rs[0].claim + "_mu_slope", slope, 0.5, opts.tol_mu_slope, "two_sided",
                               q=q, mu="/".join(f"{m:g}" for m in mu), log_power=rs[0].log_power,
                               gated=rs[0].gated))
    return out


def ablation(variant, traj, coeffs, t, mu=0.0, q=INF, terms=None):
    """Residual norm at time t with the full assembly and with each listed term dropped."""
    from .expansion import _terms_for

    terms = terms or [k for k in _terms_for(variant)]
    base = residual_norms(variant, traj, coeffs, [(mu, q)], [t])[(mu, q)][0][0]
    return base, {k: residual_norms(variant, traj, coeffs, [(mu, q)], [t], drop=(k,))[(mu, q)][0][0] for k in terms}


# --------------------------------------------------------------------------
# vorticity


def vorticity_suite(traj, coeffs, k=None, qs=(INF, 1, 2), options: VerifyOptions | None = None):
    """Decay of omega, its two-term profile expansion (plain and weighted) and of omega u - I_5 - I_6."""
    opts = options or VerifyOptions()
    k = opts.vorticity_weight if k is None else k
    times = _window_times(traj, opts.window_fraction)
    grid = traj.grid
    series = {key: [] for key in ("omega", "rem", "rem_w", "abl", "flux", "flux_w")}
    series = {(name, q): [] for name in series for q in qs}
    for t in times:
        w = traj.omega(t)
        om = build_Omega_m(2, t, grid, coeffs).samples + build_Omega_m(3, t, grid, coeffs).samples
        rem = ScalarField(grid, w.samples - om, t)
        prod, _ = pointwise_product(w, traj.velocity(t))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", PrecisionWarning)
            I = build_I_p(5, t, grid, coeffs).samples + build_I_p(6, t, grid, coeffs).samples
        flux = VectorField(grid, prod.samples - I, t)
        for q in qs:
            series[("omega", q)].append(_norm(w, 0, q))
            series[("rem", q)].append(_norm(rem, 0, q))
            series[("rem_w", q)].append(_norm(rem, k, q))
            series[("flux", q)].append(_norm(flux, 0, q))
            series[("flux_w", q)].append(_norm(flux, k, q))
    reports = []
    for q in qs:
        g = gamma_q(q)
        gate = q == INF
        reports.append(_rate_report("decay_vort", times, series[("omega", q)], None, -g - 1.0, 0, "two_sided",
                                    opts.tol_decay, opts, q, 0, gate))
        full = _rate_report("asymp_vort", times, series[("rem", q)], None, -g - 2.0, 1, "upper", opts.tol,
                            opts, q, 0, gate)
        reports.append(full)
        reports.append(_rate_report("asymp_vort_wt", times, series[("rem_w", q)], None, -g - 2.0 + k / 2.0, 1,
                                    "upper", opts.tol, opts, q, k, gate))
        reports.append(_rate_report("asymp_flux", times, series[("flux", q)], None, -g - 3.5, 1, "upper",
                                    opts.tol, opts, q, 0, gate))
        reports.append(_rate_report("asymp_flux_wt", times, series[("flux_w", q)], None, -g - 3.5 + k / 2.0, 1,
                                    "upper", opts.tol, opts, q, k, gate))
        bare = rate_fit(times, series[("omega", q)], 1, opts.log_shift)
        reports.append(CheckReport("asymp_vort_ablation", full.measured - bare.exponent, 0.0, 0.0, "upper", q=q,
                                   mu=0, log_power=1, gated=gate,
                                   notes=f"exponent without profiles {bare.exponent:+.4g}"))
    return reports


# --------------------------------------------------------------------------
# linear part


def lemma_suite(omega0: ScalarField, times, mus=(0.0, 7.0), qs=(INF, 1), options: VerifyOptions | None = None):
    """Heat-convolution velocity minus U_1..U_4, on the torus; no Navier-Stokes solve."""
    opts = options or VerifyOptions()
    grid = omega0.grid
    coeffs = ExpansionCoefficients.zeros()
    coeffs.initial.update(moments(omega0, 7))
    times = [float(t) for t in times]
    pairs = [(0.0, q) for q in qs] + [(mu, INF) for mu in mus if mu != 0 and INF in qs]
    pairs += [(mu, 1) for mu in mus if 0 < mu < 5 and 1 in qs]
    vals = {pq: [] for pq in pairs}
    floors = {pq: [] for pq in pairs}
    for t in times:
        ul = biot_savart_velocity(heat_flow(omega0, t))
        approx = sum(build_U_m(m, t, grid, coeffs).samples for m in range(1, 5))
        r = VectorField(grid, ul.samples - approx, t)
        for mu, q in pairs:
            vals[(mu, q)].append(_norm(r, mu, q))
            floors[(mu, q)].append(_norm(ul, mu, q) * opts.roundoff)
    reports = []
    for mu, q in pairs:
        g = gamma_q(q)
        if mu == 0:
            reports.append(_rate_report("lemma_lin", times, vals[(mu, q)], floors[(mu, q)], -g - 2.5, 0, "upper",
                                        opts.tol_lemma, opts, q, 0, q == INF))
        if q == INF:
            reports.append(_rate_report("lemma_lin_weighted", times, vals[(mu, q)], floors[(mu, q)],
                                        -3.5 + mu / 2.0, 0, "two_sided", opts.tol_lemma, opts, q, mu, True))
        elif mu > 0:
            reports.append(_rate_report("lemma_lin_weighted", times, vals[(mu, q)], floors[(mu, q)],
                                        -2.5 + mu / 2.0, 0, "two_sided", opts.tol_lemma, opts, q, mu, False))
    return reports


# --------------------------------------------------------------------------
# scaling


_SCALING_KINDS = (("U_m", (1, 2, 3, 4)), ("U_m_inf", (1, 2, 3, 4)), ("Omega_m", (2, 3)), ("I_p", (5, 6)),
                  ("V_m", (3, 4)), ("K_m", (3, 4)), ("J_m", (3, 4)), ("RzG", (0, 1, 2)))


def _scaled_pair(kind, m, t, lam, grid, coeffs):
    """(f(t) on grid, f(lam^2 t) on the grid scaled by lam, homogeneity degree)."""
    g2 = grid.scaled(lam)
    if kind == "K_m":
        a = build_K_m(m, t, grid, coeffs, shift=1.0).samples
        b = build_K_m(m, lam * lam * t, g2, coeffs, shift=lam * lam).samples
        return a, b, -(m + 2)
    if kind == "RzG":
        combo = KernelCombo(4)
        for beta in of_order(m):
            for i in range(2):
                for j in range(2):
                    combo.add_riesz(2 * i + j, i, j, 0, beta)
        return realize(combo, t, grid, "plane"), realize(combo, lam * lam * t, g2, "plane"), -(m + 2)
    order = m
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PrecisionWarning)
        a = BUILDERS[kind](m, t, grid, coeffs).samples
        b = BUILDERS[kind](m, lam * lam * t, g2, coeffs).samples
    return a, b, -(order + 2)


def scaling_suite(coeffs, grid: GridSpec, kinds=None, lambdas=None, times=None,
                  options: VerifyOptions | None = None):
    """lam^{-d} f(t, x) against f(lam^2 t, lam x) for each homogeneous profile.

    K_m is homogeneous only together with its time shift, which is rescaled
    by lam^2 as well.  RzG rows check the derivatives of R^perp R G and the
    norm law ||D^beta R^perp R G(t)||_q ~ t^(-gamma_q - |beta|/2).
    """
    opts = options or VerifyOptions()
    lambdas = opts.scaling_lambdas if lambdas is None else lambdas
    times = (opts.scaling_time,) if times is None else times
    kinds = dict(_SCALING_KINDS) if kinds is None else {k: dict(_SCALING_KINDS)[k] for k in kinds}
    reports = []
    for t in times:
        if math.sqrt(t) < 2.0 * grid.h:
            raise TruncationError(f"profile width sqrt(t) = {math.sqrt(t):.3g} is unresolved on the grid", t)
        for kind, orders in kinds.items():
            for m in orders:
                for lam in lambdas:
                    if math.sqrt(lam * lam * t) < 2.0 * grid.scaled(lam).h:
                        raise TruncationError("rescaled profile is unresolved", lam * lam * t)
                    a, b, d = _scaled_pair(kind, m, t, lam, grid, coeffs)
                    scale = float(np.max(np.abs(a)))
                    dev = float(np.max(np.abs(b - lam**d * a))) / (abs(lam**d) * scale) if scale > 0 else 0.0
                    tol = opts.scaling_tol_quad if kind == "J_m" else opts.scaling_tol_exact
                    reports.append(CheckReport(f"scaling:{kind}{m}", dev, 0.0, tol, "deviation",
                                               notes=f"lambda={lam:g} t={t:g}"))
                    if kind == "RzG":
                        for q in (INF, 2):
                            na = weighted_norm(VectorField(grid, a[:2], t), 0, q)
                            nb = weighted_norm(VectorField(grid.scaled(lam), b[:2], t), 0, q)
                            e = -gamma_q(q) - m / 2.0
                            dn = abs(nb / (na * (lam * lam) ** e) - 1.0)
                            reports.append(CheckReport(f"scaling:RzG{m}_norm", dn, 0.0, opts.scaling_tol_exact,
                                                       "deviation", q=q, notes=f"lambda={lam:g} t={t:g}"))
    return reports


# --------------------------------------------------------------------------
# kernels, solver and curl sanity


def kernel_oracle_check(options: VerifyOptions | None = None):
    """Closed forms against the polar Fourier quadrature at random points, and the Riesz trace identity."""
    opts = options or VerifyOptions()
    rng = np.random.default_rng(opts.seed)
    worst = 0.0
    for _ in range(opts.kernel_points):
        family = ("heat", "biot_savart", "riesz_tensor")[rng.integers(3)]
        t = float(10 ** rng.uniform(-0.5, 0.8))
        x = rng.uniform(-2.5, 2.5, 2) * math.sqrt(t)
        order = int(rng.integers(0, 4))
        a1 = int(rng.integers(0, order + 1))
        beta = MultiIndex(a1, order - a1)
        l = int(rng.integers(0, 2)) if family == "riesz_tensor" else 0
        spec = MultiplierSpec(family, l, beta)
        ref = fourier_oracle(spec, t, x).entries
        if family == "heat":
            val = gauss_deriv(beta, t, x)
        elif family == "biot_savart":
            val = bs_kernel_deriv(beta, t, x)
        else:
            val = riesz_tensor_deriv(l, beta, t, x)
        val = np.asarray(val).reshape(-1)
        ref = np.asarray(ref).reshape(-1)
        scale = max(float(np.max(np.abs(ref))), 1e-300)
        worst = max(worst, float(np.max(np.abs(val - ref))) / scale)
    rep = [CheckReport("kernel_oracle", worst, 0.0, opts.kernel_tol, "deviation",
                       notes=f"{opts.kernel_points} random points")]
    pts = rng.uniform(-4, 4, (200, 2))
    trace = 0.0
    for t in (0.3, 1.0, 4.0):
        T = riesz_tensor(t, pts)
        G = gauss(t, pts)
        # layout [[-R2R1, -R2R2], [R1R1, R1R2]] G
        trace = max(trace, float(np.max(np.abs(T[:, 1, 0] - T[:, 0, 1] + G))) / float(np.max(G)))
    rep.append(CheckReport("riesz_trace", trace, 0.0, opts.trace_tol, "deviation"))
    return rep


def solver_sanity(traj, omega0: ScalarField, options: VerifyOptions | None = None):
    """Mean vorticity, incompressibility, the linear limit and the flux cancellation int omega u = 0."""
    opts = options or VerifyOptions()
    d = traj.diagnostics
    amp = max(omega0.max_abs(), 1e-300)
    reps = [CheckReport("solver_mean_vorticity", float(np.max(np.abs(d["mean_vorticity"]))) / amp, 0.0,
                        opts.mean_tol, "deviation", notes="relative to max|omega_0|")]
    div = 0.0
    flux = 0.0
    for t in traj.times:
        u = traj.velocity(t)
        grad = max(gradient(u.component(c)).max_abs() for c in range(2))
        div = max(div, divergence(u).max_abs() / max(grad, 1e-300))
        w = traj.omega(t)
        prod, integral = pointwise_product(w, u)
        total = float(np.sum(np.abs(prod.samples[0]) + np.abs(prod.samples[1]))) * traj.grid.h**2
        if total > 0:
            flux = max(flux, float(np.max(np.abs(integral))) / total)
    reps.append(CheckReport("solver_divergence", div, 0.0, opts.div_tol, "deviation",
                            notes="relative to max|grad u|"))
    reps.append(CheckReport("solver_flux_cancellation", flux, 0.0, opts.flux_tol, "deviation",
                            notes="|int omega u| / int |omega u|"))
    T = opts.heat_time
    lin = run(omega0, SolverConfig(traj.grid, dt=traj.config.dt, T_max=T, snapshot_times=(T,),
                                   dealias=traj.config.dealias, stepper=traj.config.stepper,
                                   boundary_floor=traj.config.boundary_floor, nonlinear=False))
    exact = heat_flow(omega0, T)
    dev = float(np.max(np.abs(lin.omega(T).samples - exact.samples))) / amp
    reps.append(CheckReport("solver_heat_limit", dev, 0.0, opts.heat_tol, "deviation",
                            notes=f"linear run to t={T:g}, relative to max|omega_0|"))
    return reps


def curl_consistency(coeffs, grid: GridSpec, times, options: VerifyOptions | None = None):
    """Omega_m against curl(U_{m-1} + U_{m-1}^inf), m = 2, 3, max norm."""
    opts = options or VerifyOptions()
    reps = []
    for m in (2, 3):
        worst = 0.0
        for t in times:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", PrecisionWarning)
                v = build_U_m(m - 1, t, grid, coeffs) + build_U_m_inf(m - 1, t, grid, coeffs)
            worst = max(worst, float(np.max(np.abs(curl(v).samples - build_Omega_m(m, t, grid, coeffs).samples))))
        reps.append(CheckReport(f"curl_consistency:Omega{m}", worst, 0.0, opts.curl_tol, "deviation"))
    return reps


# --------------------------------------------------------------------------
# K_m sharpness and J_m well-definedness


def k_sharpness(coeffs, m: int = 3, window=None, npoints=None, options: VerifyOptions | None = None):
    """||K_m(t)||_inf t^{(m+2)/2} / log t over a decade, from the closed form.

    K_m at time t is sampled on the unit profile grid scaled by sqrt(t), so
    the profile is resolved at every t.  Returns the report and the series.
    """
    opts = options or VerifyOptions()
    lo, hi = opts.k_window if window is None else window
    n = opts.k_points if npoints is None else npoints
    base = coeffs.unit_grid()
    times = np.geomspace(lo, hi, n)
    ratios = []
    for t in times:
        K = build_K_m(m, float(t), base.scaled(math.sqrt(t)), coeffs, mode="plane")
        ratios.append(K.max_abs() * t ** ((m + 2) / 2.0) / math.log(t))
    ratios = np.array(ratios)
    drift = float((ratios.max() - ratios.min()) / np.mean(np.abs(ratios)))
    rep = CheckReport(f"K{m}_sharpness", drift, 0.0, opts.k_drift, "deviation",
                      notes=f"t in [{lo:g}, {hi:g}], ratio {ratios[0]:.4g} -> {ratios[-1]:.4g}")
    return rep, times, ratios


def j_stability(coeffs, grid: GridSpec, m: int = 3, t=None, options: VerifyOptions | None = None):
    """eps-sequence certificate and the change under doubled Gauss-Legendre depth."""
    opts = options or VerifyOptions()
    t = opts.j_time if t is None else t
    cert = J_certificate(m, t, grid, coeffs)
    nodes = coeffs.options.panel_nodes
    fine = build_J_m(m, t, grid, coeffs, panel_nodes=2 * nodes).samples
    scale = max(float(np.max(np.abs(fine))), 1e-300)
    change = float(np.max(np.abs(fine - cert["value"]))) / scale
    inc = cert["increments"]
    ratio = max(b / a for a, b in zip(inc, inc[1:])) if len(inc) > 1 else 0.0
    return [
        CheckReport(f"J{m}_increments", ratio, 0.0, 1.0 - 1e-12, "deviation",
                    notes="largest ratio of successive eps-sequence increments"),
        CheckReport(f"J{m}_depth_stability", change, 0.0, opts.j_tol, "deviation",
                    notes=f"t={t:g}, nodes {nodes} -> {2 * nodes}, Richardson gap {cert['richardson_gap']:.3g}"),
    ]

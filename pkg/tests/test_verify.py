import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from farfield.expansion import ExpansionCoefficients, build_U_m
from farfield.fields import GridSpec, ScalarField, moments, weighted_norm
from farfield.kernels import bs_kernel_deriv, gauss_deriv
from farfield.verify import (
    INF,
    CheckReport,
    FitError,
    VerifyOptions,
    _rate_report,
    ablation,
    curl_consistency,
    judge,
    k_sharpness,
    kernel_oracle_check,
    lemma_suite,
    mu_slope,
    rate_fit,
    scaling_suite,
    solver_sanity,
    summary_text,
    write_report,
)

T = np.geomspace(2.0, 64.0, 12)


def test_rate_fit_examples():
    fit = rate_fit(T, T**-1.5)
    assert fit.exponent == pytest.approx(-1.5, abs=1e-6)
    assert fit.r_squared >= 0.999999
    fit = rate_fit(T, T**-2 * np.log(T), log_power=1)
    assert fit.exponent == pytest.approx(-2.0, abs=1e-3)
    fit = rate_fit(T, np.full(T.size, 3.0))
    assert fit.exponent == 0.0
    assert 0.0 <= fit.r_squared <= 1.0


@settings(max_examples=40, deadline=None)
@given(st.floats(-6, 2), st.integers(0, 2), st.floats(0.01, 100.0))
def test_rate_fit_recovers_exponent(a, p, amp):
    t = np.geomspace(0.5, 9.0, 10)
    vals = amp * t**a * np.log(2 + t) ** p
    fit = rate_fit(t, vals, log_power=p, log_shift=2.0)
    assert fit.exponent == pytest.approx(a, abs=1e-9)
    assert fit.amplitude == pytest.approx(amp, rel=1e-8)


def test_rate_fit_rejects_bad_input():
    with pytest.raises(FitError):
        rate_fit(T[:4], T[:4] ** -1)
    with pytest.raises(FitError):
        rate_fit(np.linspace(1, 2, 8), np.ones(8))
    with pytest.raises(FitError):
        rate_fit(T, -T)
    with pytest.raises(FitError):
        rate_fit(T[::-1], T)
    with pytest.raises(FitError):
        rate_fit(T, T, log_power=3)
    with pytest.raises(FitError):
        rate_fit(np.geomspace(0.5, 8, 8), np.ones(8), log_power=1)


def test_log_detection():
    t = np.geomspace(2.0, 64.0, 12)
    vals = t**-2.5 * np.log(t)
    plain = rate_fit(t, vals, 0)
    logged = rate_fit(t, vals, 1)
    assert logged.r_squared - plain.r_squared >= 0.001


def test_judge_and_verdicts():
    assert judge(-2.1, -2.0, 0.15)
    assert not judge(-2.2, -2.0, 0.15)
    assert judge(-3.0, -2.0, 0.15, "upper")
    assert not judge(-1.8, -2.0, 0.15, "upper")
    assert judge(1e-10, 0.0, 1e-9, "deviation")
    assert not judge(float("nan"), 0.0, 1.0)
    with pytest.raises(ValueError):
        judge(0.0, 0.0, 1.0, "sideways")
    assert CheckReport("x", -2.1, -2.0, 0.15).verdict == "pass"
    assert CheckReport("x", -2.5, -2.0, 0.15).verdict == "fail"


def test_inconclusive_only_near_noise_floor():
    t = np.geomspace(1, 16, 8)
    opts = VerifyOptions()
    vals = 1e-12 * t**-1.0
    near = _rate_report("c", t, vals, vals / 5, -3.0, 0, "two_sided", 0.2, opts, INF, 0, True)
    assert near.verdict == "inconclusive"
    far = _rate_report("c", t, vals, vals / 1e6, -3.0, 0, "two_sided", 0.2, opts, INF, 0, True)
    assert far.verdict == "fail"
    good = _rate_report("c", t, t**-3.0, t**-3.0, -3.0, 0, "two_sided", 0.2, opts, INF, 0, True)
    assert good.verdict == "pass"


def test_mu_slope():
    reps = [CheckReport("thm_st", -3.5 + mu / 2 + 0.01 * mu, -3.5 + mu / 2, 0.3, q=INF, mu=mu)
            for mu in (0.0, 1.0, 2.0)]
    (slope,) = mu_slope(reps)
    assert slope.measured == pytest.approx(0.51)
    assert slope.verdict == "pass"
    bad = [CheckReport("thm_st", -3.5, -3.5 + mu / 2, 0.3, q=INF, mu=mu) for mu in (0.0, 2.0)]
    assert mu_slope(bad)[0].verdict == "fail"


def test_report_output_is_deterministic(tmp_path):
    reps = [CheckReport("a", -2.0, -2.0, 0.1, q=INF, mu=0.0, log_power=0, r2=0.99),
            CheckReport("b", 1e-12, 0.0, 1e-9, "deviation", gated=False, notes="n")]
    write_report(tmp_path / "r1.csv", reps)
    write_report(tmp_path / "r2.csv", reps)
    assert (tmp_path / "r1.csv").read_bytes() == (tmp_path / "r2.csv").read_bytes()
    rows = list(csv.DictReader(open(tmp_path / "r1.csv")))
    assert rows[0]["claim_tag"] == "a" and rows[0]["q"] == "inf" and rows[0]["verdict"] == "pass"
    for col in ("claim_tag", "q", "mu", "expected_exponent", "log_power", "measured_exponent", "r2", "verdict"):
        assert col in rows[0]
    text = summary_text(reps)
    assert "2 checks, 1 gated, 0 gated failures" in text


def test_kernel_oracle_check_passes():
    reps = kernel_oracle_check(VerifyOptions(kernel_points=15))
    assert all(r.verdict == "pass" for r in reps), summary_text(reps)


def test_scaling_identity_lambda_one(small_coeffs):
    reps = scaling_suite(small_coeffs, GridSpec(64, 12.0), kinds=["U_m", "Omega_m", "K_m"], lambdas=(1.0,))
    assert all(r.measured == 0.0 for r in reps)


def test_scaling_suite_non_dyadic(small_coeffs):
    reps = scaling_suite(small_coeffs, GridSpec(64, 12.0), kinds=["U_m", "U_m_inf", "I_p", "V_m", "K_m", "RzG"],
                         lambdas=(1.3, 0.7))
    assert all(r.verdict == "pass" for r in reps), summary_text(reps)


def test_solver_sanity_and_curl(small_traj, small_omega0, small_coeffs):
    reps = solver_sanity(small_traj, small_omega0)
    assert all(r.verdict == "pass" for r in reps), summary_text(reps)
    late = [t for t in small_traj.times if t >= 1.0]
    reps = curl_consistency(small_coeffs, small_traj.grid, late)
    assert all(r.verdict == "pass" for r in reps), summary_text(reps)


def test_k_sharpness_far_window(small_coeffs):
    rep, times, ratios = k_sharpness(small_coeffs, 3, window=(1e11, 1e12), npoints=6)
    assert rep.verdict == "pass"
    assert np.all(ratios > 0)
    near, _, _ = k_sharpness(small_coeffs, 3, window=(1e3, 1e4), npoints=6)
    assert near.measured > rep.measured


@pytest.mark.parametrize("m", [1, 2])
def test_hermite_mode_residual_drops_to_next_order(m):
    """omega_0 = D^alpha G(1) with |alpha| = m + 1: the linear velocity is
    D^alpha bs(t + 1) and odd moments above |alpha| vanish, so after U_1..U_m
    the residual is U_{m+2} to leading order and after U_1..U_{m+2} it drops
    two more orders."""
    alpha = (m + 1, 0) if m == 1 else (2, 1)
    g0 = GridSpec(256, 16.0)
    X1, X2 = g0.coords
    w0 = ScalarField(g0, gauss_deriv(alpha, 1.0, np.stack([X1, X2], -1)))
    c = ExpansionCoefficients.zeros()
    c.initial.update(moments(w0, 7))
    times = np.geomspace(40.0, 640.0, 7)
    lead, rest = [], []
    for t in times:
        g = GridSpec(128, 8.0 * math.sqrt(t))
        Y1, Y2 = g.coords
        ulin = np.moveaxis(bs_kernel_deriv(alpha, t + 1.0, np.stack([Y1, Y2], -1)), -1, 0)
        U = {k: build_U_m(k, t, g, c, "plane").samples for k in range(1, 5)}
        below = sum(U[k] for k in range(1, m + 1))
        assert np.abs(U[m + 1]).max() <= 1e-10 * np.abs(U[m]).max()
        lead.append(np.hypot(*(ulin - below)).max())
        rest.append(np.hypot(*(ulin - below - U[m + 2])).max())
    assert rate_fit(times, lead).exponent == pytest.approx(-1 - (m + 2) / 2, abs=0.02)
    if m == 1:
        # U_4 of a second-order mode vanishes too, so the next order is the fifth
        assert rate_fit(times, rest).exponent == pytest.approx(-1 - 5 / 2, abs=0.05)


def test_lemma_suite_on_small_data():
    g = GridSpec(256, 24.0)
    from farfield.solver import InitialDataSpec, make_initial_vorticity

    w0 = make_initial_vorticity(InitialDataSpec(amplitude=1.0, width=0.5, asymmetry={(1, 0): 0.4, (0, 2): 0.3},
                                                quadrupole=(2.0, 1.0)), g)
    times = np.geomspace(9.0 / 16, 9.0, 8)
    reps = lemma_suite(w0, times, mus=(0.0, 7.0), qs=(INF,))
    gated = [r for r in reps if r.gated]
    assert gated and all(r.passed for r in gated), summary_text(reps)
    assert weighted_norm(w0, 0, INF) == pytest.approx(1.0)


@pytest.mark.parametrize("variant", ["prop_lowt", "prop_lows", "thm_st", "thm_t"])
def test_ablation_ordering(variant, small_traj, small_coeffs):
    """Dropping a top-order term never improves the late residual beyond the
    0.5% grid-convergence noise of the weighted norms."""
    from farfield.expansion import _terms_for

    top = max(m for _, m in _terms_for(variant))
    terms = [(k, m) for k, m in _terms_for(variant) if m == top]
    for mu, q in [(0.0, INF), (2.0, INF), (0.0, 1)]:
        base, dropped = ablation(variant, small_traj, small_coeffs, small_traj.times[-1], mu, q, terms)
        assert dropped[("U_m", top)] > base
        for key, value in dropped.items():
            assert value >= base * (1 - 5e-3), (key, mu, q)

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import trapezoid

from ruelle_kit.aniso_space import check_sv_bound
from ruelle_kit.bounds import (BoundProfile, F_eval, G_eval, beta_threshold_report, class_envelopes,
                               counting_bound, f_func, fit_envelope, fit_growth_constant,
                               fit_nilpotent_constant, g_func, growth_bound, log_F, log_F_sequence,
                               log_f, log_g, log_genus_zero_bound, log_growth_bound, order_bound,
                               write_bounds_json, write_gnuplot)
from ruelle_kit.dc_class import SaturationError, log_weight, make_sequence

THETA = 1.5
R = 2.0


@pytest.fixture(scope="module")
def profile(analytic):
    return BoundProfile(analytic, THETA, 2.0, R)


@pytest.fixture(scope="module")
def gevrey_profile(gevrey2):
    return BoundProfile(gevrey2, 1.2, 2.0, R)


# -- g --------------------------------------------------------------------------------

def test_g_monotone(profile):
    lg = [log_g(profile, N) for N in range(15)]
    assert all(b <= a for a, b in zip(lg, lg[1:]))


def test_g_pure(analytic, profile):
    fresh = BoundProfile(analytic, THETA, 2.0, R)
    for N in (0, 3, 11):
        assert log_g(fresh, N) == log_g(profile, N)
    assert g_func(profile, 4) == math.exp(log_g(profile, 4))


def test_g_brute_force(profile, analytic):
    for N in (0, 2, 7):
        m = np.arange(N + 1, 200)
        lw_m, _ = log_weight(analytic, R / THETA ** m)
        lw_m1, _ = log_weight(analytic, R / THETA ** (m - 1))
        assert log_g(profile, N) == pytest.approx(np.max(lw_m - lw_m1), abs=1e-12)


def test_g_gevrey_decays(gevrey_profile):
    lg = np.array([log_g(gevrey_profile, N) for N in range(40)])
    # plateaus from the discrete minimiser early on, strict decay later
    assert np.all(np.diff(lg) <= 0) and np.all(np.diff(lg[25:]) < 0)
    assert np.polyfit(np.arange(40), lg, 1)[0] < 0 and lg[-1] < -3


def test_g_negative_N(profile):
    with pytest.raises(ValueError):
        log_g(profile, -1)


# -- f and F ------------------------------------------------------------------------------

def test_alpha_exponent(profile):
    assert profile.alpha_exp == pytest.approx(1.7095, abs=1e-4)
    assert profile.R_prime == pytest.approx(R / THETA**2)


def test_f_at_R_prime(profile):
    Rp = profile.R_prime
    assert f_func(profile, Rp) == pytest.approx(Rp ** profile.alpha_exp, rel=1e-14)


def test_f_rejects_nonpositive(profile):
    with pytest.raises(ValueError):
        log_f(profile, 0.0)


def test_F_G_at_zero(profile):
    assert F_eval(profile, 0.0) == 1.0
    assert G_eval(profile, 0.0) == 1.0
    with pytest.raises(ValueError):
        F_eval(profile, -1.0)


@given(st.floats(1e-6, 1e6), st.floats(1e-6, 1e6))
def test_F_single_factor(c, r):
    assert log_F_sequence([math.log(c)], math.log(r)) == pytest.approx(math.log1p(c * r), rel=1e-13)


def test_F_matches_explicit_product(profile):
    for r in (0.1, 3.0, 50.0):
        lf = log_f(profile, np.arange(1, 400.0))
        assert log_F(profile, math.log(r)) == pytest.approx(log_F_sequence(lf, math.log(r)), rel=1e-12)


def test_log_F_quadratic_in_log_r(profile):
    lr = np.linspace(20, 80, 13)
    y = np.array([log_F(profile, v) for v in lr])
    coef, res, *_ = np.polyfit(lr, y, 2, full=True)
    assert coef[0] > 0
    assert res[0] < 1e-3 * np.sum((y - y.mean()) ** 2)
    # exponential decay of f in m: log F ~ R' (log r)^2 / 2
    assert coef[0] == pytest.approx(profile.R_prime / 2, rel=0.05)


def test_G_finite_and_increasing(profile):
    vals = [G_eval(profile, r) for r in (0.5, 1, 2, 5)]
    assert np.all(np.isfinite(vals)) and np.all(np.diff(vals) > 0)


# -- counting ---------------------------------------------------------------------------

def counting_oracle(P, r, n_grid=400_000):
    """Trapezoid in log s of the step counting function."""
    with np.errstate(over="ignore"):
        inv_f = np.exp(-log_f(P, np.arange(1, 2000.0)))
    s = np.exp(np.linspace(math.log(inv_f.min()) - 1, math.log(r) + 30, n_grid))
    n = np.searchsorted(np.sort(inv_f), s, side="right")
    ls = np.log(s)
    inner = ls <= math.log(r)
    a = trapezoid(n[inner], ls[inner])
    b = r * trapezoid(n[~inner] / s[~inner], ls[~inner])
    return a + b


@pytest.mark.parametrize("r", [10.0, 100.0, 1000.0])
def test_counting_matches_trapezoid(profile, r):
    cb = counting_bound(profile, r)
    assert cb.value == pytest.approx(counting_oracle(profile, r), rel=1e-3)


@pytest.mark.parametrize("r", [1.0, 10.0, 100.0, 1000.0, 1e6])
def test_counting_dominates_log_F(profile, r):
    cb = counting_bound(profile, r)
    assert log_F(profile, math.log(r)) <= cb.value + cb.error_estimate
    assert cb.error_estimate >= 0


def test_counting_rejects_nonpositive(profile):
    with pytest.raises(ValueError):
        counting_bound(profile, 0.0)


# -- growth ---------------------------------------------------------------------------------

def test_growth_monotone(profile):
    vals = [log_growth_bound(profile, z, 1.5) for z in (0.0, 0.5, 1, 2, 5, 10)]
    assert vals[0] == 0.0 and np.all(np.diff(vals) > 0)
    assert growth_bound(profile, 1.0, 1.5) == pytest.approx(math.exp(vals[2]))


def test_growth_fit(profile):
    zs = [1.0, 2.0, 5.0]
    d = [math.exp(log_growth_bound(profile, z, 3.0)) * 0.99 for z in zs]
    C, v = fit_growth_constant(profile, zs, d)
    assert v == 0 and C <= 3.0 * 1.3


# -- order, envelopes -------------------------------------------------------------------------

def test_order_bound_analytic(analytic):
    assert order_bound(analytic, 1.1, 2.0) == pytest.approx(0.1375, abs=1e-4)
    with pytest.raises(ValueError):
        order_bound(analytic, 1.1, 1.0)


def test_order_bound_alpha_beta():
    M = make_sequence({"kind": "alpha_beta", "alpha": math.log(2), "beta": 2.0}, 256)
    assert order_bound(M, 2.2, 2.0) == pytest.approx(math.log(2.2) / math.log(2))


def test_beta_threshold_report():
    rows = beta_threshold_report(math.log(2), 2.0, betas=(1.5, 2.0))
    assert [r["beta"] for r in rows] == [1.5, 2.0]
    for r in rows:
        if r["gamma"] is not None:
            assert r["order_bound"] == pytest.approx(math.log(r["gamma"]) / math.log(2))


def test_envelope_values():
    assert class_envelopes("gevrey_sv", {"sigma": 2}, 16, 1.0) == pytest.approx(math.exp(-4))
    assert class_envelopes("ab_k_lower", {"beta": 2}, math.exp(-5), 1.0) == pytest.approx(4.0)
    assert class_envelopes("ab_det_growth", {"beta": 2}, 0.5, 2.0) == pytest.approx(2.0)
    with pytest.raises(ValueError, match="beta = 1"):
        class_envelopes("ab_k_lower", {"beta": 1}, 0.5, 1.0)
    with pytest.raises(ValueError):
        class_envelopes("nope", {"beta": 2}, 0.5, 1.0)


def test_fit_envelope_lower():
    xs = np.logspace(-6, -1, 30)
    y = class_envelopes("ab_k_lower", {"beta": 3}, xs, 2.0) + 0.01
    fit = fit_envelope("ab_k_lower", {"beta": 3}, xs, y)
    assert fit.violations == 0 and fit.c <= 2.0
    assert np.all(fit.slack >= 0)


def test_fit_envelope_upper():
    ms = np.arange(1, 60)
    y = 0.5 * np.exp(-np.sqrt(ms) / 3.0)
    fit = fit_envelope("gevrey_sv", {"sigma": 2}, ms, y)
    assert fit.violations == 0 and fit.c <= 3.0 * (1 + 1e-9)


def test_alpha_beta_lower_envelope_fits_minimisers():
    M = make_sequence({"kind": "alpha_beta", "alpha": math.log(2), "beta": 2.0}, 4096)
    xs = np.logspace(-6, math.log10(0.5), 61)
    _, k = log_weight(M, xs)
    fit = fit_envelope("ab_k_lower", {"beta": 2.0}, xs, k)
    assert fit.violations == 0 and math.isfinite(fit.c)


# -- genus zero, nilpotent fit ------------------------------------------------------------------

def test_genus_zero_tighter(perturbed, analytic, perturbed_matrix_128):
    from ruelle_kit.aniso_space import build_scaling, h_matrix, singular_values
    S = build_scaling(perturbed.lam, analytic, THETA, 128, None, perturbed_matrix_128)
    s = singular_values(h_matrix(perturbed_matrix_128, S).entries)
    rep = check_sv_bound(s, analytic, THETA)
    P = BoundProfile(analytic, THETA, perturbed.lam, S.R)
    for z in (10.0, 100.0):
        assert log_genus_zero_bound(analytic, THETA, z, rep.C, rep.A) < log_growth_bound(P, z, 1.0)


def test_genus_zero_saturation():
    M = make_sequence({"kind": "analytic"}, 8)
    with pytest.raises(SaturationError):
        log_genus_zero_bound(M, THETA, 10.0, 1.0, 1.0)


def test_fit_nilpotent_constant():
    lg = np.log([0.5, 0.4, 0.3, 0.2])
    norms = np.array([2 * 0.5, 4 * 0.5 * 0.4, 8 * 0.5 * 0.4 * 0.3, 0.0])
    C, v = fit_nilpotent_constant(norms, lg)
    assert C == pytest.approx(2.0) and v == 0
    assert fit_nilpotent_constant(np.zeros(3), lg) == (0.0, 0)


def test_writers(tmp_path):
    write_gnuplot(tmp_path / "a.gp", "a.csv", "t", "x", "y", logx=True)
    assert "logscale x" in (tmp_path / "a.gp").read_text()
    write_bounds_json(tmp_path / "b.json", [{"name": "g"}])
    assert (tmp_path / "b.json").read_text().startswith("[")

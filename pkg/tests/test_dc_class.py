import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ruelle_kit.dc_class import (ClassSpec, SaturationError, check_gentil, decay_ratio,
                                 estimate_class_constants, fit_poly_ratio_constant,
                                 log_convex_majorant, log_weight, make_sequence,
                                 poly_ratio_exponent, weight_table, weight_w, write_weight_csv)


def brute_weight(log_m, x):
    """Direct minimum over every k; ties resolved to the largest index."""
    k = np.arange(log_m.size)
    from scipy.special import gammaln
    terms = k * math.log(x) + gammaln(k + 1) + log_m
    best = terms.min()
    kk = int(np.flatnonzero(terms <= best + 1e-12 * max(1.0, abs(best)))[-1])
    return terms[kk], kk


# -- construction ---------------------------------------------------------

def test_analytic_values():
    M = make_sequence({"kind": "analytic"}, 4)
    np.testing.assert_array_equal(M.values, [1, 1, 1, 1, 1])


def test_gevrey_values():
    M = make_sequence({"kind": "gevrey", "sigma": 2.0}, 4)
    np.testing.assert_allclose(M.values, [1, 1, 2, 6, 24], rtol=1e-12)


def test_alpha_beta_log_values():
    M = make_sequence({"kind": "alpha_beta", "alpha": math.log(2), "beta": 2}, 3)
    np.testing.assert_allclose(M.log_values, [0, 0.3466, 1.3863, 3.1192], atol=1e-4)
    k = np.arange(4)
    np.testing.assert_allclose(M.log_values, math.log(2) * k**2 / 2, rtol=1e-12)


@pytest.mark.parametrize("spec", [
    {"kind": "analytic"}, {"kind": "gevrey", "sigma": 1.7},
    {"kind": "alpha_beta", "alpha": 0.3, "beta": 1.5}, {"kind": "alpha_beta", "alpha": 2.0, "beta": 3.0},
])
def test_sequence_invariants(spec):
    M = make_sequence(spec, 300)
    lv = M.log_values
    assert lv[0] == 0
    assert np.all(np.diff(lv) >= -1e-12)
    assert np.all(2 * lv[1:-1] <= lv[:-2] + lv[2:] + 1e-9)


@pytest.mark.parametrize("values, idx", [
    ([2.0, 3.0, 4.0], 0),             # M_0 != 1
    ([1.0, 3.0, 2.0, 5.0], 2),        # decreasing
    ([1.0, 1.0, 1.0, 2.0, 2.0], 3),   # not log-convex at 3
    ([1.0, -1.0, 2.0], 1),            # non-positive
])
def test_custom_rejected_with_index(values, idx):
    with pytest.raises(ValueError, match=f"index {idx}"):
        make_sequence({"kind": "custom", "values": values})


def test_bad_parameters():
    with pytest.raises(ValueError):
        make_sequence({"kind": "gevrey", "sigma": 0.5})
    with pytest.raises(ValueError):
        make_sequence({"kind": "alpha_beta", "alpha": -1, "beta": 2})
    with pytest.raises(ValueError):
        make_sequence({"kind": "analytic"}, 1)
    with pytest.raises(ValueError):
        ClassSpec.from_dict({"kind": "weird"})


def test_spec_roundtrip():
    d = {"kind": "gevrey", "sigma": 2.0, "k_max": 256}
    assert ClassSpec.from_dict(d).to_dict() == d


# -- weight ---------------------------------------------------------------

def test_weight_analytic_at_one():
    # 1^0 0! = 1^1 1! = 1: a tie, so the largest minimiser k = 1 is reported
    ev = weight_w(make_sequence({"kind": "analytic"}), 1.0)
    assert ev.w == 1.0 and ev.k_of_x == 1
    assert brute_weight(np.zeros(50), 1.0) == (0.0, 1)


def test_weight_analytic_tie_goes_to_larger_index():
    ev = weight_w(make_sequence({"kind": "analytic"}), 0.1)
    assert ev.k_of_x == 10
    assert ev.w == pytest.approx(3.6288e-4, rel=1e-10)
    assert not ev.saturated


def test_weight_gevrey():
    ev = weight_w(make_sequence({"kind": "gevrey", "sigma": 2.0}, 200), 0.1)
    assert ev.k_of_x == 3
    assert ev.w == pytest.approx(3.6e-2, rel=1e-10)


def test_saturation_flag():
    M = make_sequence({"kind": "analytic"}, 8)
    ev = weight_w(M, 1e-3)
    assert ev.saturated and ev.k_of_x == 8


@given(st.floats(min_value=-6, max_value=1), st.sampled_from([
    {"kind": "analytic"}, {"kind": "gevrey", "sigma": 2.0}, {"kind": "alpha_beta", "alpha": 0.7, "beta": 2.0}]))
def test_weight_matches_brute_force(log10x, spec):
    M = make_sequence(spec, 400)
    x = 10.0**log10x
    lw, k = log_weight(M, x)
    blw, bk = brute_weight(M.log_values, x)
    assert int(k) == bk
    assert float(lw) == pytest.approx(blw, rel=1e-10, abs=1e-10)


def test_log_space_matches_direct():
    M = make_sequence({"kind": "gevrey", "sigma": 1.5}, 60)
    for x in (0.5, 0.1, 0.03):
        direct = min(x**k * math.factorial(k) * math.factorial(k) ** 0.5 for k in range(61))
        assert weight_w(M, x).w == pytest.approx(direct, rel=1e-10)


@pytest.mark.parametrize("spec", [{"kind": "analytic"}, {"kind": "gevrey", "sigma": 2.0},
                                  {"kind": "alpha_beta", "alpha": 1.0, "beta": 2.0}])
def test_monotonicity_of_w_and_k(spec):
    M = make_sequence(spec, 4096)
    xs = np.logspace(-6, 0.5, 400)
    lw, k = log_weight(M, xs)
    assert np.all(np.diff(lw) >= -1e-12)
    assert np.all(np.diff(k) <= 0)


@pytest.mark.parametrize("a", [1, 2, 5])
def test_vanishing_at_all_orders(a):
    M = make_sequence({"kind": "analytic"}, 4096)
    xs = 10.0 ** -np.arange(1, 7)
    lw, _ = log_weight(M, xs)
    v = lw + a * np.log(1 / xs)
    assert np.all(np.diff(v) < 0)


# -- decay ratio, gentil, polynomial ratio ---------------------------------

def test_decay_ratio_analytic():
    M = make_sequence({"kind": "analytic"})
    r = decay_ratio(M, 0.5, 0.1)
    assert r <= 0.5**10 + 1e-12
    lw1, _ = brute_weight(M.log_values, 0.05)
    lw2, _ = brute_weight(M.log_values, 0.1)
    assert r == pytest.approx(math.exp(lw1 - lw2), rel=1e-10)


def test_decay_ratio_continuity():
    M = make_sequence({"kind": "gevrey", "sigma": 2.0})
    assert decay_ratio(M, 1 - 1e-9, 0.1) == pytest.approx(1.0, abs=1e-6)


def test_decay_ratio_gevrey_improves():
    M = make_sequence({"kind": "gevrey", "sigma": 2.0})
    assert decay_ratio(M, 0.5, 0.01) < decay_ratio(M, 0.5, 0.1)


def test_decay_ratio_saturation():
    M = make_sequence({"kind": "analytic"}, 8)
    with pytest.raises(SaturationError, match="increase k_max"):
        decay_ratio(M, 0.5, 1e-3)


@given(st.floats(0.05, 0.95), st.floats(-3, 0), st.sampled_from([
    {"kind": "analytic"}, {"kind": "gevrey", "sigma": 3.0}, {"kind": "alpha_beta", "alpha": 0.5, "beta": 1.5}]))
def test_decay_ratio_bound(mu, log10x, spec):
    M = make_sequence(spec, 40_000)
    x = 10.0**log10x
    k = weight_w(M, x).k_of_x
    assert decay_ratio(M, mu, x) <= mu**k + 1e-12


def test_gentil_analytic():
    g = check_gentil(make_sequence({"kind": "analytic"}), 2.0)
    assert g.C == pytest.approx(1.0)
    assert g.argmax in (0, 1) and g.conclusive


def test_gentil_gevrey_finite():
    for gamma in (1.05, 1.5, 3.0):
        g = check_gentil(make_sequence({"kind": "gevrey", "sigma": 3.0}, 2000), gamma)
        assert g.conclusive and math.isfinite(g.C)


def test_gentil_alpha_beta_below_threshold():
    M = make_sequence({"kind": "alpha_beta", "alpha": 1.0, "beta": 2.0})
    assert check_gentil(M, 0.9 * math.e).trend == "increasing"
    assert check_gentil(M, 1.1 * math.e).conclusive


def test_poly_ratio_exponent():
    M = make_sequence({"kind": "analytic"})
    assert poly_ratio_exponent(M, 2.0, 0.5) == pytest.approx(1.0)
    assert poly_ratio_exponent(M, 4.0, 0.5) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        poly_ratio_exponent(make_sequence({"kind": "alpha_beta", "alpha": 1.0, "beta": 2.0}), 2.0, 0.5)


@pytest.mark.parametrize("spec, gamma", [({"kind": "analytic"}, 2.0), ({"kind": "gevrey", "sigma": 2.0}, 1.5),
                                         ({"kind": "alpha_beta", "alpha": 0.5, "beta": 2.0}, 2.0)])
def test_poly_ratio_fit(spec, gamma):
    # the analytic minimiser at x = 5e-7 sits near k = 2e6
    M = make_sequence(spec, 2_100_000 if spec["kind"] == "analytic" else 4096)
    coarse = fit_poly_ratio_constant(M, gamma, 0.5)
    assert math.isfinite(coarse.C_prime) and coarse.violations == 0
    xs = np.logspace(-6, 0, 2000)
    fit = fit_poly_ratio_constant(M, gamma, 0.5, xs)
    assert fit.violations == 0 and fit.n_saturated == 0
    # independent weights on the same grid
    sub = xs[::40]
    lw_mu = np.array([brute_weight(M.log_values, 0.5 * x)[0] for x in sub])
    lw = np.array([brute_weight(M.log_values, x)[0] for x in sub])
    assert np.all(lw_mu - lw <= math.log(fit.C_prime) + fit.delta * np.log(sub) + 1e-9)
    # the coarse grid already resolves the constant
    assert coarse.C_prime == pytest.approx(fit.C_prime, rel=0.2)


# -- majorant -------------------------------------------------------------

def _check_majorant(A, C, B):
    lb = B.log_values
    assert lb[0] == 0
    assert np.all(np.diff(lb) >= -1e-12)
    assert np.all(2 * lb[1:-1] <= lb[:-2] + lb[2:] + 1e-9)
    A = np.asarray(A, dtype=float)
    assert np.all(A <= C * B.values[: A.size] * (1 + 1e-9))


def test_majorant_constant():
    C, B = log_convex_majorant([1, 1, 1])
    assert C == pytest.approx(1.0)
    np.testing.assert_allclose(B.values, [1, 1, 1])


def test_majorant_examples():
    for A in ([1, 5, 2, 10], [0, 0, 7]):
        C, B = log_convex_majorant(A)
        _check_majorant(A, C, B)


def test_majorant_all_zero():
    C, B = log_convex_majorant([0, 0, 0])
    assert C == 0 and np.all(B.values == 1)


@given(st.lists(st.one_of(st.just(0.0), st.floats(1e-6, 1e6)), min_size=1, max_size=20))
def test_majorant_random(A):
    C, B = log_convex_majorant(A)
    _check_majorant(A, C, B)


def test_majorant_thousand_sequences(rng):
    for _ in range(1000):
        n = int(rng.integers(1, 21))
        A = np.where(rng.random(n) < 0.2, 0.0, np.exp(rng.normal(0, 4, n)))
        C, B = log_convex_majorant(A)
        _check_majorant(A, C, B)


# -- class constants --------------------------------------------------------

def test_constants_single_mode():
    M = make_sequence({"kind": "analytic"})
    cc = estimate_class_constants({1: 1.0}, M, 20)
    np.testing.assert_allclose(cc.log_sup_bounds, np.arange(21) * math.log(2 * math.pi), rtol=1e-12)
    assert np.all(cc.slack >= -1e-9)


def test_constants_constant_function():
    cc = estimate_class_constants({0: 1.0}, make_sequence({"kind": "analytic"}), 10)
    assert cc.C == pytest.approx(1.0) and cc.R == 0.0


def test_constants_geometric_coefficients():
    M = make_sequence({"kind": "analytic"})
    f_hat = {n: 2.0 ** -abs(n) for n in range(-150, 151)}
    cc = estimate_class_constants(f_hat, M, 12)
    # closed form of sum_n (2 pi |n|)^k 2^-|n| through the polylog Li_{-k}(1/2)
    from mpmath import polylog
    exact = [math.log(2 * float(polylog(-k, 0.5)) * (2 * math.pi) ** k) if k else math.log(3.0)
             for k in range(13)]
    np.testing.assert_allclose(cc.log_sup_bounds, exact, rtol=1e-10)
    assert math.isfinite(cc.C) and math.isfinite(cc.R)
    assert np.all(cc.slack >= -1e-9)


def test_constants_divergent():
    M = make_sequence({"kind": "analytic"})
    with pytest.raises(ValueError, match="k="):
        estimate_class_constants({n: 1.0 / (1 + n * n) for n in range(0, 30)}, M, 8)


def test_weight_csv(tmp_path):
    M = make_sequence({"kind": "analytic"})
    p = tmp_path / "w.csv"
    write_weight_csv(p, weight_table(M, [1.0, 0.1]))
    lines = p.read_text().splitlines()
    assert lines[0] == "x,w,k_of_x,saturated"
    assert lines[2].split(",")[2] == "10"

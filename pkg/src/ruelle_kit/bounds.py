"""Explicit bound functions for the determinant and the spectrum.

``g`` and ``f`` are built from the class weight ``w``; ``G`` and ``F`` are
the generating series/product that control ``||L_b^n||`` and the growth of
``d(z)``.  Everything "up to a constant" is exposed through fitted constants
and violation counts.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .aniso_space import sv_envelope
from .dc_class import MSequence, SaturationError, check_gentil, log_weight, make_sequence

M_CAP = 400
TERM_CAP = 100_000
_CHUNK = 256


@dataclass(frozen=True, eq=False)
class BoundProfile:
    M: MSequence
    theta: float
    lam: float
    R: float
    R_prime: float | None = None
    m_cap: int = M_CAP
    _log_ratio: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if not 1 < self.theta:
            raise ValueError("theta must exceed 1")
        if self.R_prime is None:
            object.__setattr__(self, "R_prime", self.R / self.theta ** 2)

    @property
    def alpha_exp(self) -> float:
        return math.log(self.lam) / math.log(self.theta)

    def as_dict(self) -> dict:
        return {"theta": self.theta, "lambda": self.lam, "R": self.R, "R_prime": self.R_prime,
                "alpha_exp": self.alpha_exp, "class": self.M.describe()}


def _log_weight_checked(M: MSequence, x) -> np.ndarray:
    lw, k = log_weight(M, x)
    if np.any(k >= M.k_max):
        raise SaturationError("weight saturated; increase k_max")
    return lw


def log_g_ratio(P: BoundProfile, m) -> np.ndarray:
    """``log(w(R/theta^m) / w(R/theta^(m-1)))`` for ``m >= 1``."""
    m = np.asarray(m, dtype=float)
    lw = _log_weight_checked(P.M, P.R / P.theta ** np.concatenate([m - 1, m]))
    n = m.size
    return lw[n:] - lw[:n]


def _ratio_table(P: BoundProfile, upto: int) -> list:
    tab = P._log_ratio
    if len(tab) <= upto:
        m = np.arange(len(tab) + 1, upto + 2)
        tab.extend(log_g_ratio(P, m).tolist())
    return tab  # tab[i] is the ratio at m = i + 1


def log_g(P: BoundProfile, N: int) -> float:
    """``log g(N)`` with ``g(N) = sup_{m > N} w(R/theta^m)/w(R/theta^(m-1))``.

    The sup is cut once three successive decreases are seen after the
    running maximum.
    """
    if N < 0:
        raise ValueError("N must be nonnegative")
    best = -math.inf
    streak = 0
    prev = None
    for m in range(N + 1, P.m_cap + 1):
        v = _ratio_table(P, m)[m - 1]
        if v > best:
            best = v
        streak = streak + 1 if prev is not None and v < prev else 0
        prev = v
        if streak >= 3 and v < best:
            return best
    raise ValueError(f"g({N}) not certified by m_cap={P.m_cap}")


def g_func(P: BoundProfile, N: int) -> float:
    return math.exp(log_g(P, N))


def log_f(P: BoundProfile, x) -> np.ndarray:
    """``log f(x) = alpha log x + log w(R'/x)``."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("x must be positive")
    return P.alpha_exp * np.log(x) + _log_weight_checked(P.M, P.R_prime / x)


def f_func(P: BoundProfile, x: float) -> float:
    return float(np.exp(log_f(P, x)))


def log_F_sequence(log_fm, log_r: float) -> float:
    """``log prod (1 + f_m r)`` for an explicit finite ``f`` sequence."""
    if log_r == -math.inf:
        return 0.0
    return float(np.sum(np.log1p(np.exp(np.asarray(log_fm, dtype=float) + log_r))))


def log_F(P: BoundProfile, log_r: float, tol: float = 1e-14) -> float:
    """``log F(r)``, ``F(r) = prod_{m >= 0} (1 + f(m) r)``; ``f(0) = 0``."""
    if log_r == -math.inf:
        return 0.0
    total = 0.0
    start = 1
    prev_lf = math.inf
    while start < TERM_CAP:
        m = np.arange(start, start + _CHUNK, dtype=float)
        lf = log_f(P, m)
        inc = np.log1p(np.exp(lf + log_r))
        dec = np.diff(np.concatenate([[prev_lf], lf])) < 0
        done = (inc < tol) & dec
        if done.any():
            i = int(np.argmax(done))
            return float(total + np.sum(inc[: i + 1]))
        total += float(np.sum(inc))
        prev_lf = lf[-1]
        start += _CHUNK
    raise ValueError("F did not converge within the term cap")


def F_eval(P: BoundProfile, r: float) -> float:
    if r < 0:
        raise ValueError("r must be nonnegative")
    return math.exp(log_F(P, math.log(r) if r > 0 else -math.inf))


def log_G(P: BoundProfile, r: float, tol: float = 1e-14) -> float:
    """``log G(r)``, ``G(r) = sum_n (prod_{k<n} g(k)) r^n``."""
    if r < 0:
        raise ValueError("r must be nonnegative")
    if r == 0:
        return 0.0
    lr = math.log(r)
    total = 0.0  # log of the partial sum, starting from the n = 0 term
    term = 0.0
    for n in range(1, TERM_CAP):
        step = log_g(P, n - 1) + lr
        term += step
        total = float(np.logaddexp(total, term))
        if step < 0 and term - total < math.log(tol):
            return total
    raise ValueError("G terms not observed decreasing by the term cap")


def G_eval(P: BoundProfile, r: float) -> float:
    return math.exp(log_G(P, r))


def log_growth_bound(P: BoundProfile, z_abs: float, C: float) -> float:
    """``log F(C |z| G(C |z|))``."""
    if z_abs < 0:
        raise ValueError("z_abs must be nonnegative")
    if z_abs == 0:
        return 0.0
    u = C * z_abs
    return log_F(P, math.log(u) + log_G(P, u))


def growth_bound(P: BoundProfile, z_abs: float, C: float) -> float:
    v = log_growth_bound(P, z_abs, C)
    return math.exp(v) if v < 709 else math.inf


@dataclass(frozen=True)
class CountingBound:
    value: float
    error_estimate: float
    n_terms: int


def counting_bound(P: BoundProfile, r: float, tol: float = 1e-12) -> CountingBound:
    """``int_0^r n(s)/s ds + r int_r^inf n(s)/s^2 ds`` with
    ``n(s) = #{m >= 1 : 1/f(m) <= s}``.

    The integrand is a step function, so both integrals are summed exactly
    per step: each ``m`` contributes ``log(r f(m)) + 1`` when
    ``r f(m) >= 1`` and ``r f(m)`` otherwise.  Only the tail of the sum
    over ``m`` is truncated; its size is bounded geometrically.
    """
    if r <= 0:
        raise ValueError("r must be positive")
    lr = math.log(r)
    total = 0.0
    start = 1
    prev_lf = math.inf
    while start < TERM_CAP:
        m = np.arange(start, start + _CHUNK, dtype=float)
        lf = log_f(P, m)
        u = lf + lr
        contrib = np.where(u >= 0, u + 1.0, np.exp(np.minimum(u, 0.0)))
        dec = np.diff(np.concatenate([[prev_lf], lf])) < 0
        for i in range(m.size):
            total += contrib[i]
            if u[i] < 0 and dec[i] and contrib[i] < tol * max(total, 1e-300):
                q = math.exp(lf[i] - (lf[i - 1] if i else prev_lf))
                err = contrib[i] * q / (1 - q) if q < 1 else math.inf
                return CountingBound(float(total), float(err), int(m[i]))
            if u[i] < 0 and dec[i] and total == 0.0 and contrib[i] < 1e-300:
                return CountingBound(0.0, 0.0, int(m[i]))
        prev_lf = lf[-1]
        start += _CHUNK
    raise ValueError("counting integral did not converge within the term cap")


def order_bound(M: MSequence, gamma: float, lam: float) -> float:
    """``log gamma / log lambda`` once the gentil condition is certified."""
    if lam <= 1:
        raise ValueError("lambda must exceed 1")
    if not check_gentil(M, gamma).conclusive:
        raise ValueError(f"gentil condition inconclusive for gamma={gamma}")
    return math.log(gamma) / math.log(lam)


ENVELOPES = ("gevrey_sv", "ab_k_lower", "ab_det_growth")


def class_envelopes(kind: str, params: dict, x, c: float):
    """Named class envelopes.

    ``gevrey_sv``: ``c exp(-m^(1/sigma) / c)``;
    ``ab_k_lower``: ``|ln x|^(1/(beta-1)) / c - c``;
    ``ab_det_growth``: ``c exp(c (log+ |z|)^(beta-1))``.
    """
    x = np.asarray(x, dtype=float)
    if kind == "gevrey_sv":
        return c * np.exp(-x ** (1.0 / params["sigma"]) / c)
    if kind not in ENVELOPES:
        raise ValueError(f"unknown envelope {kind!r}")
    beta = params["beta"]
    if beta == 1:
        raise ValueError("beta = 1 is the analytic case; use gevrey_sv with sigma = 1")
    if kind == "ab_k_lower":
        return np.abs(np.log(x)) ** (1.0 / (beta - 1)) / c - c
    return c * np.exp(c * np.maximum(np.log(x), 0.0) ** (beta - 1))


@dataclass(frozen=True)
class EnvelopeFit:
    kind: str
    c: float
    violations: int
    slack: np.ndarray = field(repr=False)


def fit_envelope(kind: str, params: dict, xs, measured, c_lo: float = 1e-3,
                 c_hi: float = 1e6) -> EnvelopeFit:
    """Smallest ``c`` for which the envelope bounds ``measured`` (from above
    for ``gevrey_sv``/``ab_det_growth``, from below for ``ab_k_lower``).

    Each envelope is monotone in ``c``, so ``c`` is found by bisection in
    ``log c``.
    """
    xs = np.asarray(xs, dtype=float)
    y = np.asarray(measured, dtype=float)
    lower = kind == "ab_k_lower"

    def ok(c):
        e = class_envelopes(kind, params, xs, c)
        return bool(np.all(y >= e)) if lower else bool(np.all(e >= y))

    if not ok(c_hi):
        raise ValueError(f"no c <= {c_hi:g} makes the {kind} envelope hold")
    lo, hi = math.log(c_lo), math.log(c_hi)
    if ok(c_lo):
        hi = lo
    for _ in range(100):
        if hi - lo < 1e-12:
            break
        mid = 0.5 * (lo + hi)
        if ok(math.exp(mid)):
            hi = mid
        else:
            lo = mid
    c = math.exp(hi)
    e = class_envelopes(kind, params, xs, c)
    slack = (y - e) if lower else (e - y)
    return EnvelopeFit(kind, c, int(np.sum(slack < 0)), slack)


def log_genus_zero_bound(M: MSequence, theta: float, z_abs: float, C: float, A: float,
                         tol: float = 1e-16, k_cap: int = 100_000) -> float:
    """``log[(1 + C|z|) prod_{k>=1} (1 + C|z| S(k))]`` with
    ``S(k) = sup_{x <= 1/k} w(Ax)/w(theta A x)``."""
    u = C * z_abs
    total = math.log1p(u)
    start = 1
    prev = math.inf
    while start < k_cap:
        ks = np.arange(start, start + _CHUNK)
        S = sv_envelope(M, theta, A, ks)
        if np.any(np.isnan(S)):
            raise SaturationError("sv envelope saturated; increase k_max")
        t = u * S
        dec = np.diff(np.concatenate([[prev], S])) <= 0
        done = (t < tol) & dec
        if done.any():
            i = int(np.argmax(done))
            return float(total + np.sum(np.log1p(t[: i + 1])))
        total += float(np.sum(np.log1p(t)))
        prev = S[-1]
        start += _CHUNK
    raise ValueError("genus-zero product did not converge by k_cap")


def fit_growth_constant(P: BoundProfile, zs, d_abs, C_grid=None) -> tuple[float, int]:
    """Smallest grid ``C`` with ``growth_bound(|z|) >= |d(z)|`` at every
    sample; returns ``(C, violations)``."""
    C_grid = np.logspace(0, 3, 32) if C_grid is None else np.asarray(C_grid)
    zs = np.asarray(zs, dtype=float)
    ld = np.log(np.maximum(np.asarray(d_abs, dtype=float), 1e-300))
    for C in C_grid:
        lb = np.array([log_growth_bound(P, z, C) for z in zs])
        if np.all(lb >= ld):
            return float(C), 0
    C = float(C_grid[-1])
    lb = np.array([log_growth_bound(P, z, C) for z in zs])
    return C, int(np.sum(lb < ld))


def fit_nilpotent_constant(norms, log_g_vals) -> tuple[float, int]:
    """Fit ``||B^n|| <= C^n prod_{k<n} g(k)``: ``C`` is the smallest value
    that works for every ``n`` with a nonzero norm."""
    norms = np.asarray(norms, dtype=float)
    cum = np.cumsum(np.asarray(log_g_vals, dtype=float)[: norms.size])
    n = np.arange(1, norms.size + 1)
    nz = norms > 0
    if not nz.any():
        return 0.0, 0
    C = float(np.max(np.exp((np.log(norms[nz]) - cum[nz]) / n[nz])))
    bound = np.exp(n * math.log(C) + cum) if C > 0 else np.zeros_like(norms)
    return C, int(np.sum(norms > bound * (1 + 1e-10)))


def beta_threshold_report(alpha: float, lam: float, betas=(1.5, 2.0, 2.5), k_max: int = 256,
                          gammas=None) -> list[dict]:
    """Order bounds for ``alpha_beta`` classes at several ``beta``: the
    smallest grid ``gamma`` with a conclusive gentil check, if any."""
    gammas = np.exp(np.linspace(0.01, 6.0, 600)) if gammas is None else np.asarray(gammas)
    out = []
    for beta in betas:
        M = make_sequence({"kind": "alpha_beta", "alpha": alpha, "beta": beta}, k_max)
        row = {"beta": float(beta), "gamma": None, "order_bound": None}
        for g in gammas:
            if check_gentil(M, g).conclusive:
                row["gamma"] = float(g)
                row["order_bound"] = order_bound(M, g, lam)
                break
        out.append(row)
    return out


def write_gnuplot(path, data_csv: str, title: str, xlabel: str, ylabel: str,
                  logx: bool = False, logy: bool = True) -> None:
    """Gnuplot script plotting columns 2 (measured) and 3 (envelope) of a CSV."""
    lines = ["set datafile separator ','", f"set title '{title}'",
             f"set xlabel '{xlabel}'", f"set ylabel '{ylabel}'"]
    if logx:
        lines.append("set logscale x")
    if logy:
        lines.append("set logscale y")
    lines.append(f"plot '{data_csv}' using 1:2 every ::1 with points title 'measured', "
                 f"'' using 1:3 every ::1 with lines title 'envelope'")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_bounds_json(path, entries: list[dict]) -> None:
    with open(path, "w") as fh:
        json.dump(entries, fh, indent=2)

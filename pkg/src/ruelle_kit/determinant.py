"""Dynamical determinant by three routes and the resonances it encodes.

* orbit: ``exp(-sum t_n z^n / n)`` from flat traces,
* eigen: (regularised) Fredholm product over eigenvalues of a truncation,
* npd: ``det(I - z (I - zB)^-1 A)`` for the block split ``H = A + B``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .aniso_space import build_scaling, h_matrix
from .circle_map import CircleMap, TrigPoly
from .dc_class import MSequence
from .transfer_op import assemble_matrix

ROUTES = ("orbit", "eigen", "npd")


@dataclass(frozen=True)
class DeterminantSeries:
    coeffs: np.ndarray = field(repr=False)
    route: str = "orbit"
    n_traces: int = 0
    map_id: str = ""

    def __post_init__(self):
        if self.route not in ROUTES:
            raise ValueError(f"unknown route {self.route!r}")

    @property
    def order(self) -> int:
        return self.coeffs.size - 1

    def __call__(self, z):
        # numpy polyval wants the leading coefficient first
        return np.polyval(self.coeffs[::-1], z)

    def as_dict(self) -> dict:
        return {"route": self.route, "n_traces": self.n_traces, "map_id": self.map_id,
                "coeffs": [[float(c.real), float(c.imag)] for c in self.coeffs]}


def series_exp(b) -> np.ndarray:
    """Coefficients of ``exp(B(z))`` for a series with ``B(0) = 0``.

    Uses ``n a_n = sum_{k=1}^{n} k b_k a_{n-k}``.
    """
    b = np.asarray(b, dtype=complex)
    N = b.size - 1
    a = np.zeros(N + 1, dtype=complex)
    a[0] = 1.0
    kb = np.arange(N + 1) * b
    for n in range(1, N + 1):
        a[n] = np.dot(kb[1:n + 1], a[n - 1::-1]) / n
    return a


def det_series_from_traces(traces, map_id: str = "") -> DeterminantSeries:
    """Taylor coefficients of ``exp(-sum_{n>=1} t_n z^n / n)`` through order ``len(traces)``."""
    t = np.asarray(traces, dtype=complex)
    if t.size < 1:
        raise ValueError("need at least one trace")
    n = np.arange(1, t.size + 1)
    b = np.concatenate([[0.0], -t / n])
    return DeterminantSeries(series_exp(b), "orbit", int(t.size), map_id)


def poly_from_roots(eigs, N: int) -> np.ndarray:
    """Coefficients of ``prod_j (1 - z lambda_j)`` through order ``N``."""
    c = np.zeros(N + 1, dtype=complex)
    c[0] = 1.0
    for lam in np.asarray(eigs, dtype=complex):
        c[1:] = c[1:] - lam * c[:-1]
    return c


def det_from_eigenvalues(eigs, order_m: int, N: int, traces=None, map_id: str = "") -> DeterminantSeries:
    """``det_m(I - zL) exp(-sum_{n<m} t_n z^n / n)`` from eigenvalues.

    ``det_m`` is the product of Weierstrass factors
    ``(1 - z lam) exp(sum_{r<m} (z lam)^r / r)``.
    """
    if order_m < 1:
        raise ValueError("order_m must be at least 1")
    eigs = np.asarray(eigs, dtype=complex)
    c = poly_from_roots(eigs, N)
    if order_m > 1:
        if traces is None or len(traces) < order_m - 1:
            raise ValueError(f"order_m = {order_m} needs flat traces t_1..t_{order_m - 1}")
        b = np.zeros(N + 1, dtype=complex)
        for r in range(1, min(order_m, N + 1)):
            # Weierstrass exponent minus the trace prefactor
            b[r] = (np.sum(eigs ** r) - traces[r - 1]) / r
        c = np.convolve(c, series_exp(b))[:N + 1]
    return DeterminantSeries(c, "eigen", 0 if order_m == 1 else order_m - 1, map_id)


def neumann_inverse(B: np.ndarray, z: complex) -> tuple[np.ndarray, int]:
    """``(I - zB)^-1`` as the finite sum of ``(zB)^j`` for nilpotent ``B``."""
    n = B.shape[0]
    S = np.eye(n, dtype=complex)
    P = np.eye(n, dtype=complex)
    zB = z * B
    for j in range(1, n + 1):
        P = P @ zB
        if not np.any(P):
            return S, j
        S = S + P
    raise ValueError("B is not nilpotent on this truncation")


def npd_determinant(A: np.ndarray, B: np.ndarray, z: complex) -> complex:
    """``det(I - z (I - zB)^-1 A)``."""
    A = np.asarray(A)
    B = np.asarray(B)
    if A.shape != B.shape:
        raise ValueError("A and B must have the same shape")
    if z == 0:
        return 1.0 + 0j
    S, _ = neumann_inverse(B, z)
    return complex(np.linalg.det(np.eye(A.shape[0]) - z * (S @ A)))


def nilpotency_index(B: np.ndarray) -> int:
    return neumann_inverse(B, 1.0)[1]


@dataclass(frozen=True)
class ResonanceSet:
    values: np.ndarray
    stability: np.ndarray
    K_list: tuple
    R: float
    spectra: dict = field(repr=False, default_factory=dict)

    def as_dict(self) -> dict:
        return {"values": [[float(v.real), float(v.imag)] for v in self.values],
                "stability": [float(s) for s in self.stability],
                "K_list": list(self.K_list), "R": self.R}


def match_spectra(big, small) -> tuple[np.ndarray, np.ndarray]:
    """Greedy modulus-ordered nearest-neighbour pairing; returns the
    partners in ``small`` and relative drifts for each value of ``big``."""
    big = np.asarray(big, dtype=complex)
    small = np.asarray(small, dtype=complex)
    used = np.zeros(small.size, dtype=bool)
    partner = np.full(big.size, np.nan + 0j)
    drift = np.full(big.size, np.inf)
    for i in np.argsort(-np.abs(big), kind="stable"):
        d = np.abs(small - big[i])
        d[used] = np.inf
        if not np.isfinite(d).any():
            break
        j = int(np.argmin(d))
        used[j] = True
        partner[i] = small[j]
        drift[i] = d[j] / max(abs(small[j]), 1e-300)
    return partner, drift


def h_spectrum(T: CircleMap, psi: TrigPoly | None, M: MSequence, theta: float, K: int, R: float,
               quad_size: int | None = None, matrix=None):
    Mx = assemble_matrix(T, psi, K, quad_size) if matrix is None else matrix
    S = build_scaling(T.lam, M, theta, K, R)
    H = h_matrix(Mx, S)
    return np.linalg.eigvals(H.entries), H


def resonances(T: CircleMap, psi: TrigPoly | None, M: MSequence, theta: float, K_list,
               R: float | None = None, drift_tol: float = 1e-6, drop: float = 1e-10,
               quad_check: bool = True) -> ResonanceSet:
    """Eigenvalues of the H-matrix that are stable across ``K_list``.

    Values below ``drop`` times the spectral radius are discarded, so the
    selection commutes with scaling the weight.  With ``quad_check`` the
    largest truncation is also rebuilt on a doubled quadrature grid and a
    value must survive that too: every size shares the same quadrature
    roundoff, which K-drift alone cannot see.  ``R`` defaults to the
    calibration at the largest ``K`` and is shared by all sizes.
    """
    K_list = tuple(int(k) for k in K_list)
    if len(K_list) < 2 or list(K_list) != sorted(set(K_list)):
        raise ValueError("K_list must be strictly ascending with at least 2 entries")
    K_top = K_list[-1]
    Mx = assemble_matrix(T, psi, K_top)
    if R is None:
        R = build_scaling(T.lam, M, theta, K_top, None, Mx).R
    spectra = {K: h_spectrum(T, psi, M, theta, K, R, matrix=Mx if K == K_top else None)[0]
               for K in K_list}
    top = spectra[K_top]
    keep = np.abs(top) > drop * np.max(np.abs(top))
    vals = top.copy()
    drift = np.zeros(top.size)
    for K_big, K_small in zip(K_list[::-1], K_list[-2::-1]):
        partner, d = match_spectra(vals, spectra[K_small])
        if K_big == K_top:
            drift = d
        keep &= d < drift_tol
        vals = np.where(keep, partner, vals)
    if quad_check:
        fine = h_spectrum(T, psi, M, theta, K_top, R, 2 * Mx.quad_size)[0]
        _, dq = match_spectra(top, fine)
        keep &= dq < drift_tol
        drift = np.maximum(drift, dq)
    vals = top[keep]
    drift = drift[keep]
    if vals.size == 0:
        raise ValueError("no converged resonances")
    order = np.argsort(-np.abs(vals), kind="stable")
    if psi is None or psi.is_real():
        # conjugate pairs; clear roundoff imaginary parts of real values
        vals = np.where(np.abs(vals.imag) < 1e-13 * np.abs(vals), vals.real + 0j, vals)
    return ResonanceSet(vals[order], drift[order], K_list, float(R), spectra)


@dataclass(frozen=True)
class Zero:
    value: complex
    residual: float
    reliable: bool


NOISE_FLOOR = 64 * np.finfo(float).eps


def trim_noise(coeffs) -> np.ndarray:
    """Drop trailing coefficients at the roundoff level of the largest one."""
    c = np.asarray(coeffs, dtype=complex)
    big = np.flatnonzero(np.abs(c) > NOISE_FLOOR * np.max(np.abs(c)))
    return c[: big[-1] + 1]


def reliability_radius(coeffs, rtol: float = 1e-10) -> float:
    """Largest ``r`` with ``|a_N| r^N < rtol max_j |a_j| r^j`` (``inf`` when
    ``a_N = 0``, e.g. for the exact series ``1 - z``)."""
    a = np.abs(np.asarray(coeffs))
    N = a.size - 1
    if N < 1 or a[N] == 0:
        return math.inf

    def ok(r):
        return a[N] * r ** N < rtol * np.max(a * r ** np.arange(N + 1))
    lo, hi = 0.0, 1.0
    if not ok(1e-300 ** (1 / max(N, 1))):
        return 0.0
    while ok(hi):
        lo, hi = hi, hi * 2
        if hi > 1e150:
            return math.inf
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def zeros_of_d(S: DeterminantSeries, radius: float, residual_tol: float = 1e-8) -> list[Zero]:
    """Zeros of the truncated series inside ``|z| < radius``.

    Trailing roundoff-level coefficients are trimmed before root finding so
    they cannot produce spurious roots.  A root is kept when the series
    without its last coefficient is still below ``residual_tol`` there,
    i.e. when one more order would not move it.
    """
    rel = reliability_radius(S.coeffs)
    c = trim_noise(S.coeffs)
    if c.size < 2:
        return []
    ref = S.coeffs[:-1] if S.coeffs.size > 2 else S.coeffs
    roots = np.polynomial.polynomial.polyroots(c)
    out = []
    reliable = radius <= rel
    for z in roots:
        if abs(z) >= radius:
            continue
        res = abs(np.polynomial.polynomial.polyval(z, ref))
        if res < residual_tol:
            if not reliable:
                warnings.warn(f"radius {radius:.4g} beyond reliability estimate {rel:.4g}")
            out.append(Zero(complex(z), float(res), reliable))
    out.sort(key=lambda q: abs(q.value))
    return out


def max_coeff_diff(a: DeterminantSeries, b: DeterminantSeries, order: int) -> float:
    return float(np.max(np.abs(a.coeffs[: order + 1] - b.coeffs[: order + 1])))


def zero_resonance_mismatch(zeros, res: ResonanceSet) -> float:
    """Largest ``|1/z - lambda|`` over zeros, pairing each with its nearest resonance."""
    if not zeros:
        return 0.0
    inv = np.array([1 / q.value for q in zeros])
    return float(max(np.min(np.abs(res.values - v)) for v in inv))


def missing_zeros(zeros, res: ResonanceSet, radius: float, tol: float = 1e-6) -> int:
    """Resonances with ``|1/lambda|`` inside ``radius`` that no zero accounts for."""
    inv = np.array([1 / q.value for q in zeros])
    missing = 0
    for lam in res.values:
        if lam == 0 or 1 / abs(lam) >= radius * (1 - 1e-9):
            continue
        if inv.size == 0 or np.min(np.abs(inv - lam)) > tol:
            missing += 1
    return missing


def write_report(path, route: str, series: DeterminantSeries, zeros, res: ResonanceSet | None,
                 agreements: dict, extra: dict | None = None) -> dict:
    rep = {"route": route, "coeffs": series.as_dict()["coeffs"],
           "zeros": [[z.value.real, z.value.imag] for z in zeros],
           "resonances": res.as_dict()["values"] if res is not None else [],
           "agreements": agreements}
    if extra:
        rep.update(extra)
    if path is not None:
        with open(path, "w") as fh:
            json.dump(rep, fh, indent=2)
    return rep

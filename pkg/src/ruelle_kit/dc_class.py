"""Denjoy-Carleman class data.

An M-sequence ``(M_k)`` with ``M_0 = 1``, non-decreasing and log-convex,
defines the class of smooth functions with ``|f^(k)| <= C R^k k! M_k``.
The associated weight

    w(x) = inf_k x^k k! M_k

controls every decay estimate in the package.  All arithmetic is done on
``log M_k`` since ``k!`` alone overflows past ``k = 170``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

KINDS = ("analytic", "gevrey", "alpha_beta", "custom")
DEFAULT_K_MAX = 256
TIE_RTOL = 1e-12
_LOG_RTOL = 1e-12


class SaturationError(ValueError):
    """Raised when a weight minimiser hits ``k_max`` where exactness matters."""


@dataclass(frozen=True)
class ClassSpec:
    """Parsed class description, e.g. ``{"kind": "gevrey", "sigma": 2.0}``."""

    kind: str
    k_max: int = DEFAULT_K_MAX
    sigma: float | None = None
    alpha: float | None = None
    beta: float | None = None
    values: tuple[float, ...] | None = None

    @classmethod
    def from_dict(cls, d: Mapping) -> "ClassSpec":
        d = dict(d)
        kind = d.pop("kind", None)
        if kind not in KINDS:
            raise ValueError(f"class kind must be one of {KINDS}, got {kind!r}")
        values = d.pop("values", None)
        known = {"k_max", "sigma", "alpha", "beta"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown class fields: {sorted(unknown)}")
        if values is not None:
            values = tuple(float(v) for v in values)
            d.setdefault("k_max", len(values) - 1)
        return cls(kind=kind, values=values, **d)

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind, "k_max": self.k_max}
        for name in ("sigma", "alpha", "beta"):
            if getattr(self, name) is not None:
                out[name] = getattr(self, name)
        if self.values is not None:
            out["values"] = list(self.values)
        return out


@dataclass(frozen=True, eq=False)
class MSequence:
    """Log-convex non-decreasing sequence with ``M_0 = 1``, stored as logs."""

    log_values: np.ndarray
    kind: str = "custom"
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        arr = np.array(self.log_values, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "log_values", arr)
        # increments of log(k! M_k); strictly increasing under the invariants
        inc = np.log(np.arange(1, arr.size)) + np.diff(arr)
        inc.setflags(write=False)
        object.__setattr__(self, "_log_fact_inc", inc)

    @property
    def k_max(self) -> int:
        return self.log_values.size - 1

    @property
    def values(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.log_values)

    def log_kfact_m(self, k) -> np.ndarray:
        """``log(k! M_k)``."""
        k = np.asarray(k)
        return gammaln(k + 1.0) + self.log_values[k]

    def describe(self) -> dict:
        return {"kind": self.kind, "k_max": self.k_max, **dict(self.params)}


def _validate_log_values(log_vals: np.ndarray) -> None:
    if abs(log_vals[0]) > _LOG_RTOL:
        raise ValueError("M_0 must equal 1 (offending index 0)")
    for k in range(1, log_vals.size):
        if log_vals[k] < log_vals[k - 1] - _LOG_RTOL:
            raise ValueError(f"sequence is not non-decreasing at index {k}")
    for k in range(1, log_vals.size - 1):
        scale = max(1.0, abs(log_vals[k]))
        if 2 * log_vals[k] > log_vals[k - 1] + log_vals[k + 1] + _LOG_RTOL * scale:
            raise ValueError(f"sequence is not log-convex at index {k}")


def make_sequence(spec: ClassSpec | Mapping, k_max: int | None = None) -> MSequence:
    """Build the M-sequence for a named family or a custom list.

    Parameters
    ----------
    spec : ClassSpec or mapping
        ``{"kind": "analytic"}``, ``{"kind": "gevrey", "sigma": s}``,
        ``{"kind": "alpha_beta", "alpha": a, "beta": b}`` or
        ``{"kind": "custom", "values": [...]}``.
    k_max : int, optional
        Overrides ``spec.k_max``.

    Custom lists are validated and never repaired; the first offending
    index is named in the error.
    """
    if not isinstance(spec, ClassSpec):
        spec = ClassSpec.from_dict(spec)
    if spec.kind == "custom":
        if spec.values is None:
            raise ValueError("custom class needs 'values'")
        vals = np.asarray(spec.values, dtype=float)
        if k_max is not None and k_max != vals.size - 1:
            raise ValueError("k_max does not match the length of the custom list")
        k_max = vals.size - 1
    else:
        k_max = spec.k_max if k_max is None else k_max
    if k_max < 2:
        raise ValueError("k_max must be at least 2")
    k = np.arange(k_max + 1, dtype=float)

    if spec.kind == "analytic":
        return MSequence(np.zeros(k_max + 1), "analytic", {})
    if spec.kind == "gevrey":
        sigma = spec.sigma
        if sigma is None or sigma < 1:
            raise ValueError("gevrey class needs sigma >= 1")
        return MSequence((sigma - 1.0) * gammaln(k + 1.0), "gevrey", {"sigma": sigma})
    if spec.kind == "alpha_beta":
        a, b = spec.alpha, spec.beta
        if a is None or a <= 0 or b is None or b < 1:
            raise ValueError("alpha_beta class needs alpha > 0 and beta >= 1")
        return MSequence(a * k**b / b, "alpha_beta", {"alpha": a, "beta": b})

    if np.any(vals <= 0) or not np.all(np.isfinite(vals)):
        bad = int(np.flatnonzero(~(vals > 0) | ~np.isfinite(vals))[0])
        raise ValueError(f"custom values must be positive and finite (offending index {bad})")
    log_vals = np.log(vals)
    _validate_log_values(log_vals)
    return MSequence(log_vals, "custom", {})


@dataclass(frozen=True)
class WeightEval:
    x: float
    log_w: float
    k_of_x: int
    saturated: bool

    @property
    def w(self) -> float:
        return math.exp(self.log_w)


def log_weight(M: MSequence, x) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised ``(log w(x), k(x))``.

    The terms ``k log x + log(k! M_k)`` are convex in ``k``, so the largest
    minimiser is the number of increments not exceeding ``-log x`` (ties
    within ``TIE_RTOL`` count as not exceeding).
    """
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("weight argument must be positive")
    t = np.log(x)
    k = np.searchsorted(M._log_fact_inc, -t + TIE_RTOL, side="right")
    return k * t + M.log_kfact_m(k), k


def weight_w(M: MSequence, x: float) -> WeightEval:
    """Evaluate ``w(x)`` with the largest minimising index."""
    lw, k = log_weight(M, x)
    k = int(k)
    return WeightEval(float(x), float(lw), k, k == M.k_max)


def weight_table(M: MSequence, xs: Iterable[float]) -> list[WeightEval]:
    return [weight_w(M, x) for x in xs]


def write_weight_csv(path, table: Sequence[WeightEval]) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["x", "w", "k_of_x", "saturated"])
        for ev in table:
            wr.writerow([f"{ev.x:.17g}", f"{ev.w:.17g}", ev.k_of_x, int(ev.saturated)])


def decay_ratio(M: MSequence, mu: float, x: float) -> float:
    """``w(mu x) / w(x)``; never exceeds ``mu ** k(x)``."""
    if not 0 < mu < 1:
        raise ValueError("mu must lie in (0, 1)")
    a, b = weight_w(M, mu * x), weight_w(M, x)
    if a.saturated or b.saturated:
        raise SaturationError(f"weight saturated at x={x:g}; increase k_max")
    return math.exp(a.log_w - b.log_w)


@dataclass(frozen=True)
class GentilCheck:
    C: float
    argmax: int
    trend: str
    ratios: np.ndarray = field(repr=False)

    @property
    def conclusive(self) -> bool:
        return self.trend != "increasing"


def check_gentil(M: MSequence, gamma: float) -> GentilCheck:
    """Smallest ``C`` with ``(k+1) M_{k+1} <= C gamma^k M_k`` for ``k < k_max``.

    ``trend == "increasing"`` means the ratio still grows at ``k_max`` and
    the returned ``C`` says nothing about finiteness.
    """
    if gamma <= 1:
        raise ValueError("gamma must exceed 1")
    k = np.arange(M.k_max)
    log_r = np.log(k + 1.0) + np.diff(M.log_values) - k * math.log(gamma)
    i = int(np.argmax(log_r))
    trend = "increasing" if log_r[-1] > log_r[-2] else "decreasing"
    with np.errstate(over="ignore"):
        return GentilCheck(float(np.exp(log_r[i])), i, trend, np.exp(log_r))


def poly_ratio_exponent(M: MSequence, gamma: float, mu: float) -> float:
    """Exponent ``delta = -log mu / log gamma`` of the polynomial ratio bound."""
    if not 0 < mu < 1:
        raise ValueError("mu must lie in (0, 1)")
    if not check_gentil(M, gamma).conclusive:
        raise ValueError(f"gentil condition inconclusive for gamma={gamma}; increase k_max or gamma")
    return -math.log(mu) / math.log(gamma)


@dataclass(frozen=True)
class PolyRatioFit:
    delta: float
    C_prime: float
    n_points: int
    n_saturated: int
    violations: int


def fit_poly_ratio_constant(M: MSequence, gamma: float, mu: float,
                            xs: Sequence[float] | None = None) -> PolyRatioFit:
    """Fit ``C'`` in ``w(mu x)/w(x) <= C' x^delta`` over a grid in ``[1e-6, 1]``.

    Grid points where either weight saturates are skipped and counted.
    """
    delta = poly_ratio_exponent(M, gamma, mu)
    xs = np.logspace(-6, 0, 241) if xs is None else np.asarray(xs, dtype=float)
    lw_mu, k_mu = log_weight(M, mu * xs)
    lw, k = log_weight(M, xs)
    ok = (k_mu < M.k_max) & (k < M.k_max)
    log_r = lw_mu[ok] - lw[ok] - delta * np.log(xs[ok])
    C = float(np.exp(log_r.max())) if ok.any() else float("nan")
    viol = int(np.sum(log_r > math.log(C) + 1e-12)) if ok.any() else 0
    return PolyRatioFit(delta, C, int(ok.sum()), int((~ok).sum()), viol)


def log_convex_majorant(A: Sequence[float], length: int | None = None) -> tuple[float, MSequence]:
    """Return ``(C, B)`` with ``B`` log-convex, non-decreasing, ``B_0 = 1`` and
    ``A_k <= C B_k``.

    ``log B`` is the upper envelope of one non-negative-slope line per
    positive entry ``A_j``; the slope of line ``j`` is the steepest chord
    from an earlier positive entry, so the line never rises above earlier
    data.  Beyond ``len(A)`` the final increment is repeated.
    """
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        raise ValueError("A must be non-empty")
    if np.any(A < 0) or not np.all(np.isfinite(A)):
        raise ValueError("A must be finite and non-negative")
    n = max(A.size if length is None else length, 3)
    pos = np.flatnonzero(A > 0)
    if pos.size == 0:
        return 0.0, MSequence(np.zeros(n), "custom", {})

    L = np.log(A[pos])
    slopes = np.zeros(pos.size)
    for j in range(1, pos.size):
        chords = (L[j] - L[:j]) / (pos[j] - pos[:j])
        slopes[j] = max(0.0, chords.max())
    idx = np.arange(n)
    b = np.max(L[:, None] + slopes[:, None] * (idx[None, :] - pos[:, None]), axis=0)
    if n > A.size:
        step = b[A.size - 1] - b[A.size - 2] if A.size >= 2 else 0.0
        b[A.size:] = b[A.size - 1] + step * np.arange(1, n - A.size + 1)
    log_b = b - b[0]
    C = float(np.exp(np.max(L - log_b[pos])))
    return C, MSequence(log_b, "custom", {})


@dataclass(frozen=True)
class ClassConstants:
    C: float
    R: float
    log_sup_bounds: np.ndarray
    slack: np.ndarray


def estimate_class_constants(f_hat: Mapping[int, complex] | Sequence[tuple[int, complex]],
                             M: MSequence, k_probe: int, tail_rtol: float = 1e-12,
                             truncated: bool | None = None) -> ClassConstants:
    """Fit ``(C, R)`` with ``sup|f^(k)| <= C R^k k! M_k`` for ``k <= k_probe``.

    Sup norms are majorised by ``sum_n (2 pi |n|)^k |f_n|``.  ``log R`` is
    the least-squares slope of ``log(S_k / (k! M_k))``; ``C`` is then the
    smallest value making every inequality hold.

    When the list is a truncation of an infinite series (``truncated``;
    by default assumed once it spans more than 16 frequency shells) and
    the outermost shell carries more than ``tail_rtol`` of a sum, the
    majorant is treated as divergent at that ``k``.  A trigonometric
    polynomial gives exact sums and is never flagged.
    """
    items = list(f_hat.items()) if isinstance(f_hat, Mapping) else list(f_hat)
    n = np.array([abs(int(i)) for i, _ in items], dtype=float)
    a = np.array([abs(complex(c)) for _, c in items])
    keep = a > 0
    n, a = n[keep], a[keep]
    if k_probe > M.k_max:
        raise ValueError("k_probe exceeds k_max")
    log_S = np.full(k_probe + 1, -np.inf)
    if truncated is None:
        truncated = np.unique(n).size > 16
    if n.size:
        n_top = n.max()
        for k in range(k_probe + 1):
            with np.errstate(divide="ignore"):
                terms = k * np.log(2 * np.pi * n) + np.log(a) if k else np.log(a)
            if k:
                terms = np.where(n > 0, terms, -np.inf)
            total = logsumexp(terms) if np.isfinite(terms).any() else -np.inf
            if not np.isfinite(total) and np.isfinite(terms).any():
                raise ValueError(f"divergent majorant sum at k={k}")
            if truncated and np.isfinite(total) and n_top > 0 and k > 0:
                edge = logsumexp(terms[n == n_top])
                if edge - total > math.log(tail_rtol):
                    raise ValueError(f"divergent majorant sum at k={k}: tail not negligible")
            log_S[k] = total
    ks = np.arange(k_probe + 1)
    y = log_S - M.log_kfact_m(ks)
    fin = np.isfinite(y)
    if not fin.any():
        return ClassConstants(0.0, 0.0, log_S, np.full(k_probe + 1, np.inf))
    if fin.sum() == 1:
        log_C, log_R = float(y[fin][0]), -np.inf
    else:
        log_R = float(np.polyfit(ks[fin], y[fin], 1)[0])
        log_C = float(np.max(y[fin] - ks[fin] * log_R))
    with np.errstate(invalid="ignore"):
        bound = log_C + ks * log_R if np.isfinite(log_R) else np.where(ks == 0, log_C, -np.inf)
        slack = np.where(fin, bound - y, np.inf)
    return ClassConstants(math.exp(log_C), math.exp(log_R) if np.isfinite(log_R) else 0.0,
                          log_S, slack)

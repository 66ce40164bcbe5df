"""Expanding circle maps ``T(x) = d x + p(x) (mod 1)`` with trigonometric ``p``.

Periodic points of ``T^n`` are found by iterating compositions of inverse
branches of the lift ``F(x) = d x + p(x)``.  Each composition is a
contraction with rate ``lambda^-n``, so every periodic point is reached,
unlike root finding on ``T^n(x) - x``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True, eq=False)
class TrigPoly:
    """Finite Fourier series ``sum_n c_n e^{2 pi i n x}``."""

    freqs: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.freqs, dtype=np.int64)
        c = np.asarray(self.coeffs, dtype=complex)
        order = np.argsort(f, kind="stable")
        f, c = f[order], c[order]
        if np.unique(f).size != f.size:
            raise ValueError("duplicate frequencies in Fourier data")
        f.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "freqs", f)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_mapping(cls, coeffs: Mapping[int, complex]) -> "TrigPoly":
        items = sorted(coeffs.items())
        return cls(np.array([n for n, _ in items], dtype=np.int64),
                   np.array([c for _, c in items], dtype=complex))

    @classmethod
    def from_triples(cls, triples: Sequence[Sequence[float]], fill_conjugates: bool = True) -> "TrigPoly":
        """Parse ``[[n, re, im], ...]``; missing ``-n`` partners are filled
        with conjugates so the function is real."""
        d: dict[int, complex] = {}
        for t in triples:
            if len(t) != 3:
                raise ValueError(f"Fourier entry must be [n, re, im], got {t!r}")
            n = int(t[0])
            if n in d:
                raise ValueError(f"duplicate frequency {n}")
            d[n] = complex(float(t[1]), float(t[2]))
        if fill_conjugates:
            for n, c in list(d.items()):
                d.setdefault(-n, c.conjugate())
        return cls.from_mapping(d)

    @classmethod
    def constant(cls, c: complex) -> "TrigPoly":
        return cls(np.array([0]), np.array([c], dtype=complex))

    @classmethod
    def zero(cls) -> "TrigPoly":
        return cls(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=complex))

    def to_triples(self) -> list[list[float]]:
        return [[int(n), float(c.real), float(c.imag)] for n, c in zip(self.freqs, self.coeffs)]

    def as_dict(self) -> dict[int, complex]:
        return {int(n): complex(c) for n, c in zip(self.freqs, self.coeffs)}

    @property
    def bandwidth(self) -> int:
        return int(np.abs(self.freqs).max()) if self.freqs.size else 0

    def is_real(self, tol: float = 1e-14) -> bool:
        d = self.as_dict()
        return all(abs(d.get(-n, 0.0) - c.conjugate()) <= tol for n, c in d.items())

    def __call__(self, x, deriv: int = 0):
        x = np.asarray(x, dtype=float)
        if self.freqs.size == 0:
            return np.zeros_like(x, dtype=complex)
        c = self.coeffs * (2j * np.pi * self.freqs) ** deriv
        phase = np.exp(2j * np.pi * np.multiply.outer(x, self.freqs))
        return phase @ c

    def real(self, x, deriv: int = 0):
        return np.real(self(x, deriv))

    def continued(self, z) -> np.ndarray:
        """Entire continuation ``sum_n c_n e^{2 pi i n z}`` at complex ``z``."""
        z = np.asarray(z, dtype=complex)
        if self.freqs.size == 0:
            return np.zeros_like(z)
        return np.exp(2j * np.pi * np.multiply.outer(z, self.freqs)) @ self.coeffs

    def sup_bound(self, deriv: int = 0) -> float:
        """``sum_n (2 pi |n|)^deriv |c_n|``, an upper bound for the sup norm."""
        return float(np.sum(np.abs(self.coeffs) * (TWO_PI * np.abs(self.freqs)) ** deriv))


class NotExpandingError(ValueError):
    pass


def certify_lambda(degree: int, p: TrigPoly, grid: int = 4096) -> float:
    """Lower bound for ``min |T'|`` from the Fourier bound and a Lipschitz-corrected grid."""
    crude = abs(degree) - p.sup_bound(1)
    x = np.arange(grid) / grid
    dT = degree + p.real(x, 1)
    if np.any(np.sign(dT) != np.sign(degree)):
        raise NotExpandingError("T' changes sign on the grid")
    refined = float(np.min(np.abs(dT))) - p.sup_bound(2) / (2.0 * grid)
    return max(crude, refined)


@dataclass(frozen=True, eq=False)
class CircleMap:
    """Circle map of degree ``degree`` with 1-periodic perturbation ``p``."""

    degree: int
    p: TrigPoly = field(default_factory=TrigPoly.zero)
    lam: float = field(init=False)
    grid: int = 4096

    def __post_init__(self):
        if abs(self.degree) < 2:
            raise ValueError("|degree| must be at least 2")
        if not self.p.is_real():
            raise ValueError("perturbation must be real: p_hat(-n) = conj(p_hat(n))")
        lam = certify_lambda(self.degree, self.p, self.grid)
        if lam <= 1:
            raise NotExpandingError(f"certified expansion constant {lam:.6g} <= 1")
        object.__setattr__(self, "lam", lam)

    @classmethod
    def doubling(cls) -> "CircleMap":
        return cls(2)

    @classmethod
    def perturbed(cls, degree: int = 2, eps: float = 0.05) -> "CircleMap":
        """``T(x) = degree x + eps sin(2 pi x)``."""
        return cls(degree, TrigPoly.from_mapping({1: -0.5j * eps, -1: 0.5j * eps}))

    def lift(self, x):
        return self.degree * np.asarray(x, dtype=float) + self.p.real(x)

    def deriv(self, x):
        return self.degree + self.p.real(x, 1)

    def second_deriv(self, x):
        return self.p.real(x, 2)

    def identity(self) -> dict:
        return {"degree": self.degree, "p_hat": self.p.to_triples()}

    def digest(self, psi: TrigPoly | None = None) -> str:
        payload = {"map": self.identity(), "psi": None if psi is None else psi.to_triples()}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def evaluate(T: CircleMap, x: float) -> tuple[float, float]:
    """Return ``(T(x) mod 1, lift value)``."""
    lift = float(T.lift(x))
    return lift % 1.0, lift


def _lift_inverse(T: CircleMap, v: np.ndarray, max_iter: int = 100, tol: float = 1e-15) -> np.ndarray:
    """Solve ``F(x) = v`` on the real line (``F`` is a monotone bijection).

    The integer part is split off with ``F(x + q) = F(x) + d q`` and the
    remainder is solved on ``[0, 1]`` by Newton steps safeguarded with
    bisection.
    """
    d = T.degree
    v = np.asarray(v, dtype=float)
    c0 = float(T.lift(0.0))
    q = np.floor((v - c0) / d)
    r = v - d * q
    lo, hi = np.zeros_like(r), np.ones_like(r)
    x = np.clip((r - c0) / d, 0.0, 1.0)
    for _ in range(max_iter):
        g = T.lift(x) - r
        # keep the bracket [lo, hi] around the root of the monotone g
        below = (g < 0) if d > 0 else (g > 0)
        lo = np.where(below, x, lo)
        hi = np.where(below, hi, x)
        step = g / T.deriv(x)
        x_new = x - step
        out = (x_new <= lo) | (x_new >= hi)
        x_new = np.where(out, 0.5 * (lo + hi), x_new)
        done = np.abs(x_new - x) <= tol
        x = x_new
        if np.all(done):
            break
    else:
        raise RuntimeError("inverse branch Newton iteration did not converge")
    return x + q


def inverse_branches(T: CircleMap, y: float, tol: float = 1e-13) -> np.ndarray:
    """All ``|degree|`` preimages of ``y`` in ``[0, 1)``, sorted."""
    d = T.degree
    y = float(y) % 1.0
    c0 = float(T.lift(0.0))
    # lift values reachable from [0, 1) form [c0, c0 + d) (or (c0 + d, c0])
    lo = min(c0, c0 + d)
    j0 = math.ceil(lo - y)
    targets = y + j0 + np.arange(abs(d))
    if d < 0:
        targets = np.where(targets == c0 + d, targets + abs(d), targets)
    x = _lift_inverse(T, targets) % 1.0
    x = np.sort(np.where(x >= 1.0, 0.0, x))
    res = np.abs(((T.lift(x) - y + 0.5) % 1.0) - 0.5)
    if np.any(res >= tol):
        raise RuntimeError(f"inverse branch residual {res.max():.3g} exceeds {tol:g}")
    return x


@dataclass(frozen=True, eq=False)
class PeriodicOrbitSet:
    period: int
    x: np.ndarray
    deriv: np.ndarray

    @property
    def count(self) -> int:
        return int(self.x.size)

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.x.tolist(), self.deriv.tolist()))


def _circle_gaps(xs: np.ndarray) -> np.ndarray:
    s = np.sort(xs)
    return np.diff(np.concatenate([s, [s[0] + 1.0]]))


def periodic_points(T: CircleMap, n: int, n_max: int = 14, dedup_tol: float = 1e-10) -> PeriodicOrbitSet:
    """All fixed points of ``T^n`` with ``(T^n)'`` along each orbit.

    For degree ``d > 0`` the symbol string ``s`` in ``{0..d-1}^n`` selects
    the contraction ``x -> F^{-n}(x + J(s))`` with ``J(s) = sum_i s_i
    d^{n-i}``; its fixed point solves ``F^n(x) = x + J``.  The strings for
    ``J = 0`` and ``J = d^n - 1`` give the same circle point and are merged
    by distance.  For ``d < 0`` every residue ``J mod |d^n - 1|`` is used.
    """
    if not 1 <= n <= n_max:
        raise ValueError(f"period must lie in [1, {n_max}]")
    d = T.degree
    if d > 0:
        J = np.arange(d**n, dtype=float)
    else:
        J = np.arange(abs(d**n - 1) + 1, dtype=float)
    period_shift = float(d**n - 1)
    x = np.where(period_shift != 0, J / period_shift, 0.0) % 1.0
    contraction = T.lam ** (-n)
    for _ in range(200):
        v = x + J
        for _ in range(n):
            v = _lift_inverse(T, v)
        delta = np.max(np.abs(v - x))
        x = v
        if delta * contraction / max(1.0 - contraction, 1e-300) < 1e-15:
            break
    # Newton polish on G(x) = F^n(x) - x - J
    for _ in range(2):
        u, du = x.copy(), np.ones_like(x)
        for _ in range(n):
            du = du * T.deriv(u)
            u = T.lift(u)
        x = x - (u - x - J) / (du - 1.0)
    x = x % 1.0
    x = np.where(x >= 1.0, 0.0, x)

    order = np.argsort(x, kind="stable")
    x = x[order]
    gaps = np.diff(np.concatenate([x, [x[0] + 1.0]]))
    dup = gaps < dedup_tol
    keep = ~np.roll(dup, 1) if x.size > 1 else np.ones(1, bool)
    x = x[keep]

    deriv = np.ones_like(x)
    u = x.copy()
    for _ in range(n):
        deriv = deriv * T.deriv(u)
        u = T.lift(u) % 1.0
    expected = abs(d**n - 1)
    if x.size != expected:
        near = np.sort(_circle_gaps(x))[:5] if x.size else []
        raise RuntimeError(f"found {x.size} periodic points of period {n}, expected "
                           f"{expected}; smallest gaps {near}")
    return PeriodicOrbitSet(n, x, deriv)


def flat_trace(T: CircleMap, psi: TrigPoly | None, n: int, orbits: PeriodicOrbitSet | None = None):
    """``sum_{T^n x = x} prod_k psi(T^k x) / |1 - (T^n)'(x)|``."""
    orbits = periodic_points(T, n) if orbits is None else orbits
    denom = np.abs(1.0 - orbits.deriv)
    if np.any(denom < 1e-8):
        raise ValueError("near-parabolic periodic point: |1 - (T^n)'(x)| < 1e-8")
    if psi is None:
        return math.fsum(1.0 / denom)
    weight = np.ones(orbits.count, dtype=complex)
    u = orbits.x.copy()
    for _ in range(n):
        weight *= psi(u)
        u = T.lift(u) % 1.0
    terms = weight / denom
    re = math.fsum(terms.real)
    im = math.fsum(terms.imag)
    if psi.is_real():
        if abs(im) > 1e-12 * max(1.0, abs(re)):
            raise ValueError("imaginary residue in a real flat trace")
        return re
    return complex(re, im)


def flat_traces(T: CircleMap, psi: TrigPoly | None, n_traces: int, n_max: int = 14) -> list:
    return [flat_trace(T, psi, n, periodic_points(T, n, n_max=n_max)) for n in range(1, n_traces + 1)]


def write_orbits_csv(path, orbit_sets: Sequence[PeriodicOrbitSet]) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["period", "x", "deriv"])
        for s in orbit_sets:
            for x, dv in zip(s.x, s.deriv):
                wr.writerow([s.period, f"{x:.17g}", f"{dv:.17g}"])


def map_from_dict(d: Mapping) -> tuple[CircleMap, TrigPoly | None]:
    """Parse ``{"degree": 2, "p_hat": [[n, re, im], ...], "psi_hat": [...]}``."""
    d = dict(d)
    if "degree" not in d:
        raise ValueError("map spec needs 'degree'")
    unknown = set(d) - {"degree", "p_hat", "psi_hat", "grid"}
    if unknown:
        raise ValueError(f"unknown map fields: {sorted(unknown)}")
    p = TrigPoly.from_triples(d.get("p_hat", []))
    psi_raw = d.get("psi_hat")
    psi = TrigPoly.from_triples(psi_raw, fill_conjugates=False) if psi_raw is not None else None
    return CircleMap(int(d["degree"]), p, grid=int(d.get("grid", 4096))), psi

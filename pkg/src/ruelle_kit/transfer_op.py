"""Matrix of the (weighted) transfer operator in the Fourier basis.

Row ``k`` of ``<L_psi e_l, e_k> = int psi(x) e^{2 pi i (l x - k T(x))} dx``
is read off the Fourier coefficients of ``c_k(x) = psi(x) e^{-2 pi i k p(x)}``:
the entry is the coefficient of ``c_k`` at ``n = d k - l``.

``c_k`` is entire, so its ``n``-th coefficient equals
``e^{2 pi n y}`` times the ``n``-th coefficient of ``c_k(. + iy)``.  An FFT
along the real line resolves coefficients only down to ``eps sup|c_k|``;
taking each coefficient from the shifted line that minimises
``e^{2 pi n y} sup|c_k(. + iy)|`` gives it to nearly full relative
accuracy.  The small entries matter: the block scaling of the H-norm
multiplies them by large factors and they control the small resonances.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .circle_map import TWO_PI, CircleMap, TrigPoly
from .dc_class import MSequence, log_weight

QUAD_CAP = 2**20
# entries below DROP_TOL times their own roundoff scale are FFT noise; the
# block scaling of the H-norm amplifies them so they must be exact zeros
DROP_TOL = 1e-14
_Y = 2.0 ** (np.arange(-24, 6) / 4)
SHIFTS = np.concatenate([[0.0], _Y, -_Y])


@dataclass(frozen=True, eq=False)
class TransferMatrix:
    K: int
    entries: np.ndarray
    quad_size: int
    map_id: str
    drop_tol: float = DROP_TOL

    @property
    def freqs(self) -> np.ndarray:
        return np.arange(-self.K, self.K + 1)

    def entry(self, k: int, l: int) -> complex:
        return complex(self.entries[k + self.K, l + self.K])

    def sidecar(self) -> dict:
        return {"K": self.K, "quad_size": self.quad_size, "map_hash": self.map_id,
                "dtype": "complex128", "order": "row-major", "shape": list(self.entries.shape)}


def quadrature_size(T: CircleMap, psi: TrigPoly | None, K: int, cap: int = QUAD_CAP) -> int:
    n_psi = psi.bandwidth if psi is not None else 0
    band = K * T.p.sup_bound(1) * math.e
    need = 8 * (band + n_psi + K * abs(T.degree))
    Q = 1 << max(4, math.ceil(math.log2(max(need, 16))))
    if Q > cap:
        raise ValueError(f"quadrature size {Q} exceeds cap {cap}: increase cap or reduce K")
    return Q


RESEED = 16


def _phases(P: np.ndarray, ks):
    """Yield ``(k, W, log_top)`` with ``W = exp(-2 pi i k P - log_top)`` and
    ``log_top = max Re(-2 pi i k P)`` per line, so ``sup |W| = 1``.

    Consecutive rows are advanced by one multiplication; a fresh ``exp``
    every ``RESEED`` rows bounds the accumulated rounding.
    """
    im = 2 * np.pi * P.imag
    hi, lo = im.max(axis=1), im.min(axis=1)
    # stepping toward negative k multiplies by up to exp(hi - lo)
    safe = (hi - lo) < 600
    up = np.exp(-2j * np.pi * P - hi[:, None])
    down = np.exp(-2j * np.pi * P[safe] - lo[safe, None])
    W = None
    for i, k in enumerate(ks):
        log_top = k * (hi if k >= 0 else lo)
        if W is None or i % RESEED == 0:
            W = np.exp(-2j * np.pi * k * P - log_top[:, None])
        elif k >= 1:
            W = W * up
        else:
            fresh = np.exp(-2j * np.pi * k * P[~safe] - log_top[~safe, None])
            W = W.copy()
            W[safe] *= down
            W[~safe] = fresh
        yield k, W, log_top


def _row_entries(W: np.ndarray, log_top: np.ndarray, n: np.ndarray, Psi, drop_tol: float) -> np.ndarray:
    """Coefficients ``n`` of ``c_k = psi e^{-2 pi i k p}``, each from its best
    shifted line; ``W`` and ``Psi`` hold the two factors on ``x + i SHIFTS``."""
    # a coefficient n > 0 only gains from y < 0 and vice versa
    use = np.ones(SHIFTS.size, dtype=bool)
    if n.min() > 0:
        use = SHIFTS <= 0
    elif n.max() < 0:
        use = SHIFTS >= 0
    V, log_sup = W[use], log_top[use]
    if Psi is not None:
        V = V * Psi[use]
        sup = np.abs(V).max(axis=1)
        ok = sup > 0
        V[ok] /= sup[ok, None]
        log_sup = np.where(ok, log_sup + np.log(np.where(ok, sup, 1.0)), -np.inf)
    Q = V.shape[1]
    F = np.fft.fft(V, axis=1)[:, n % Q] / Q
    log_scale = 2 * np.pi * np.outer(SHIFTS[use], n) + log_sup[:, None]
    best = np.argmin(log_scale, axis=0)
    cols = np.arange(n.size)
    scale = np.exp(log_scale[best, cols])
    row = F[best, cols] * scale
    row[np.abs(row) < drop_tol * scale] = 0.0
    return row


def assemble_matrix(T: CircleMap, psi: TrigPoly | None, K: int, quad_size: int | None = None,
                    cap: int = QUAD_CAP, drop_tol: float = DROP_TOL) -> TransferMatrix:
    """Assemble ``<L_psi e_l, e_k>`` for ``|k|, |l| <= K``."""
    if K < 1:
        raise ValueError("K must be at least 1")
    Q = quadrature_size(T, psi, K, cap) if quad_size is None else int(quad_size)
    if Q > cap:
        raise ValueError(f"quadrature size {Q} exceeds cap {cap}: increase cap or reduce K")
    z = np.arange(Q) / Q + 1j * SHIFTS[:, None]
    P = T.p.continued(z)
    Psi = psi.continued(z) if psi is not None else None
    ls = np.arange(-K, K + 1)
    M = np.zeros((2 * K + 1, 2 * K + 1), dtype=complex)
    symmetric = psi is None or psi.is_real()
    rows = range(0, K + 1) if symmetric else range(-K, K + 1)
    for k, W, log_top in _phases(P, rows):
        row = _row_entries(W, log_top, T.degree * k - ls, Psi, drop_tol)
        M[k + K] = row
        if symmetric and k:
            # real data: entry(-k, -l) = conj(entry(k, l))
            M[K - k] = np.conj(row[::-1])
    M.setflags(write=False)
    return TransferMatrix(K, M, Q, T.digest(psi), drop_tol)


def koopman_matrix(T: CircleMap, psi: TrigPoly | None, K: int, quad_size: int) -> np.ndarray:
    """``<L_psi^* e_k, e_l>`` from the FFT of ``conj(psi) e_k o T``.

    Satisfies ``entry(k, l) = conj(koopman[k, l])``; the adjoint route
    shares no intermediate with :func:`assemble_matrix`.
    """
    Q = quad_size
    x = np.arange(Q) / Q
    Tx = T.lift(x)
    psi_c = np.conj(psi(x)) if psi is not None else 1.0
    ls = np.arange(-K, K + 1)
    out = np.zeros((2 * K + 1, 2 * K + 1), dtype=complex)
    for i, k in enumerate(range(-K, K + 1)):
        g = psi_c * np.exp(2j * np.pi * k * Tx)
        gh = np.fft.fft(g) / Q
        out[i] = gh[ls % Q]
    return out


def export_matrix(Mx: TransferMatrix, stem) -> tuple[str, str]:
    """Write ``<stem>.bin`` (row-major complex128) and ``<stem>.json``."""
    stem = str(stem)
    np.ascontiguousarray(Mx.entries, dtype=np.complex128).tofile(stem + ".bin")
    with open(stem + ".json", "w") as fh:
        json.dump(Mx.sidecar(), fh, sort_keys=True, indent=2)
    return stem + ".bin", stem + ".json"


def load_matrix(stem) -> TransferMatrix:
    stem = str(stem)
    with open(stem + ".json") as fh:
        meta = json.load(fh)
    n = 2 * meta["K"] + 1
    ent = np.fromfile(stem + ".bin", dtype=np.complex128).reshape(n, n)
    ent.setflags(write=False)
    return TransferMatrix(meta["K"], ent, meta["quad_size"], meta["map_hash"])


def export_matrix_csv(Mx: TransferMatrix, path) -> None:
    if Mx.K > 64:
        raise ValueError("CSV export is meant for K <= 64")
    with open(path, "w") as fh:
        fh.write("k,l,re,im\n")
        for i, k in enumerate(Mx.freqs):
            for j, l in enumerate(Mx.freqs):
                z = Mx.entries[i, j]
                fh.write(f"{k},{l},{z.real:.17g},{z.imag:.17g}\n")


@dataclass(frozen=True)
class DecayFitReport:
    C: float
    R: float
    violations: int
    max_slack: float
    n_entries: int
    empty: bool = False
    R_grid: tuple = field(default=(), repr=False)
    at_grid_edge: bool = False

    def as_dict(self) -> dict:
        return {"C": self.C, "R": self.R, "violations": self.violations,
                "max_slack": self.max_slack, "n_entries": self.n_entries,
                "empty": self.empty, "at_grid_edge": self.at_grid_edge}


def grid_fit(candidates, objective, rtol: float = 1e-9):
    """Minimise ``objective`` over ``candidates``; ties within ``rtol`` go to
    the earliest (smallest) candidate.  Infeasible candidates return ``inf``."""
    vals = np.array([objective(c) for c in candidates], dtype=float)
    best = np.min(vals)
    if not np.isfinite(best):
        return None, best, vals
    i = int(np.flatnonzero(vals <= best * (1 + rtol) + 1e-300)[0])
    return candidates[i], vals[i], vals


def verify_entry_decay(Mx: TransferMatrix, M: MSequence, theta: float,
                       R_grid=None) -> DecayFitReport:
    """Fit ``|<L e_l, e_k>| <= C w(R / |k|)`` over ``|k| > |l| / theta``."""
    ks = Mx.freqs
    kk, ll = np.meshgrid(ks, ks, indexing="ij")
    window = np.abs(kk) > np.abs(ll) / theta
    mags = np.abs(Mx.entries[window])
    absk = np.abs(kk[window]).astype(float)
    R_grid = tuple(np.logspace(-1, 2, 32)) if R_grid is None else tuple(R_grid)
    if mags.size == 0:
        return DecayFitReport(0.0, float(R_grid[0]), 0, 0.0, 0, True, R_grid)
    nz = mags > 0
    uniq, inv = np.unique(absk, return_inverse=True)

    def fitted_C(R):
        if not nz.any():
            return 0.0
        lw, kx = log_weight(M, R / uniq)
        if np.any(kx[inv[nz]] >= M.k_max):
            return np.inf
        lc = float(np.max(np.log(mags[nz]) - lw[inv[nz]]))
        return math.exp(lc) if lc < 700 else np.inf

    R, lc, _ = grid_fit(R_grid, fitted_C)
    if R is None:
        raise ValueError("every R candidate saturates the weight; increase k_max")
    lw, _ = log_weight(M, R / uniq)
    bound = lc * np.exp(lw[inv])
    viol = int(np.sum(mags > bound * (1 + 1e-12)))
    slack = bound - mags
    return DecayFitReport(float(lc), float(R), viol, float(slack.max()), int(mags.size),
                          False, R_grid, R in (R_grid[0], R_grid[-1]))


def shift_oracle(K: int, degree: int = 2) -> np.ndarray:
    """Exact matrix of the linear map ``x -> d x``: ``entry(k, l) = [l == d k]``."""
    ks = np.arange(-K, K + 1)
    return (ks[None, :] == degree * ks[:, None]).astype(complex)


def direct_entry(T: CircleMap, psi: TrigPoly | None, k: int, l: int, n: int = 100_000) -> complex:
    """Trapezoid quadrature of a single entry (independent oracle)."""
    x = np.arange(n) / n
    f = np.exp(2j * np.pi * (l * x - k * T.lift(x)))
    if psi is not None:
        f = f * psi(x)
    return complex(f.mean())


__all__ = [
    "TransferMatrix", "assemble_matrix", "quadrature_size", "koopman_matrix",
    "verify_entry_decay", "DecayFitReport", "grid_fit", "export_matrix", "load_matrix",
    "export_matrix_csv", "shift_oracle", "direct_entry", "TWO_PI",
]

"""The anisotropic Hilbert space H built from geometric frequency blocks.

Frequencies are grouped in blocks ``theta^n <= |k| < theta^(n+1)``; block
``m`` carries the norm weight

    h_m = lambda^-m / w(R / theta^(m-1)),

so ``e_k / h_{n(k)}`` is an orthonormal basis of H and the matrix of
``L`` in that basis is a diagonal similarity of the Fourier matrix.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .dc_class import MSequence, SaturationError, log_weight
from .transfer_op import TransferMatrix, grid_fit

LOG_RANGE_CAP = 700.0


def block_index(k, theta: float) -> np.ndarray:
    """``n(k) = floor(log|k| / log theta)``; ``|k| < theta`` (including 0) is block 0."""
    k = np.abs(np.asarray(k, dtype=np.int64))
    safe = np.maximum(k, 1).astype(float)
    n = np.floor(np.log(safe) / math.log(theta)).astype(np.int64)
    # guard the floor against rounding at exact powers of theta
    n = np.where(theta ** (n + 1) <= safe, n + 1, n)
    n = np.where(theta ** n > safe, n - 1, n)
    return np.where(k == 0, 0, np.maximum(n, 0))


def log_block_weights(M: MSequence, theta: float, lam: float, R: float, n_blocks: int) -> np.ndarray:
    m = np.arange(n_blocks)
    lw, k = log_weight(M, R / theta ** (m - 1.0))
    if np.any(k >= M.k_max):
        raise SaturationError("block weight saturated; increase k_max")
    return -m * math.log(lam) - lw


@dataclass(frozen=True, eq=False)
class BlockScaling:
    theta: float
    lam: float
    R: float
    K: int
    block_of: np.ndarray
    log_h: np.ndarray
    calibration_C: float | None = None

    @property
    def N_blocks(self) -> int:
        return int(self.log_h.size)

    @property
    def h(self) -> np.ndarray:
        return np.exp(self.log_h)

    def growth_diagnostic(self) -> np.ndarray:
        """``log(h_m / h_{m+1})``; tends to ``-inf`` since ``h`` grows
        faster than any geometric sequence."""
        return -np.diff(self.log_h)

    def as_dict(self) -> dict:
        return {"theta": self.theta, "lambda": self.lam, "R": self.R,
                "log_h": self.log_h.tolist(), "h": self.h.tolist(), "K": self.K,
                "N_blocks": self.N_blocks}

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.as_dict(), fh, indent=2)


def block_slices(S: BlockScaling) -> list[np.ndarray]:
    return [np.flatnonzero(S.block_of == m) for m in range(S.N_blocks)]


def block_norms(mat: np.ndarray, blocks_of: np.ndarray, n_blocks: int) -> np.ndarray:
    """Spectral norms ``||pi_m L pi_n||``; empty blocks give 0."""
    idx = [np.flatnonzero(blocks_of == m) for m in range(n_blocks)]
    b = np.zeros((n_blocks, n_blocks))
    for m in range(n_blocks):
        for n in range(n_blocks):
            if idx[m].size and idx[n].size:
                sub = mat[np.ix_(idx[m], idx[n])]
                if np.any(sub):
                    b[m, n] = np.linalg.norm(sub, 2)
    return b


@dataclass(frozen=True)
class Calibration:
    R: float
    C: float
    violations: int
    R_grid: tuple = field(repr=False)
    C_values: tuple = field(repr=False)
    at_grid_edge: bool = False


DEFAULT_R_GRID = tuple(np.logspace(-1, 2, 32))


def calibrate_R(Mx: TransferMatrix, M: MSequence, theta: float, R_grid=None) -> Calibration:
    """Fit ``||pi_m L pi_n|| <= C w(R/theta^m) theta^((m+n)/2)`` for ``m >= n``.

    ``C`` is minimised over ``R_grid``; ties go to the smallest ``R`` (the
    tightest weight).  Candidates whose weights saturate are infeasible.
    """
    R_grid = DEFAULT_R_GRID if R_grid is None else tuple(R_grid)
    blocks = block_index(Mx.freqs, theta)
    nb = int(blocks.max()) + 1
    b = block_norms(Mx.entries, blocks, nb)
    m_idx, n_idx = np.nonzero(np.tril(b) > 0)
    vals = b[m_idx, n_idx]

    def fitted_C(R):
        lw, k = log_weight(M, R / theta ** np.arange(-1.0, nb + 1))
        if np.any(k >= M.k_max):
            return np.inf
        if vals.size == 0:
            return 0.0
        lw_m = lw[m_idx + 1]
        lc = float(np.max(np.log(vals) - lw_m - 0.5 * (m_idx + n_idx) * math.log(theta)))
        return math.exp(lc) if lc < 700 else np.inf

    R, C, Cs = grid_fit(R_grid, fitted_C)
    if R is None:
        raise SaturationError("every R candidate saturates the weight; increase k_max")
    lw, _ = log_weight(M, R / theta ** np.arange(nb, dtype=float))
    bound = C * np.exp(lw[m_idx] + 0.5 * (m_idx + n_idx) * math.log(theta))
    viol = int(np.sum(vals > bound * (1 + 1e-12)))
    return Calibration(float(R), float(C), viol, R_grid, tuple(Cs), R in (R_grid[0], R_grid[-1]))


def build_scaling(lam: float, M: MSequence, theta: float, K: int, R: float | None = None,
                  matrix: TransferMatrix | None = None) -> BlockScaling:
    """Blocks and weights over ``|k| <= K``; calibrates ``R`` from ``matrix``
    when ``R`` is not given."""
    if not 1 < theta < lam:
        raise ValueError(f"theta must lie in (1, lambda={lam:.6g})")
    if K < 1:
        raise ValueError("K must be at least 1")
    cal_C = None
    if R is None:
        if matrix is None:
            raise ValueError("R not given and no matrix to calibrate it from")
        cal = calibrate_R(matrix, M, theta)
        R, cal_C = cal.R, cal.C
    block_of = block_index(np.arange(-K, K + 1), theta)
    n_blocks = int(block_of.max()) + 1
    log_h = log_block_weights(M, theta, lam, R, n_blocks)
    if log_h.max() - log_h.min() > LOG_RANGE_CAP:
        raise ValueError("block weights span more than exp(700): reduce K or raise theta")
    block_of.setflags(write=False)
    log_h.setflags(write=False)
    return BlockScaling(theta, lam, float(R), K, block_of, log_h, cal_C)


@dataclass(frozen=True, eq=False)
class HMatrix:
    entries: np.ndarray
    scaling: BlockScaling
    source: TransferMatrix | None = None


def h_matrix(Mx: TransferMatrix, S: BlockScaling) -> HMatrix:
    """``entry_H(k, l) = h_{n(k)} entry(k, l) / h_{n(l)}``."""
    if S.K != Mx.K:
        raise ValueError("scaling and matrix use different K")
    lh = S.log_h[S.block_of]
    H = Mx.entries * np.exp(lh[:, None] - lh[None, :])
    H.setflags(write=False)
    return HMatrix(H, S, Mx)


def split_cb(H: HMatrix, N: int) -> tuple[np.ndarray, np.ndarray]:
    """``A_N`` (blocks ``n <= m <= N``) and ``B_N`` (blocks ``m < n <= N``)."""
    S = H.scaling
    if not 0 <= N <= S.N_blocks - 1:
        raise ValueError(f"N must lie in [0, {S.N_blocks - 1}]")
    row = S.block_of[:, None]
    col = S.block_of[None, :]
    inside = (row <= N) & (col <= N)
    A = np.where(inside & (row >= col), H.entries, 0)
    B = np.where(inside & (row < col), H.entries, 0)
    return A, B


def singular_values(mat) -> np.ndarray:
    s = np.linalg.svd(np.asarray(mat), compute_uv=False)
    s = np.sort(s)[::-1]
    s[s < 1e-300] = 0.0
    return s


def nilpotent_norms(B: np.ndarray, n_max: int) -> list[float]:
    """``[||B||, ||B^2||, ..., ||B^n_max||]`` in spectral norm."""
    out = []
    P = np.array(B, copy=True)
    for n in range(1, n_max + 1):
        out.append(float(np.linalg.norm(P, 2)) if np.any(P) else 0.0)
        P = P @ B
    return out


def sv_envelope(M: MSequence, theta: float, A: float, ks, n_grid: int = 64,
                decades: float = 3.0) -> np.ndarray:
    """``sup_{0 < x <= 1/k} w(A x) / w(theta A x)`` on a log grid per ``k``.

    Grid points where a weight saturates are skipped; a ``k`` with no
    usable point gets ``nan``.
    """
    ks = np.asarray(ks, dtype=float)
    frac = np.logspace(-decades, 0, n_grid)
    x = frac[None, :] / ks[:, None]
    lw1, k1 = log_weight(M, A * x)
    lw2, k2 = log_weight(M, theta * A * x)
    ok = (k1 < M.k_max) & (k2 < M.k_max)
    r = np.where(ok, lw1 - lw2, -np.inf)
    out = np.exp(r.max(axis=1))
    out[~ok.any(axis=1)] = np.nan
    return out


@dataclass(frozen=True)
class BoundReport:
    name: str
    C: float
    A: float
    violations: int
    slack: np.ndarray = field(repr=False)
    bound: np.ndarray = field(repr=False)
    schatten_p: float = float("inf")
    at_grid_edge: bool = False

    def as_dict(self) -> dict:
        return {"name": self.name, "fitted_constants": {"C": self.C, "A": self.A},
                "violations": self.violations, "schatten_p": self.schatten_p,
                "at_grid_edge": self.at_grid_edge}


DEFAULT_A_GRID = tuple(np.logspace(-1, 3, 32))


def check_sv_bound(svals, M: MSequence, theta: float, fit=None, A_grid=None) -> BoundReport:
    """Check ``sigma_k <= C sup_{x <= 1/k} w(A x)/w(theta A x)`` for ``k >= 1``.

    ``fit=(C, A)`` evaluates given constants; otherwise ``A`` is
    grid-searched and ``C`` made minimal.
    """
    s = np.asarray(svals, dtype=float)
    ks = np.arange(1, s.size)
    sk = s[1:]
    nz = sk > 0
    if fit is not None:
        C, A = fit
        env = sv_envelope(M, theta, A, ks)
        edge = False
    else:
        A_grid = DEFAULT_A_GRID if A_grid is None else tuple(A_grid)

        def fitted_C(A):
            env = sv_envelope(M, theta, A, ks)
            if np.any(np.isnan(env[nz])):
                return np.inf
            if not nz.any():
                return 0.0
            # an underflowed envelope makes this A infeasible
            with np.errstate(divide="ignore"):
                return float(np.max(sk[nz] / env[nz]))

        A, C, _ = grid_fit(A_grid, fitted_C)
        if A is None:
            raise SaturationError("sv envelope saturated for every A; increase k_max")
        env = sv_envelope(M, theta, A, ks)
        edge = A in (A_grid[0], A_grid[-1])
    bound = C * env
    viol = int(np.sum(sk > bound * (1 + 1e-12)))
    return BoundReport("singular_values", float(C), float(A), viol, bound - sk, bound,
                       schatten_exponent(bound), edge)


def schatten_exponent(envelope) -> float:
    """Smallest ``p`` with ``sum envelope^p`` finite, read off the tail
    log-log slope (``0`` when the tail decays faster than any power)."""
    e = np.asarray(envelope, dtype=float)
    k = np.arange(1, e.size + 1)
    ok = np.isfinite(e) & (e > 0)
    if ok.sum() < 4:
        return 0.0
    kk, ee = k[ok], e[ok]
    tail = slice(ee.size // 2, None)
    slope = np.polyfit(np.log(kk[tail]), np.log(ee[tail]), 1)[0]
    if slope >= 0:
        return float("inf")
    p = -1.0 / slope
    return 0.0 if p < 1e-3 else float(p)


@dataclass(frozen=True)
class CauchyReport:
    C: float
    violations: int
    pairs: int


def cauchy_check(H: HMatrix, g_values) -> CauchyReport:
    """Fit ``||A_M - A_N|| <= C g(N)`` over ``N < M <= N_blocks - 1``."""
    nb = H.scaling.N_blocks
    A_list = [split_cb(H, N)[0] for N in range(nb)]
    ratios = []
    for N in range(nb):
        for Mb in range(N + 1, nb):
            d = float(np.linalg.norm(A_list[Mb] - A_list[N], 2))
            ratios.append((d, g_values[N]))
    if not ratios:
        return CauchyReport(0.0, 0, 0)
    C = max(d / g for d, g in ratios)
    viol = sum(d > C * g * (1 + 1e-12) for d, g in ratios)
    return CauchyReport(float(C), int(viol), len(ratios))

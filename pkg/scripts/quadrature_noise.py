"""Effect of matrix-entry accuracy on the small resonances.

Compares three assemblies of the same truncation: the shifted-contour one
used by the package, a plain real-line FFT (absolute accuracy only), and
Bessel-function entries (exact up to rounding, available for
``x -> 2x + eps sin(2 pi x)`` only).

    python3 scripts/quadrature_noise.py --K 128
"""

from __future__ import annotations

import argparse
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import jv

from ruelle_kit.aniso_space import build_scaling, h_matrix
from ruelle_kit.circle_map import CircleMap
from ruelle_kit.dc_class import make_sequence
from ruelle_kit.determinant import match_spectra
from ruelle_kit.transfer_op import TransferMatrix, assemble_matrix, koopman_matrix


@dataclass
class NoiseConfig:
    eps: float = 0.05
    K: int = 128
    theta: float = 1.5
    n_show: int = 13


def bessel_entries(K: int, eps: float) -> np.ndarray:
    ks = np.arange(-K, K + 1)
    m = 2 * ks[:, None] - ks[None, :]
    return (((-1.0) ** (m % 2)) * jv(m, 2 * math.pi * ks[:, None] * eps)).astype(complex)


def run(cfg: NoiseConfig) -> None:
    T = CircleMap.perturbed(2, cfg.eps)
    M = make_sequence({"kind": "analytic", "k_max": 4096})
    Mx = assemble_matrix(T, None, cfg.K)
    plain = np.conj(koopman_matrix(T, None, cfg.K, Mx.quad_size))
    S = build_scaling(T.lam, M, cfg.theta, cfg.K, None, Mx)

    def spectrum(E):
        H = h_matrix(TransferMatrix(cfg.K, E, Mx.quad_size, "x"), S).entries
        w = np.linalg.eigvals(H)
        return w[np.argsort(-np.abs(w))]

    ref = spectrum(bessel_entries(cfg.K, cfg.eps))[: cfg.n_show]
    shifted, _ = match_spectra(ref, spectrum(Mx.entries))
    fft, _ = match_spectra(ref, spectrum(plain))
    print(f"{'|lambda|':>10} {'shifted rel err':>16} {'plain FFT rel err':>18}")
    for r, a, b in zip(ref, shifted, fft):
        print(f"{abs(r):>10.3e} {abs(a - r) / abs(r):>16.1e} {abs(b - r) / abs(r):>18.1e}")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--eps", type=float, default=NoiseConfig.eps)
    ap.add_argument("--K", type=int, default=NoiseConfig.K)
    a = ap.parse_args(argv)
    run(NoiseConfig(a.eps, a.K))


if __name__ == "__main__":
    main()

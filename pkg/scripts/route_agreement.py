"""Agreement of the three determinant routes (orbit, eigen, npd) over a
sweep of perturbation sizes and truncations.

    python3 scripts/route_agreement.py --eps 0.02 0.05 0.1 --K 32 64 96 128
"""

from __future__ import annotations

import argparse
import math
from dataclasses import dataclass

import numpy as np

from ruelle_kit.aniso_space import build_scaling, h_matrix, split_cb
from ruelle_kit.circle_map import CircleMap, flat_traces
from ruelle_kit.dc_class import make_sequence
from ruelle_kit.determinant import (det_from_eigenvalues, det_series_from_traces, max_coeff_diff,
                                    npd_determinant)
from ruelle_kit.transfer_op import assemble_matrix


@dataclass
class RouteConfig:
    eps: tuple = (0.02, 0.05, 0.1)
    K: tuple = (32, 64, 96, 128)
    n_traces: int = 10
    n_z: int = 8
    seed: int = 0


def run(cfg: RouteConfig) -> list[tuple]:
    M = make_sequence({"kind": "analytic", "k_max": 4096})
    rng = np.random.default_rng(cfg.seed)
    zs = np.sqrt(rng.uniform(0, 1, cfg.n_z)) * np.exp(2j * np.pi * rng.uniform(0, 1, cfg.n_z))
    out = []
    print(f"{'eps':>6} {'K':>5} {'orbit-eigen':>12} {'npd-orbit':>12}")
    for eps in cfg.eps:
        T = CircleMap.perturbed(2, eps)
        theta = math.sqrt(T.lam)
        orbit = det_series_from_traces(flat_traces(T, None, cfg.n_traces))
        for K in cfg.K:
            Mx = assemble_matrix(T, None, K)
            S = build_scaling(T.lam, M, theta, K, None, Mx)
            H = h_matrix(Mx, S)
            eig = det_from_eigenvalues(np.linalg.eigvals(H.entries), 1, cfg.n_traces)
            A, B = split_cb(H, S.N_blocks - 1)
            d_oe = max_coeff_diff(orbit, eig, cfg.n_traces)
            d_no = max(abs(npd_determinant(A, B, z) - orbit(z)) for z in zs)
            out.append((eps, K, d_oe, d_no))
            print(f"{eps:>6g} {K:>5d} {d_oe:>12.2e} {d_no:>12.2e}")
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--eps", type=float, nargs="+", default=list(RouteConfig.eps))
    ap.add_argument("--K", type=int, nargs="+", default=list(RouteConfig.K))
    ap.add_argument("--n-traces", type=int, default=RouteConfig.n_traces)
    a = ap.parse_args(argv)
    run(RouteConfig(tuple(a.eps), tuple(a.K), a.n_traces))


if __name__ == "__main__":
    main()

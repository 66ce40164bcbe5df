"""Singular values of the H-matrix against the class envelope, for several
classes of the weight, written as CSV plus a gnuplot script.

    python3 scripts/sv_profile.py --K 128 --out out/sv_profile
"""

from __future__ import annotations

import argparse
import os
from dataclasses import dataclass

import numpy as np

from ruelle_kit.aniso_space import build_scaling, check_sv_bound, h_matrix, singular_values
from ruelle_kit.bounds import write_gnuplot
from ruelle_kit.circle_map import CircleMap
from ruelle_kit.dc_class import make_sequence
from ruelle_kit.reports import ensure_dir, write_csv
from ruelle_kit.transfer_op import assemble_matrix

CLASSES = {
    "analytic": {"kind": "analytic", "k_max": 4096},
    "gevrey2": {"kind": "gevrey", "sigma": 2.0, "k_max": 4096},
    "alpha_beta": {"kind": "alpha_beta", "alpha": 0.5, "beta": 1.5, "k_max": 4096},
}


@dataclass
class ProfileConfig:
    eps: float = 0.05
    K: int = 128
    theta: float = 1.5
    out: str = "out/sv_profile"


def run(cfg: ProfileConfig) -> dict:
    T = CircleMap.perturbed(2, cfg.eps)
    Mx = assemble_matrix(T, None, cfg.K)
    out = ensure_dir(cfg.out)
    summary = {}
    for name, spec in CLASSES.items():
        M = make_sequence(spec)
        S = build_scaling(T.lam, M, cfg.theta, cfg.K, None, Mx)
        s = singular_values(h_matrix(Mx, S).entries)
        rep = check_sv_bound(s, M, cfg.theta)
        ks = np.arange(1, s.size)
        write_csv(os.path.join(out, f"{name}.csv"), ["k", "sigma_k", "bound_k"],
                  [(k, s[k], rep.bound[k - 1]) for k in ks])
        write_gnuplot(os.path.join(out, f"{name}.gp"), f"{name}.csv",
                      f"singular values, {name} weight", "k", "sigma_k")
        summary[name] = rep
        print(f"{name:>10}: R={S.R:.4g} C={rep.C:.4g} A={rep.A:.4g} violations={rep.violations} "
              f"schatten_p={rep.schatten_p:.3g} sigma_10={s[10]:.3e}")
    return summary


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--eps", type=float, default=ProfileConfig.eps)
    ap.add_argument("--K", type=int, default=ProfileConfig.K)
    ap.add_argument("--theta", type=float, default=ProfileConfig.theta)
    ap.add_argument("--out", default=ProfileConfig.out)
    a = ap.parse_args(argv)
    run(ProfileConfig(a.eps, a.K, a.theta, a.out))


if __name__ == "__main__":
    main()

"""Weights, minimising indices and fitted envelopes for the built-in classes.

    python3 scripts/class_envelopes.py --out out/class_envelopes
"""

from __future__ import annotations

import argparse
import math
import os
from dataclasses import dataclass

import numpy as np

from ruelle_kit.aniso_space import sv_envelope
from ruelle_kit.bounds import beta_threshold_report, fit_envelope
from ruelle_kit.dc_class import log_weight, make_sequence
from ruelle_kit.reports import ensure_dir, write_csv


@dataclass
class EnvelopeConfig:
    k_max: int = 40_000
    theta: float = 1.5
    A: float = 1.0
    n_sv: int = 200
    out: str = "out/class_envelopes"


def run(cfg: EnvelopeConfig) -> None:
    out = ensure_dir(cfg.out)
    xs = np.logspace(-4, 0, 81)
    specs = {"analytic": {"kind": "analytic"}, "gevrey2": {"kind": "gevrey", "sigma": 2.0},
             "gevrey3": {"kind": "gevrey", "sigma": 3.0},
             "ab_1.5": {"kind": "alpha_beta", "alpha": 0.5, "beta": 1.5},
             "ab_2": {"kind": "alpha_beta", "alpha": 0.5, "beta": 2.0}}
    for name, spec in specs.items():
        M = make_sequence(spec, cfg.k_max)
        lw, k = log_weight(M, xs)
        write_csv(os.path.join(out, f"weight_{name}.csv"), ["x", "log_w", "k_of_x"], zip(xs, lw, k))
        if spec["kind"] == "gevrey":
            ms = np.arange(1, cfg.n_sv + 1)
            env = sv_envelope(M, cfg.theta, cfg.A, ms)
            ok = np.isfinite(env)
            fit = fit_envelope("gevrey_sv", {"sigma": spec["sigma"]}, ms[ok], env[ok])
            print(f"{name:>9}: gevrey_sv c={fit.c:.4g} violations={fit.violations}")
        elif spec["kind"] == "alpha_beta":
            small = xs[xs < 0.5]
            _, ks = log_weight(M, small)
            fit = fit_envelope("ab_k_lower", {"beta": spec["beta"]}, small, ks)
            print(f"{name:>9}: ab_k_lower c={fit.c:.4g} violations={fit.violations}")
        else:
            print(f"{name:>9}: k(1e-4)={int(k[0])}")
    for row in beta_threshold_report(0.5, 2.0):
        g = row["gamma"]
        print(f"beta={row['beta']}: " + (f"gamma={g:.4g} order bound={row['order_bound']:.4g}"
                                         if g is not None else "no certified gamma on the grid"))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=EnvelopeConfig.out)
    ap.add_argument("--k-max", type=int, default=EnvelopeConfig.k_max)
    a = ap.parse_args(argv)
    run(EnvelopeConfig(k_max=a.k_max, out=a.out))


if __name__ == "__main__":
    main()

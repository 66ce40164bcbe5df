"""Stabilised resonances of ``x -> d x + eps sin(2 pi x)`` for a sweep of ``eps``.

    python3 scripts/run_resonances.py --eps 0 0.02 0.05 0.1 --out out/resonances.csv
"""

from __future__ import annotations

import argparse
import csv
import math
from dataclasses import dataclass, field

from ruelle_kit.circle_map import CircleMap
from ruelle_kit.dc_class import make_sequence
from ruelle_kit.determinant import resonances
from ruelle_kit.reports import ensure_dir


@dataclass
class SweepConfig:
    degree: int = 2
    eps: tuple = (0.0, 0.02, 0.05, 0.1)
    K_list: tuple = (96, 128)
    theta: float | None = None
    n_show: int = 9
    out: str = "out/resonances.csv"
    class_spec: dict = field(default_factory=lambda: {"kind": "analytic", "k_max": 4096})


def theta_for(T: CircleMap) -> float:
    # halfway between 1 and lambda on a log scale
    return math.sqrt(T.lam)


def run(cfg: SweepConfig) -> list[dict]:
    M = make_sequence(cfg.class_spec)
    rows = []
    for eps in cfg.eps:
        T = CircleMap.perturbed(cfg.degree, eps)
        theta = cfg.theta or theta_for(T)
        res = resonances(T, None, M, theta, cfg.K_list)
        for i, (v, s) in enumerate(zip(res.values, res.stability)):
            rows.append({"eps": eps, "index": i, "re": v.real, "im": v.imag,
                         "abs": abs(v), "drift": s, "theta": theta, "R": res.R})
        shown = ", ".join(f"{v.real:+.10f}" + (f"{v.imag:+.2e}i" if v.imag else "")
                          for v in res.values[: cfg.n_show])
        print(f"eps={eps:<6g} lambda={T.lam:.4f} theta={theta:.4f} n={res.values.size}: {shown}")
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--degree", type=int, default=2)
    ap.add_argument("--eps", type=float, nargs="+", default=list(SweepConfig.eps))
    ap.add_argument("--K", type=int, nargs="+", default=list(SweepConfig.K_list))
    ap.add_argument("--theta", type=float)
    ap.add_argument("--out", default=SweepConfig.out)
    a = ap.parse_args(argv)
    cfg = SweepConfig(a.degree, tuple(a.eps), tuple(a.K), a.theta, out=a.out)
    rows = run(cfg)
    ensure_dir(cfg.out.rsplit("/", 1)[0] if "/" in cfg.out else ".")
    with open(cfg.out, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=list(rows[0]))
        wr.writeheader()
        wr.writerows(rows)
    print(f"wrote {cfg.out}")


if __name__ == "__main__":
    main()

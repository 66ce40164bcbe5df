"""Stage orchestration: class -> map -> matrix -> space -> spectrum ->
determinant -> bounds.  Each stage is computed once per run and shared by
the report builders."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import __version__
from .aniso_space import (build_scaling, calibrate_R, cauchy_check, check_sv_bound, h_matrix,
                          nilpotent_norms, singular_values, split_cb, sv_envelope)
from .bounds import (BoundProfile, beta_threshold_report, counting_bound, fit_envelope,
                     fit_growth_constant, fit_nilpotent_constant, log_F, log_g,
                     log_genus_zero_bound, log_growth_bound, order_bound, write_gnuplot)
from .circle_map import flat_traces, map_from_dict, periodic_points, write_orbits_csv
from .config import RunConfig
from .dc_class import (check_gentil, fit_poly_ratio_constant, log_weight, make_sequence,
                       weight_table, write_weight_csv)
from .determinant import (det_from_eigenvalues, det_series_from_traces, match_spectra,
                          max_coeff_diff, missing_zeros, npd_determinant, reliability_radius,
                          resonances, zero_resonance_mismatch, zeros_of_d)
from .reports import ensure_dir, envelope, write_csv, write_json
from .transfer_op import assemble_matrix, export_matrix, verify_entry_decay

PIPELINE_K_MAX = 4096

# tolerances of the verify suite
TOL_ROUTE = 1e-8
TOL_ROUTE_WEIGHTED = 1e-6
TOL_NPD = 1e-10
TOL_ZERO = 1e-6
TOL_LEADING = 1e-10
TOL_SV_MONOTONE = 1e-6


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    limit: float
    passed: bool

    def as_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "limit": self.limit, "passed": self.passed}


def _violations(name: str, count: int) -> Check:
    return Check(name, float(count), 0.0, count == 0)


def _within(name: str, value: float, tol: float) -> Check:
    return Check(name, float(value), tol, bool(value <= tol))


class Pipeline:
    """Lazily evaluated stages for one :class:`RunConfig`."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.T, self.psi = map_from_dict(cfg.map)
        spec = dict(cfg.class_spec)
        if spec.get("kind") != "custom":
            spec.setdefault("k_max", PIPELINE_K_MAX)
        self.M = make_sequence(spec)
        self.map_id = self.T.digest(self.psi)
        self.K = cfg.K_list[-1]
        self.unweighted = self.psi is None

    # -- stages -----------------------------------------------------------
    @cached_property
    def matrix(self):
        return assemble_matrix(self.T, self.psi, self.K)

    @cached_property
    def calibration(self):
        return calibrate_R(self.matrix, self.M, self.cfg.theta)

    @cached_property
    def R(self) -> float:
        return float(self.cfg.R) if self.cfg.R is not None else self.calibration.R

    @cached_property
    def scaling(self):
        return build_scaling(self.T.lam, self.M, self.cfg.theta, self.K, self.R)

    @cached_property
    def H(self):
        return h_matrix(self.matrix, self.scaling)

    @cached_property
    def svals(self) -> np.ndarray:
        return singular_values(self.H.entries)

    @cached_property
    def sv_bound(self):
        return check_sv_bound(self.svals, self.M, self.cfg.theta)

    @cached_property
    def entry_decay(self):
        return verify_entry_decay(self.matrix, self.M, self.cfg.theta)

    @cached_property
    def resonance_set(self):
        return resonances(self.T, self.psi, self.M, self.cfg.theta, self.cfg.K_list, R=self.R)

    @cached_property
    def orbits(self):
        return [periodic_points(self.T, n) for n in range(1, self.cfg.n_traces + 1)]

    @cached_property
    def traces(self) -> list:
        return flat_traces(self.T, self.psi, self.cfg.n_traces)

    @cached_property
    def orbit_series(self):
        return det_series_from_traces(self.traces, self.map_id)

    @cached_property
    def order_m(self) -> int:
        if self.cfg.order_m is not None:
            return int(self.cfg.order_m)
        p = self.sv_bound.schatten_p
        return int(math.floor(p)) + 1 if math.isfinite(p) else 1

    def eigen_series(self, K: int):
        eigs = self.resonance_set.spectra[K]
        return det_from_eigenvalues(eigs, self.order_m, self.cfg.n_traces, self.traces, self.map_id)

    @cached_property
    def profile(self) -> BoundProfile:
        return BoundProfile(self.M, self.cfg.theta, self.T.lam, self.R)

    @cached_property
    def log_g_values(self) -> list:
        return [log_g(self.profile, N) for N in range(self.scaling.N_blocks + 1)]

    # -- reports ----------------------------------------------------------
    def _wrap(self, kind: str, body: dict) -> dict:
        return envelope(kind, body, self.cfg.digest(), __version__)

    def class_report(self, out: str | None = None):
        cfg = self.cfg
        xs = np.logspace(math.log10(cfg.options.weight_x_min), 0, cfg.options.weight_points)
        table = weight_table(self.M, xs)
        gent = []
        for g in cfg.options.gammas:
            gc = check_gentil(self.M, g)
            gent.append({"gamma": g, "C": gc.C, "argmax": gc.argmax, "trend": gc.trend})
        poly = None
        conclusive = [g for g in cfg.options.gammas if check_gentil(self.M, g).conclusive]
        if conclusive:
            fit = fit_poly_ratio_constant(self.M, conclusive[0], 0.5)
            poly = {"gamma": conclusive[0], "mu": 0.5, "delta": fit.delta, "C_prime": fit.C_prime,
                    "violations": fit.violations, "n_points": fit.n_points}
        body = {"class": self.M.describe(), "k_max": self.M.k_max,
                "weights": {"x": xs, "w": [t.w for t in table], "k_of_x": [t.k_of_x for t in table],
                            "saturated": sum(t.saturated for t in table)},
                "gentil": gent, "poly_ratio": poly}
        checks = []
        if poly is not None:
            checks.append(_violations("poly_ratio", poly["violations"]))
        if out:
            write_weight_csv(os.path.join(out, "weights.csv"), table)
            write_json(os.path.join(out, "class.json"), self._wrap("class", body))
        return body, checks

    def spectrum_report(self, out: str | None = None):
        cfg = self.cfg
        cal = self.calibration
        ed = self.entry_decay
        sb = self.sv_bound
        res = self.resonance_set
        s = self.svals
        # leading singular values under K-enlargement
        K_small = cfg.K_list[-2]
        S_small = build_scaling(self.T.lam, self.M, cfg.theta, K_small, self.R)
        s_small = singular_values(h_matrix(assemble_matrix(self.T, self.psi, K_small), S_small).entries)
        n_lead = min(10, s_small.size)
        mono = float(np.max(np.maximum(s_small[:n_lead] - s[:n_lead], 0) / s[:n_lead].clip(1e-300)))
        pos = s[1:] > 0
        ks = np.arange(1, s.size)[pos]
        slope = float(np.polyfit(ks, np.log(s[1:][pos]), 1)[0]) if ks.size > 2 else -math.inf
        body = {
            "K": self.K, "theta": cfg.theta, "R": self.R, "quad_size": self.matrix.quad_size,
            "calibration": {"R": cal.R, "C": cal.C, "violations": cal.violations,
                            "at_grid_edge": cal.at_grid_edge},
            "entry_decay": ed.as_dict(),
            "scaling": self.scaling.as_dict(),
            "singular_values": s,
            "sv_bound": sb.as_dict(),
            "sv_log_slope": slope,
            "sv_monotone_max_rel": mono,
            "resonances": res.as_dict(),
        }
        checks = [
            _violations("lemma_block_norm", cal.violations),
            _violations("entry_decay", ed.violations),
            _violations("sv_bound", sb.violations),
            _within("sv_monotone_leading10", mono, TOL_SV_MONOTONE),
            Check("sv_log_slope", slope, 0.0, slope < 0),
        ]
        if self.unweighted:
            checks.append(_within("leading_resonance", abs(res.values[0] - 1), TOL_LEADING))
        if out:
            self.scaling.dump(os.path.join(out, "scaling.json"))
            write_csv(os.path.join(out, "singular_values.csv"), ["k", "sigma_k", "bound_k", "slack"],
                      [(k, s[k], sb.bound[k - 1], sb.slack[k - 1]) for k in range(1, s.size)])
            export_matrix(self.matrix, os.path.join(out, f"matrix_K{self.K}"))
            write_json(os.path.join(out, "spectrum.json"), self._wrap("spectrum", body))
        return body, checks

    def determinant_report(self, out: str | None = None):
        cfg = self.cfg
        res = self.resonance_set
        orbit = self.orbit_series
        n_cmp = min(cfg.n_traces, 10)
        eig_big = self.eigen_series(self.K)
        eig_small = self.eigen_series(cfg.K_list[-2])
        route = max_coeff_diff(orbit, eig_big, n_cmp)
        eig_stab = max_coeff_diff(eig_big, eig_small, n_cmp)
        # npd identity on the full block window
        A, B = split_cb(self.H, self.scaling.N_blocks - 1)
        rng = np.random.default_rng(cfg.options.seed)
        n = cfg.options.n_random_z
        zs = np.sqrt(rng.uniform(0, 1, n)) * np.exp(2j * np.pi * rng.uniform(0, 1, n))
        eye = np.eye(A.shape[0])
        npd_vals = [npd_determinant(A, B, z) for z in zs]
        direct = [np.linalg.det(eye - z * self.H.entries) for z in zs]
        npd_diff = float(max(abs(a - b) for a, b in zip(npd_vals, direct)))
        Bpow = np.linalg.matrix_power(B, self.scaling.N_blocks)
        radius = reliability_radius(orbit.coeffs)
        search = min(radius, 1.0 / abs(res.values[1])) if res.values.size > 1 else radius
        search = search if math.isfinite(search) else 2.0
        zeros = zeros_of_d(orbit, search)
        zmis = zero_resonance_mismatch(zeros, res)
        zmiss = missing_zeros(zeros, res, search, TOL_ZERO)
        tol_route = TOL_ROUTE if self.unweighted else TOL_ROUTE_WEIGHTED
        body = {
            "route": "orbit",
            "coeffs": orbit.coeffs,
            "order_m": self.order_m,
            "routes": {"orbit": orbit.coeffs, "eigen": eig_big.coeffs},
            "reliability_radius": radius,
            "zero_search_radius": search,
            "zeros": [z.value for z in zeros],
            "resonances": res.values,
            "flat_traces": self.traces,
            "agreements": {"orbit_vs_eigen": route, "eigen_K_stability": eig_stab,
                           "npd_vs_direct": npd_diff, "zeros_vs_resonances": zmis,
                           "resonances_without_zero": zmiss, "compared_through_order": n_cmp},
            "npd": {"z": zs, "values": npd_vals, "B_power_N_blocks_zero": not np.any(Bpow)},
        }
        checks = [
            _within("orbit_vs_eigen", route, tol_route),
            _within("npd_vs_direct", npd_diff, TOL_NPD),
            Check("B_nilpotent", float(np.abs(Bpow).max()), 0.0, not np.any(Bpow)),
            _within("zeros_vs_resonances", zmis, TOL_ZERO),
            _violations("resonances_without_zero", zmiss),
        ]
        if out:
            write_orbits_csv(os.path.join(out, "orbits.csv"), self.orbits)
            write_json(os.path.join(out, "determinant.json"), self._wrap("determinant", body))
        return body, checks

    def bounds_report(self, out: str | None = None):
        cfg = self.cfg
        P = self.profile
        lg = self.log_g_values
        entries = []
        checks = []

        g_mono = all(b <= a + 1e-15 for a, b in zip(lg, lg[1:]))
        entries.append({"name": "g", "fitted_constants": {}, "violations": 0 if g_mono else 1,
                        "grid": list(range(len(lg))), "values": np.exp(lg)})
        checks.append(Check("g_monotone", 0.0 if g_mono else 1.0, 0.0, g_mono))

        # Prop: ||B^n|| <= C^n prod_{k<n} g(k)
        _, B = split_cb(self.H, self.scaling.N_blocks - 1)
        norms = nilpotent_norms(B, self.scaling.N_blocks)
        Cn, vn = fit_nilpotent_constant(norms, lg)
        entries.append({"name": "nilpotent", "fitted_constants": {"C": Cn}, "violations": vn,
                        "grid": list(range(1, len(norms) + 1)), "values": norms})
        checks.append(_violations("nilpotent_bound", vn))

        cc = cauchy_check(self.H, np.exp(lg))
        entries.append({"name": "cauchy", "fitted_constants": {"C": cc.C}, "violations": cc.violations,
                        "grid": [], "values": [cc.pairs]})
        checks.append(_violations("cauchy", cc.violations))

        # log F vs the counting integral
        rs = list(cfg.options.counting_r)
        lF = [log_F(P, math.log(r)) for r in rs]
        cb = [counting_bound(P, r) for r in rs]
        vc = sum(a > b.value + b.error_estimate for a, b in zip(lF, cb))
        entries.append({"name": "counting", "fitted_constants": {}, "violations": vc, "grid": rs,
                        "values": {"log_F": lF, "counting": [c.value for c in cb],
                                   "error_estimate": [c.error_estimate for c in cb]}})
        checks.append(_violations("counting_vs_log_F", vc))

        # growth of d(z) inside the reliable disk of the orbit series
        orbit = self.orbit_series
        radius = reliability_radius(orbit.coeffs)
        zg = [z for z in cfg.options.growth_z if z < radius]
        d_abs = [float(np.max(np.abs(orbit(z * np.exp(2j * np.pi * np.arange(64) / 64))))) for z in zg]
        Cg, vg = fit_growth_constant(P, zg, d_abs) if zg else (1.0, 0)
        growth = [log_growth_bound(P, z, Cg) for z in zg]
        entries.append({"name": "growth", "fitted_constants": {"C": Cg}, "violations": vg, "grid": zg,
                        "values": {"log_bound": growth, "max_abs_d": d_abs},
                        "skipped": [z for z in cfg.options.growth_z if z >= radius]})
        checks.append(_violations("growth_bound", vg))

        # genus-zero product bound when the singular values are summable
        sb = self.sv_bound
        if sb.schatten_p < 1:
            zz = list(cfg.options.genus_z)
            lgz = [log_genus_zero_bound(self.M, cfg.theta, z, sb.C, sb.A) for z in zz]
            lgr = [log_growth_bound(P, z, Cg) for z in zz]
            tighter = all(a < b for a, b in zip(lgz, lgr))
            entries.append({"name": "genus_zero", "fitted_constants": {"C": sb.C, "A": sb.A},
                            "violations": 0 if tighter else 1, "grid": zz,
                            "values": {"log_genus_zero": lgz, "log_growth": lgr}})

        entries.append({"name": "order", "fitted_constants": {}, "violations": 0,
                        "grid": list(cfg.options.gammas), "values": self._order_bounds()})
        alpha = self.M.params.get("alpha", math.log(2))
        entries.append({"name": "beta_threshold", "fitted_constants": {}, "violations": 0,
                        "grid": [1.5, 2.0, 2.5], "values": beta_threshold_report(alpha, self.T.lam)})

        env = self._class_envelope()
        if env is not None:
            entries.append(env)
            checks.append(_violations(f"envelope_{env['name']}", env["violations"]))

        body = {"profile": P.as_dict(), "bounds": entries}
        if out:
            s = self.svals
            write_csv(os.path.join(out, "sv_envelope.csv"), ["k", "sigma_k", "bound_k"],
                      [(k, s[k], sb.bound[k - 1]) for k in range(1, s.size)])
            write_gnuplot(os.path.join(out, "sv_envelope.gp"), "sv_envelope.csv",
                          "singular values vs envelope", "k", "sigma_k")
            write_csv(os.path.join(out, "counting.csv"), ["r", "log_F", "counting"],
                      [(r, a, b.value) for r, a, b in zip(rs, lF, cb)])
            write_gnuplot(os.path.join(out, "counting.gp"), "counting.csv",
                          "log F vs counting integral", "r", "value", logx=True, logy=False)
            if zg:
                write_csv(os.path.join(out, "growth.csv"), ["z", "log_max_abs_d", "log_bound"],
                          [(z, math.log(max(d, 1e-300)), b) for z, d, b in zip(zg, d_abs, growth)])
                write_gnuplot(os.path.join(out, "growth.gp"), "growth.csv",
                              "log|d(z)| vs growth bound", "|z|", "log", logy=False)
            write_json(os.path.join(out, "bounds.json"), self._wrap("bounds", body))
        return body, checks

    def _order_bounds(self) -> list:
        rows = []
        for g in self.cfg.options.gammas:
            try:
                rows.append({"gamma": g, "order_bound": order_bound(self.M, g, self.T.lam)})
            except ValueError:
                rows.append({"gamma": g, "order_bound": None})
        return rows

    def _class_envelope(self) -> dict | None:
        kind = self.M.kind
        if kind == "gevrey":
            sigma = self.M.params["sigma"]
            ms = np.arange(1, self.K + 1)
            S = sv_envelope(self.M, self.cfg.theta, self.sv_bound.A, ms)
            ok = np.isfinite(S)
            fit = fit_envelope("gevrey_sv", {"sigma": sigma}, ms[ok], S[ok])
            return {"name": "gevrey_sv", "fitted_constants": {"c": fit.c}, "violations": fit.violations,
                    "grid": ms[ok], "values": S[ok]}
        if kind == "analytic":
            s = self.svals
            ms = np.arange(1, s.size)
            fit = fit_envelope("gevrey_sv", {"sigma": 1.0}, ms, s[1:])
            return {"name": "gevrey_sv", "fitted_constants": {"c": fit.c}, "violations": fit.violations,
                    "grid": ms, "values": s[1:]}
        if kind == "alpha_beta" and self.M.params["beta"] > 1:
            xs = np.logspace(-6, math.log10(0.5), 61)
            _, k = log_weight(self.M, xs)
            fit = fit_envelope("ab_k_lower", {"beta": self.M.params["beta"]}, xs, k)
            return {"name": "ab_k_lower", "fitted_constants": {"c": fit.c}, "violations": fit.violations,
                    "grid": xs, "values": k}
        return None

    def run(self, command: str) -> tuple[dict, list[Check]]:
        out = ensure_dir(self.cfg.out)
        if command == "class":
            return self.class_report(out)
        if command == "spectrum":
            return self.spectrum_report(out)
        if command == "determinant":
            return self.determinant_report(out)
        if command == "bounds":
            return self.bounds_report(out)
        if command == "verify":
            checks = []
            for stage in (self.class_report, self.spectrum_report, self.determinant_report,
                          self.bounds_report):
                checks.extend(stage(out)[1])
            body = {"checks": [c.as_dict() for c in checks],
                    "passed": all(c.passed for c in checks)}
            write_json(os.path.join(out, "verify.json"), self._wrap("verify", body))
            return body, checks
        raise ValueError(f"unknown command {command!r}")

"""Verification pipelines run by the CLI.

Each pipeline returns a JSON-able result dict and appends to a shared list
of assertions; the CLI maps assertion failures to exit code 2.  Premise
checks (drift conditions) gate the statements that depend on them: when a
config omits the corresponding section, the dependent inequalities are
reported but not asserted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import fractional, spectral
from .config import ExperimentConfig
from .groups import euclidean, heisenberg1
from .grids import assemble, build_grid
from .weights import (build_lyapunov, condition_infimum,
                      improved_condition_infimum, library, polynomial_weight,
                      verify_lyapunov)

PIPELINE_NAMES = ("check-lyapunov", "poincare-gap", "improved-gap", "offdiag",
                  "quadratic-id", "covering", "nonlocal", "all")


@dataclass
class RunContext:
    cfg: ExperimentConfig
    instance: object
    weight: object
    grid: object
    forms: object
    assertions: list = field(default_factory=list)
    csv_tables: dict = field(default_factory=dict)

    def check(self, name: str, holds: bool, detail: str = "") -> bool:
        self.assertions.append({"name": name, "holds": bool(holds),
                                "detail": detail})
        return bool(holds)


def _as_float_list(x) -> list:
    return [float(v) for v in x]


def build_context(cfg: ExperimentConfig) -> RunContext:
    instance = heisenberg1() if cfg.group == "heisenberg1" else euclidean(cfg.dimension)
    if cfg.weight == "poly":
        weight = polynomial_weight(instance, cfg.weight_poly)
    else:
        weight = library(instance, cfg.weight)
    grid = build_grid(instance, weight, cfg.resolution, cfg.domain_radius)
    forms = assemble(grid, weight)
    return RunContext(cfg=cfg, instance=instance, weight=weight,
                      grid=grid, forms=forms)


# -- individual pipelines -----------------------------------------------------


def run_check_lyapunov(ctx: RunContext) -> dict:
    cfg = ctx.cfg
    params = cfg.lyapunov
    if params is None:
        return {"skipped": "no [lyapunov] section"}
    a, c, R = params["a"], params["c"], params["R"]
    inf_res = condition_infimum(ctx.instance, ctx.weight, a, R,
                                cfg.domain_radius, n_samples=params["n_samples"],
                                seed=cfg.seed, grid=ctx.grid)
    premise = inf_res.value >= c
    ctx.check("lyapunov.premise",
              premise,
              f"shell infimum {inf_res.value:.6g} vs c={c}")
    result = {
        "a": a, "c": c, "R": R,
        "condition_infimum": inf_res.value,
        "infimum_witness": _as_float_list(inf_res.witness),
        "premise_holds": bool(premise),
    }
    if not premise:
        return result

    cert = build_lyapunov(ctx.instance, ctx.weight, a, c, R, ctx.grid,
                          n_samples=params["n_samples"], seed=cfg.seed)
    report = verify_lyapunov(cert, ctx.grid)
    ctx.check("lyapunov.drift_inequality",
              report.max_violation <= 1e-9,
              f"max violation {report.max_violation:.3e}")
    result.update({
        "gamma": cert.gamma, "theta": cert.theta, "b": cert.b,
        "inf_v": cert.inf_v,
        "max_violation": report.max_violation,
        "violation_witness": _as_float_list(report.witness),
        "non_informative": report.non_informative,
    })

    # the form inequality behind the gap proof, on random node vectors
    W = cert.W(ctx.grid.nodes)
    rng = np.random.default_rng(cfg.seed + 1)
    n_fail = 0
    worst = -math.inf
    for _ in range(params["n_random_f"]):
        f = rng.standard_normal(ctx.forms.n_nodes)
        out = spectral.lempoinc_check(ctx.forms, W, f)
        worst = max(worst, out["lhs"] - out["rhs"])
        if not out["holds"]:
            n_fail += 1
    ctx.check("lyapunov.form_inequality",
              n_fail == 0,
              f"{n_fail} failures over {params['n_random_f']} random f, "
              f"worst lhs-rhs {worst:.3e}")
    result["form_inequality_failures"] = n_fail
    result["form_inequality_worst_gap"] = worst
    return result


def run_poincare_gap(ctx: RunContext) -> dict:
    vals, _ = spectral.smallest_eigenpairs(ctx.forms, k=3, which="B",
                                           seed=ctx.cfg.seed)
    lambda1 = float(vals[0])
    premise_verified = False
    if ctx.cfg.lyapunov is not None:
        inf_res = condition_infimum(ctx.instance, ctx.weight,
                                    ctx.cfg.lyapunov["a"], ctx.cfg.lyapunov["R"],
                                    ctx.cfg.domain_radius,
                                    n_samples=ctx.cfg.lyapunov["n_samples"],
                                    seed=ctx.cfg.seed, grid=ctx.grid)
        premise_verified = inf_res.value >= ctx.cfg.lyapunov["c"]
    if premise_verified:
        ctx.check("poincare.gap_positive", lambda1 >= 1e-6,
                  f"lambda1 = {lambda1:.6g} with verified drift premise")
    return {
        "lambda1": lambda1,
        "poincare_constant": 1.0 / lambda1 if lambda1 > 0 else math.inf,
        "eigenvalues": _as_float_list(vals),
        "premise_verified": premise_verified,
    }


def run_improved_gap(ctx: RunContext) -> dict:
    cfg = ctx.cfg
    params = cfg.improved
    if params is None:
        return {"skipped": "no [improved] section"}
    inf_res = improved_condition_infimum(ctx.instance, ctx.weight,
                                         params["epsilon"], params["R"],
                                         cfg.domain_radius,
                                         n_samples=params["n_samples"],
                                         seed=cfg.seed, grid=ctx.grid)
    premise = inf_res.value > 0.0
    ctx.check("improved.premise", premise,
              f"improved shell infimum {inf_res.value:.6g}")
    result = {
        "epsilon": params["epsilon"], "R": params["R"],
        "improved_condition_infimum": inf_res.value,
        "infimum_witness": _as_float_list(inf_res.witness),
        "premise_holds": bool(premise),
    }
    if not premise:
        return result
    vals, vecs = spectral.smallest_eigenpairs(ctx.forms, k=1, which="B_mu",
                                              seed=cfg.seed)
    lam_w = float(vals[0])
    lambda1 = spectral.poincare_gap(ctx.forms, seed=cfg.seed)
    u = vecs[:, 0]
    rayleigh = float((u @ (ctx.forms.D @ u)) / (u @ (ctx.forms.B_mu * u)))
    ctx.check("improved.gap_positive", lam_w > 0.0, f"lambda_weighted {lam_w:.6g}")
    ctx.check("improved.rayleigh_certificate",
              abs(rayleigh - lam_w) <= 1e-8 * max(lam_w, 1e-300),
              f"rayleigh {rayleigh:.12g} vs {lam_w:.12g}")
    ctx.check("improved.dominated_by_gap", lam_w <= lambda1 + 1e-10,
              f"lambda_weighted {lam_w:.6g} vs lambda1 {lambda1:.6g}")
    result.update({"lambda_weighted": lam_w, "lambda1": lambda1,
                   "rayleigh": rayleigh})
    return result


def run_offdiag(ctx: RunContext) -> dict:
    cfg = ctx.cfg
    params = cfg.offdiag
    axis = params["axis"]
    width = params["width"]
    lo, hi = ctx.grid.bounds[axis]
    coords = ctx.grid.nodes[:, axis]
    e_idx = np.flatnonzero(coords <= lo + width)
    f_idx = np.flatnonzero(coords >= hi - width)
    res = spectral.offdiag_experiment(ctx.forms, e_idx, f_idx, params["t_list"])
    ctx.check("offdiag.negative_slope", res.slope < 0.0,
              f"slope {res.slope:.4f}")
    ctx.check("offdiag.fit_quality", res.r_squared >= params["r2_min"],
              f"r^2 {res.r_squared:.4f} vs min {params['r2_min']}")
    ctx.check("offdiag.bound_dominates", res.bound_holds,
              "8 exp(slope d/sqrt(t) + intercept) against every sample")
    ctx.csv_tables["offdiag_curve"] = {
        "header": ["t", "r1", "r2", "bound"],
        "rows": [list(map(float, row)) for row in res.rows],
    }
    return {
        "distance": res.distance,
        "n_E": int(e_idx.size), "n_F": int(f_idx.size),
        "fit": res.fit(),
        "rows": [list(map(float, row)) for row in res.rows],
    }


def run_quadratic_id(ctx: RunContext) -> dict:
    cfg = ctx.cfg
    params = cfg.quadratic
    forms = ctx.forms
    t_grid = spectral.default_t_grid(forms, n=params["t_nodes"])
    rng = np.random.default_rng(cfg.seed + 2)
    F = rng.standard_normal((forms.n_nodes, params["n_functions"]))
    means = (forms.B @ F) / forms.B.sum()
    F = F - means[None, :]
    profiles = spectral.resolvent_profile(forms, F, t_grid, method="direct")
    rows = []
    worst = 0.0
    for alpha in params["alpha_list"]:
        target = spectral.quadratic_constant(alpha)
        for j in range(F.shape[1]):
            integral = spectral.quadratic_from_profile(t_grid, profiles[:, j], alpha)
            norm_sq = spectral.frac_norm_sq(forms, F[:, j], alpha)
            ratio = integral / norm_sq
            rel = abs(ratio / target - 1.0)
            worst = max(worst, rel)
            rows.append([float(alpha), j, float(integral), float(norm_sq),
                         float(ratio)])
    ctx.check("quadratic.identity", worst <= params["rtol"],
              f"worst relative deviation {worst:.3e} vs "
              f"gamma-product targets (rtol {params['rtol']})")
    ctx.csv_tables["quadratic_values"] = {
        "header": ["alpha", "f_index", "integral", "frac_norm_sq", "ratio"],
        "rows": rows,
    }
    return {
        "alpha_list": _as_float_list(params["alpha_list"]),
        "n_functions": params["n_functions"],
        "t_nodes": params["t_nodes"],
        "t_range": [float(t_grid[0]), float(t_grid[-1])],
        "worst_relative_deviation": worst,
        "rows": rows,
    }


def run_covering(ctx: RunContext) -> dict:
    cfg = ctx.cfg
    params = cfg.covering
    results = {}
    for t in params["t_list"]:
        net = fractional.build_net(ctx.grid, t)
        seps = ctx.instance.pairwise_cc(net.centers, net.centers)
        np.fill_diagonal(seps, math.inf)
        min_sep = float(seps.min()) if net.n_centers > 1 else math.inf
        sep_ok = min_sep >= 2.0 * net.separation_radius * (1 - 1e-9)
        cover_ok = net.max_gap <= net.cover_radius * (1 + 1e-9)
        ctx.check(f"covering.separation[t={t:g}]", sep_ok,
                  f"min center separation {min_sep:.6g} vs 2 sqrt(t)")
        ctx.check(f"covering.cover[t={t:g}]", cover_ok,
                  f"max node gap {net.max_gap:.6g} vs 2 sqrt(t)")
        overlaps = fractional.overlap_bound_check(net, ctx.grid,
                                                 params["theta_list"])
        results[f"{t:g}"] = {
            "n_centers": net.n_centers,
            "min_separation": min_sep,
            "max_gap": net.max_gap,
            "overlap": {f"{th:g}": v for th, v in overlaps.items()},
        }
        ctx.csv_tables[f"net_t{t:g}"] = {
            "header": [f"c{a}" for a in range(ctx.grid.dim)],
            "rows": [list(map(float, c)) for c in net.centers],
        }
    cstar = max(v["overlap"][th]["normalized"]
                for v in results.values() for th in v["overlap"])
    return {"nets": results, "overlap_constant": float(cstar)}


def run_nonlocal(ctx: RunContext) -> dict:
    cfg = ctx.cfg
    params = cfg.nonlocal_
    forms = ctx.forms
    result: dict = {}

    premise_verified = False
    lam_w = None
    if cfg.improved is not None:
        inf_res = improved_condition_infimum(
            ctx.instance, ctx.weight, cfg.improved["epsilon"], cfg.improved["R"],
            cfg.domain_radius, n_samples=cfg.improved["n_samples"],
            seed=cfg.seed, grid=ctx.grid)
        premise_verified = inf_res.value > 0.0
        if premise_verified:
            lam_w = spectral.improved_gap(forms, seed=cfg.seed)
    result["premise_verified"] = premise_verified

    if premise_verified and forms.n_nodes <= spectral.DENSE_CEILING:
        calc = {}
        for alpha in params["alpha_list"]:
            out = spectral.functional_calculus_check(forms, alpha, lam=lam_w)
            calc[f"{alpha:g}"] = out
            ctx.check(f"nonlocal.functional_calculus[alpha={alpha:g}]",
                      out["holds"], f"min eigenvalue {out['min_eig']:.3e}")
        result["functional_calculus"] = calc

    family = fractional.default_test_family(
        forms, n_eigenvectors=params["n_eigenvectors"],
        n_bumps=params["n_bumps"], seed=cfg.seed + 3)
    estimates = {}
    for alpha in params["alpha_list"]:
        rep = fractional.lambda_alpha_estimate(forms, alpha, family=family)
        estimates[f"{alpha:g}"] = rep.as_dict()
        ctx.check(f"nonlocal.lambda_alpha_positive[alpha={alpha:g}]",
                  rep.lambda_alpha_estimate > 0.0,
                  f"estimate {rep.lambda_alpha_estimate:.6g}")
    result["lambda_alpha"] = estimates

    # annulus table at the configured net scale
    t_net = params["annulus_t"]
    net = fractional.build_net(ctx.grid, t_net)
    ann_rows = []
    ann_f = [("coordinate_0", ctx.grid.nodes[:, 0].copy())]
    rng = np.random.default_rng(cfg.seed + 4)
    lo = np.array([b[0] for b in ctx.grid.bounds])
    hi = np.array([b[1] for b in ctx.grid.bounds])
    for k in range(2):
        center = lo + (hi - lo) * (0.25 + 0.5 * rng.random(ctx.grid.dim))
        sigma = float((hi - lo).min()) * 0.15
        d2 = ((ctx.grid.nodes - center) ** 2).sum(axis=1)
        ann_f.append((f"bump_{k}", np.exp(-d2 / (2 * sigma * sigma))))
    cbar = 0.0
    for name, f in ann_f:
        for j in range(net.n_centers):
            for k in range(params["k_max"] + 1):
                out = fractional.annulus_check(ctx.grid, ctx.weight, net, f,
                                               j, k, t_net)
                if out is None:
                    continue
                cbar = max(cbar, out["ratio"])
                ann_rows.append([name, j, k, out["lhs"], out["rhs"],
                                 out["ratio"]])
    ctx.check("nonlocal.annulus_finite", math.isfinite(cbar),
              f"fitted annulus constant {cbar:.6g}")
    result["annulus"] = {"t": t_net, "n_centers": net.n_centers,
                         "fitted_constant": cbar}
    ctx.csv_tables["annulus"] = {
        "header": ["f", "j", "k", "lhs", "rhs", "ratio"],
        "rows": ann_rows,
    }

    # resolvent-quadrature energy against the non-local energy
    rng = np.random.default_rng(cfg.seed + 5)
    t_grid = spectral.default_t_grid(forms, n=cfg.quadratic["t_nodes"])
    control = {}
    chain_ok = True
    chain_detail = []
    for alpha in params["alpha_list"]:
        ratios = []
        for _ in range(params["n_random"]):
            f = rng.standard_normal(forms.n_nodes)
            f -= forms.b_mean(f)
            out = fractional.controllalpha_check(forms, f, alpha, t_grid=t_grid)
            ratios.append(out["ratio"])
            if premise_verified and lam_w is not None \
                    and forms.n_nodes <= spectral.DENSE_CEILING:
                lhs = out["lhs"]
                gamma_prod = spectral.quadratic_constant(alpha)
                mass = float(np.sum(f * f * forms.mu_nodes ** (alpha / 2.0)
                                    * forms.B))
                chain_rhs = gamma_prod * lam_w ** (alpha / 2.0) * mass
                ok = lhs >= chain_rhs * (1.0 - 1e-6) - 1e-12
                chain_ok = chain_ok and ok
                if not ok:
                    chain_detail.append(f"alpha={alpha:g}: {lhs:.6g} < {chain_rhs:.6g}")
        control[f"{alpha:g}"] = {
            "ratios": _as_float_list(ratios),
            "fitted_constant": float(max(ratios)),
        }
        ctx.check(f"nonlocal.control_ratio_finite[alpha={alpha:g}]",
                  all(math.isfinite(r) for r in ratios),
                  f"max ratio {max(ratios):.6g}")
    if premise_verified and forms.n_nodes <= spectral.DENSE_CEILING:
        ctx.check("nonlocal.theorem_chain", chain_ok,
                  "; ".join(chain_detail) if chain_detail else
                  "quadrature energy dominates the weighted mass chain")
    result["control"] = control
    return result


_PIPELINE_FUNCS = {
    "check-lyapunov": run_check_lyapunov,
    "poincare-gap": run_poincare_gap,
    "improved-gap": run_improved_gap,
    "offdiag": run_offdiag,
    "quadratic-id": run_quadratic_id,
    "covering": run_covering,
    "nonlocal": run_nonlocal,
}


def run(cfg: ExperimentConfig, subcommand: str) -> tuple[dict, RunContext]:
    """Execute the requested pipeline(s); returns (report body, context)."""
    if subcommand not in PIPELINE_NAMES:
        raise ValueError(f"unknown pipeline {subcommand!r}")
    ctx = build_context(cfg)
    names = [n for n in _PIPELINE_FUNCS] if subcommand == "all" else [subcommand]
    pipelines = {}
    for name in names:
        if subcommand != "all":
            if name == "check-lyapunov" and cfg.lyapunov is None:
                raise ValueError("check-lyapunov requires a [lyapunov] section")
            if name == "improved-gap" and cfg.improved is None:
                raise ValueError("improved-gap requires an [improved] section")
        pipelines[name] = _PIPELINE_FUNCS[name](ctx)
    body = {
        "grid": {
            "n_nodes": ctx.grid.n_nodes,
            "bounds": [list(b) for b in ctx.grid.bounds],
            "spacing": _as_float_list(ctx.grid.spacing),
            "tail_estimate": float(ctx.grid.tail_estimate),
        },
        "group": {
            "kind": ctx.instance.kind,
            "dimension": ctx.instance.dim,
            "growth": _as_float_list(ctx.instance.growth_exponents()),
            "volume_constant": float(ctx.instance.volume_constant),
        },
        "pipelines": pipelines,
        "assertions": ctx.assertions,
        "all_hold": all(a["holds"] for a in ctx.assertions),
    }
    return body, ctx

"""Monte Carlo rate sweeps."""

from __future__ import annotations

import math

import numpy as np

from ..estimators import (FitResult, both_worlds_mu, evaluate, fit_bennett_flip, fit_both_worlds, fit_dikkala,
                          fit_liao, fit_penalized_minimax, liao_alpha, population_moments)
from ..funclass import FiniteFamily, make_realizable_families
from ..scenario import Scenario, sample, scenario_from_config
from ..theory import check_main_bound, empirical_sup
from .config import FamilySpec, RunConfig
from .reports import RateReport, RateRow
from .seeds import family_seed, replication_seed


def fit_loglog_slope(points) -> tuple[float, float]:
    """OLS of log(value) on log(n); returns (slope, standard error).

    The standard error is 0 for two points or an exact fit.
    """
    pts = [(float(n), float(v)) for n, v in points]
    if len(pts) < 2:
        raise ValueError("need at least two points")
    if any(not (v > 0 and n > 0) for n, v in pts):
        raise ValueError("log-log fit needs positive n and values")
    x = np.log([p[0] for p in pts])
    y = np.log([p[1] for p in pts])
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx == 0:
        raise ValueError("need at least two distinct n")
    slope = float(xc @ (y - y.mean())) / sxx
    if len(pts) == 2:
        return slope, 0.0
    resid = y - y.mean() - slope * xc
    s2 = float(resid @ resid) / (len(pts) - 2)
    return slope, math.sqrt(s2 / sxx)


def build_families(scenario: Scenario, n: int, spec: FamilySpec, master_seed: int) -> tuple[FiniteFamily, FiniteFamily]:
    """Families for sample size n: h0 and the multiplier plus seeded distractors."""
    seed = family_seed(master_seed) if spec.seed is None else spec.seed
    H, G = make_realizable_families(
        scenario.truth, scenario.design.x_space, scenario.design.z_space, spec.distractors, spec.scale_at(n), seed,
        g_distractors=spec.g_distractors, g_scale=spec.g_scale, recipe=spec.recipe, eps_h=spec.eps_h,
        eps_g=spec.eps_g)
    if spec.include_structural and not H.contains(scenario.h_star, 1e-12):
        H = H.with_member(scenario.h_star, "structural")
    return H, G


def fit_estimator(name: str, data, H: FiniteFamily, G: FiniteFamily, hyper: dict, n: int) -> FitResult:
    """Dispatch one finite-family estimator with its configured hyperparameters."""
    if name == "penalized_minimax":
        return fit_penalized_minimax(data, H, G)
    if name == "dikkala":
        return fit_dikkala(data, H, G)
    if name == "liao":
        alpha = hyper.get("alpha")
        return fit_liao(data, H, G, liao_alpha(n, hyper.get("c", 1.0)) if alpha is None else alpha)
    if name == "bennett_flip":
        return fit_bennett_flip(data, H, G)
    if name == "both_worlds":
        mu = hyper.get("mu")
        if mu is None:
            mu = both_worlds_mu(H.sup_bound, G.sup_bound, len(H), len(G), hyper.get("delta", 0.1), n,
                                hyper.get("c", 1.0))
        return fit_both_worlds(data, H, G, mu)
    raise ValueError(f"unknown estimator {name!r}")


def _summary(name: str, n: int, recs: list[dict]) -> RateRow:
    ok = [r for r in recs if r.get("error") is None]
    l2 = np.array([r["l2_error"] for r in ok]) if ok else np.array([math.nan])
    pm = np.array([r["projected_mse"] for r in ok]) if ok else np.array([math.nan])
    inset = [r["h0_in_set"] for r in ok if r.get("h0_in_set") is not None]
    return RateRow(
        estimator=name, n=n, reps=len(ok),
        l2_mean=float(l2.mean()), l2_median=float(np.median(l2)),
        l2_q10=float(np.quantile(l2, 0.1)), l2_q90=float(np.quantile(l2, 0.9)),
        proj_mse_mean=float(pm.mean()), proj_mse_median=float(np.median(pm)),
        violations=int(sum(1 for r in ok if r.get("violation"))),
        failures=len(recs) - len(ok),
        h0_in_set=float(np.mean(inset)) if inset else None,
    )


def _log_means(recs: list[dict], key: str) -> float:
    # geometric mean, i.e. the mean of logs mapped back; nan if any value is not positive
    vals = np.array([r[key] for r in recs if r.get("error") is None])
    return float(np.exp(np.mean(np.log(vals)))) if vals.size and np.all(vals > 0) else math.nan


def _slopes(rows: list[RateRow], recs: list[dict]) -> dict:
    """Slopes of means (the headline), medians and means of logs."""
    pts = {m: [(r.n, getattr(r, m)) for r in rows] for m in ("l2_mean", "proj_mse_mean", "l2_median",
                                                            "proj_mse_median")}
    for key, metric in (("l2_error", "l2_logmean"), ("projected_mse", "proj_mse_logmean")):
        pts[metric] = [(r.n, _log_means([x for x in recs if x["n"] == r.n], key)) for r in rows]
    out = {}
    for metric, p in pts.items():
        try:
            out[metric] = list(fit_loglog_slope(p))
        except ValueError:
            out[metric] = None
    return out


def _replication(scenario: Scenario, name: str, n: int, rep: int, cfg: RunConfig, H, G) -> dict:
    seed = replication_seed(cfg.master_seed, name, n, rep)
    rec = {"estimator": name, "n": n, "rep": rep, "seed": seed, "error": None}
    try:
        data = population_moments(scenario) if cfg.population else sample(scenario, n, seed)
        fit = fit_estimator(name, data, H, G, cfg.estimators[name], n)
        m = evaluate(fit, scenario.truth, scenario.op)
        rec.update(l2_error=m.l2_error, projected_mse=m.projected_mse, h_index=fit.h_index)
        if name == "both_worlds":
            rec["h0_in_set"] = bool(0 in fit.diagnostics["confidence_set"])
        if name == "penalized_minimax" and cfg.check_bounds and not cfg.population:
            M = empirical_sup(scenario, data, H, G)
            b = check_main_bound(fit, scenario.truth, M, scenario.design.x_space, H=H, G=G, op=scenario.op)
            rec.update(M=M, violation=b.status == "fail", proven_violation=not b.quantities["proven_passed"])
    except Exception as exc:  # a failed replication marks its cell, never aborts the sweep
        rec["error"] = f"{type(exc).__name__}: {exc}"
    return rec


def run_rate_sweep(config: RunConfig, scenario: Scenario | None = None) -> RateReport:
    """Sample, fit and evaluate every (estimator, n, replication) of the config.

    Each replication draws its own dataset from a seed derived from
    (master seed, estimator, n, replication), so the result of one estimator
    does not depend on which others are run.
    """
    cfg = config.validate()
    sc = scenario if scenario is not None else scenario_from_config(cfg.scenario)
    reps = 1 if cfg.population else cfg.reps
    rows, recs_all = [], []
    for name in cfg.estimators:
        for n in cfg.n_grid:
            H, G = build_families(sc, n, cfg.families, cfg.master_seed)
            recs = [_replication(sc, name, n, r, cfg, H, G) for r in range(reps)]
            rows.append(_summary(name, n, recs))
            recs_all.extend(recs)
    slopes = {name: _slopes([r for r in rows if r.estimator == name], [x for x in recs_all if x["estimator"] == name])
              for name in cfg.estimators}
    seeds = [[r["estimator"], r["n"], r["rep"], r["seed"]] for r in recs_all]
    echo = cfg.to_dict()
    echo.pop("out_dir")
    return RateReport(rows, slopes, echo, cfg.config_hash(), seeds, recs_all)

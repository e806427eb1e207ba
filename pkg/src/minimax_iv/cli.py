"""Command line entry point: ``minimax-iv {scenario,fit,rates,verify}``.

Exit status is 0 when every check passes, 1 on a check failure or bound
violation and 2 on an invalid configuration.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .estimators import evaluate
from .funclass import save_families
from .harness.config import OUT_ENV, ConfigError, RunConfig, load_config
from .harness.reports import emit_reports
from .harness.seeds import replication_seed
from .harness.sweep import build_families, fit_estimator, run_rate_sweep
from .harness.verify import verify_suite
from .scenario import sample, scenario_from_config
from .theory import check_main_bound, empirical_sup

EXIT_OK, EXIT_CHECK, EXIT_CONFIG = 0, 1, 2


def output_dir(args, cfg: RunConfig) -> str:
    """``--out``, then the environment override, then the config, then ``results``."""
    return args.out or os.environ.get(OUT_ENV) or cfg.out_dir or "results"


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig().validate()
    return cfg.with_seed(args.seed)


def _scenario(cfg: RunConfig):
    try:
        return scenario_from_config(cfg.scenario)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid scenario: {exc}") from exc


def _dump(obj, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1)


def cmd_scenario(args, cfg: RunConfig, out: str) -> int:
    sc = _scenario(cfg)
    H, G = build_families(sc, cfg.n, cfg.families, cfg.master_seed)
    _dump({**sc.to_dict(), "config_hash": cfg.config_hash()}, os.path.join(out, "scenario.json"))
    save_families(os.path.join(out, "families.json"), H, G, {"config_hash": cfg.config_hash(), "n": cfg.n})
    print(f"scenario {sc.name or '-'}: |X|={sc.nx} |Z|={sc.nz} null dim={sc.truth.null_basis.shape[0]} "
          f"|H|={len(H)} |G|={len(G)} -> {out}")
    return EXIT_OK


def cmd_fit(args, cfg: RunConfig, out: str) -> int:
    sc = _scenario(cfg)
    H, G = build_families(sc, cfg.n, cfg.families, cfg.master_seed)
    # one dataset for all estimators, drawn with the first estimator's replication-0 seed
    seed = replication_seed(cfg.master_seed, next(iter(cfg.estimators)), cfg.n, 0)
    data = sample(sc, cfg.n, seed)
    fits, status = {}, EXIT_OK
    for name, hyper in cfg.estimators.items():
        fit = fit_estimator(name, data, H, G, hyper, cfg.n)
        entry = {"fit": fit.to_dict(), "metrics": evaluate(fit, sc.truth, sc.op).to_dict()}
        if name == "penalized_minimax" and cfg.check_bounds:
            rep = check_main_bound(fit, sc.truth, empirical_sup(sc, data, H, G), sc.design.x_space,
                                   H=H, G=G, op=sc.op)
            entry["main_bound"] = rep.to_dict()
            if rep.status == "fail":
                status = EXIT_CHECK
        fits[name] = entry
        m = entry["metrics"]
        print(f"{name:18s} l2={m['l2_error']:.6g} proj_mse={m['projected_mse']:.6g}")
    with open(os.path.join(out, "dataset.csv"), "w") as fh:
        fh.write(data.to_csv())
    _dump({"config_hash": cfg.config_hash(), "n": cfg.n, "seed": seed, "fits": fits}, os.path.join(out, "fit.json"))
    return status


def _slope_text(v) -> str:
    return "n/a" if v is None else f"{v[0]:+.3f} (se {v[1]:.3f})"


def cmd_rates(args, cfg: RunConfig, out: str) -> int:
    report = run_rate_sweep(cfg)
    paths = emit_reports(report, out)
    for name, s in report.slopes.items():
        l2, pm = s.get("l2_mean"), s.get("proj_mse_mean")
        print(f"{name:18s} l2 slope {_slope_text(l2)}  proj_mse slope {_slope_text(pm)}")
    bad = sum(r.violations for r in report.rows)
    incomplete = [f"{r.estimator}@{r.n}" for r in report.rows if not r.complete]
    if incomplete:
        print(f"incomplete cells: {', '.join(incomplete)}", file=sys.stderr)
    if bad:
        print(f"bound violations: {bad}", file=sys.stderr)
    print("wrote " + ", ".join(paths))
    return EXIT_CHECK if bad or incomplete else EXIT_OK


def cmd_verify(args, cfg: RunConfig, out: str) -> int:
    summary = verify_suite(cfg)
    for check, row in summary.counts.items():
        flag = "ok  " if row["fail"] == 0 else "FAIL"
        print(f"{flag} {check:28s} pass={row['pass']} fail={row['fail']} unmet={row['unmet']}")
    with open(os.path.join(out, "verify.json"), "w") as fh:
        fh.write(summary.to_json())
    return EXIT_OK if summary.ok else EXIT_CHECK


COMMANDS = {"scenario": cmd_scenario, "fit": cmd_fit, "rates": cmd_rates, "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="minimax-iv", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "scenario": "build a scenario and its families and save them",
        "fit": "fit every configured estimator on one sampled dataset",
        "rates": "run the Monte Carlo rate sweep and write rates.csv / rates.json",
        "verify": "run the verification suite and write verify.json",
    }
    for name, text in helps.items():
        sp = sub.add_parser(name, help=text)
        sp.add_argument("--config", help="JSON run configuration (defaults are used when omitted)")
        sp.add_argument("--seed", type=int, help="override the master seed")
        sp.add_argument("--out", help=f"output directory (overrides ${OUT_ENV} and the config)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config(args)
        out = output_dir(args, cfg)
        os.makedirs(out, exist_ok=True)
        return COMMANDS[args.command](args, cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

"""Verification suite: runs every theory check over seeded scenarios and counts outcomes."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..estimators import evaluate, fit_penalized_minimax, population_moments
from ..funclass import FiniteFamily, make_realizable_families
from ..scenario import (Scenario, make_spectral_spec, random_spectral_spec, sample, scenario_from_config,
                        spectral_scenario)
from ..theory import (check_game_restriction, check_main_bound, check_misspec_bound, check_restriction_lemma,
                      check_saddle, empirical_sup, envelope_constant, finite_class_term, multiplier_witness,
                      source_identity)
from .config import RunConfig
from .seeds import derive_seed

CHECKS = (
    "identification", "main_bound", "main_bound_proven", "misspec_bound", "misspec_bound_proven", "saddle",
    "saddle_null_shift_rejected", "multiplier_witness", "restriction_lemma", "restriction_game",
    "restriction_guard", "source_identity", "source_growth",
)
IDENT_TOL = 1e-9
SOURCE_TOL = 1e-6
OUTCOMES = ("pass", "fail", "unmet")


@dataclass
class VerifySummary:
    """Outcome counts per check plus the worst cases seen.

    ``counts[check]`` maps ``"pass"``, ``"fail"`` and ``"unmet"`` (precondition
    not met, so no claim) to integers.  ``ok`` is false as soon as any check
    has a failure.
    """

    counts: dict = field(default_factory=dict)
    config_hash: str = ""
    details: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(c.get("fail", 0) == 0 for c in self.counts.values())

    def record(self, check: str, outcome: str) -> None:
        if outcome not in OUTCOMES:
            raise ValueError(f"unknown outcome {outcome!r}")
        row = self.counts.setdefault(check, {k: 0 for k in OUTCOMES})
        row[outcome] += 1

    def failed_checks(self) -> list[str]:
        return [c for c, row in self.counts.items() if row.get("fail", 0)]

    def to_dict(self) -> dict:
        return {"config_hash": self.config_hash, "ok": self.ok, "counts": self.counts, "details": self.details}

    @classmethod
    def from_dict(cls, d: dict) -> "VerifySummary":
        return cls(d.get("counts", {}), d.get("config_hash", ""), d.get("details", {}))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)


def aggregate_summaries(summaries) -> VerifySummary:
    """Sum counts of summaries produced from the same configuration.

    Raises
    ------
    ValueError
        If the summaries carry different config hashes.
    """
    summaries = list(summaries)
    if not summaries:
        raise ValueError("nothing to aggregate")
    hashes = {s.config_hash for s in summaries}
    if len(hashes) != 1:
        raise ValueError(f"refusing to aggregate summaries with different config hashes: {sorted(hashes)}")
    out = VerifySummary(config_hash=summaries[0].config_hash)
    for s in summaries:
        for check, row in s.counts.items():
            tgt = out.counts.setdefault(check, {k: 0 for k in OUTCOMES})
            for k in OUTCOMES:
                tgt[k] += int(row.get(k, 0))
        for key, val in s.details.items():
            out.details.setdefault(key, []).append(val)
    return out


def _outcome(status: str) -> str:
    return "unmet" if status == "precondition unmet" else status


def _scenarios(cfg: RunConfig) -> tuple[list[Scenario], list[Scenario]]:
    """Shipped fixtures and seeded random spectral scenarios."""
    fixtures = [scenario_from_config({"fixture": f}) for f in ("W1", "W2", "default")]
    rng = np.random.default_rng(derive_seed(cfg.master_seed, "verify", "scenarios"))
    randoms = [spectral_scenario(random_spectral_spec(rng), f"random{i}")
               for i in range(int(cfg.verify["random_scenarios"]))]
    return fixtures, randoms


def _families(sc: Scenario, cfg: RunConfig, *parts, eps_h: float = 0.0, eps_g: float = 0.0):
    v = cfg.verify
    return make_realizable_families(sc.truth, sc.design.x_space, sc.design.z_space, int(v["distractors"]),
                                    float(v["scale"]), derive_seed(cfg.master_seed, "verify", *parts),
                                    eps_h=eps_h, eps_g=eps_g)


def _drop_first(F: FiniteFamily) -> FiniteFamily:
    return FiniteFamily(F.members[1:], F.space, None, F.tags[1:] if F.tags else ())


def _identification(summary: VerifySummary, randoms, cfg: RunConfig) -> None:
    worst = 0.0
    for i, sc in enumerate(randoms):
        H, G = _families(sc, cfg, "identification", i)
        err = evaluate(fit_penalized_minimax(population_moments(sc), H, G), sc.truth, sc.op).l2_error
        worst = max(worst, err)
        summary.record("identification", "pass" if err < IDENT_TOL else "fail")
    summary.details["identification_worst_l2"] = worst


def _main_bound(summary: VerifySummary, pool, cfg: RunConfig) -> None:
    """Seeded replications; seed s uses scenario s mod |pool| at every n."""
    v = cfg.verify
    worst_ratio, lhs_all, terms = 0.0, [], []
    for s in range(int(v["seeds"])):
        k = s % len(pool)
        sc = pool[k]
        H, G = _families(sc, cfg, "main", k, s)
        if v.get("exclude_h0"):
            H = _drop_first(H)
        for n in v["n_values"]:
            data = sample(sc, int(n), derive_seed(cfg.master_seed, "verify", "main-data", k, s, int(n)))
            fit = fit_penalized_minimax(data, H, G)
            M = empirical_sup(sc, data, H, G)
            rep = check_main_bound(fit, sc.truth, M, sc.design.x_space, H=H, G=G, op=sc.op)
            summary.record("main_bound", _outcome(rep.status))
            proven = rep.status if rep.status == "precondition unmet" else (
                "pass" if rep.quantities["proven_passed"] else "fail")
            summary.record("main_bound_proven", _outcome(proven))
            if rep.status != "precondition unmet":
                if M > 0:
                    worst_ratio = max(worst_ratio, rep.lhs**2 / M)
                lhs_all.append(rep.lhs)
                terms.append(finite_class_term(len(H), len(G), int(n), 0.1))
    summary.details["main_bound_max_sq_error_over_M"] = worst_ratio
    if lhs_all:
        # smallest c with error <= c (ln(|H||G|/delta)/n)^(1/4) over all replications
        summary.details["finite_class_envelope_c"] = envelope_constant(lhs_all, terms)


def _misspec_bound(summary: VerifySummary, pool, cfg: RunConfig) -> None:
    v = cfg.verify
    worst = 0.0
    for eh in v["eps_h"]:
        for eg in v["eps_g"]:
            for r in range(int(v["misspec_reps"])):
                k = r % len(pool)
                sc = pool[k]
                n = int(v["n_values"][r % len(v["n_values"])])
                H, G = _families(sc, cfg, "misspec", k, r, float(eh), float(eg), eps_h=float(eh), eps_g=float(eg))
                data = sample(sc, n, derive_seed(cfg.master_seed, "verify", "misspec-data", k, r, eh, eg))
                fit = fit_penalized_minimax(data, H, G)
                M = empirical_sup(sc, data, H, G)
                C_H = max(H.sup_bound, float(np.max(np.abs(sc.truth.h0))))
                rep = check_misspec_bound(fit, sc.truth, M, float(eh), float(eg), C_H, G.sup_bound,
                                          sc.design.x_space)
                summary.record("misspec_bound", _outcome(rep.status))
                summary.record("misspec_bound_proven", "pass" if rep.quantities["proven_passed"] else "fail")
                worst = max(worst, rep.lhs / rep.rhs if rep.rhs > 0 else 0.0)
    summary.details["misspec_max_error_over_rhs"] = worst


def _probes(sc: Scenario, rng: np.random.Generator, count: int = 24) -> tuple[np.ndarray, np.ndarray]:
    t = sc.truth
    H = [t.h0] + [t.h0 + rng.normal(size=sc.nx) * rng.uniform(0.01, 2.0) for _ in range(count)]
    if t.null_basis.shape[0]:
        H += [t.h0 + rng.normal(size=t.null_basis.shape[0]) @ t.null_basis for _ in range(4)]
    G = [t.gbar0] + [t.gbar0 + rng.normal(size=sc.nz) * rng.uniform(0.01, 2.0) for _ in range(count)]
    return np.array(H), np.array(G)


def _saddle(summary: VerifySummary, scenarios, cfg: RunConfig) -> None:
    rng = np.random.default_rng(derive_seed(cfg.master_seed, "verify", "saddle"))
    margin = np.inf
    for sc in scenarios:
        t = sc.truth
        Hp, Gp = _probes(sc, rng)
        summary.record("saddle", "pass" if check_saddle(sc, t.h0, t.gbar0, Hp, Gp).passed else "fail")
        if t.conull_basis.shape[0]:
            g_shift = t.gbar0 + rng.normal(size=t.conull_basis.shape[0]) @ t.conull_basis
            ok = check_saddle(sc, t.h0, g_shift, Hp, Gp).passed
            summary.record("saddle", "pass" if ok else "fail")
        if t.null_basis.shape[0]:
            h_shift = t.h0 + rng.normal(size=t.null_basis.shape[0]) @ t.null_basis
            rep = check_saddle(sc, h_shift, t.gbar0, Hp, Gp)
            # h0 is probe 0; it must strictly beat the shifted candidate
            rejected = not rep.passed and rep.worst_h > 0
            margin = min(margin, rep.worst_h)
            summary.record("saddle_null_shift_rejected", "pass" if rejected else "fail")
        rec = multiplier_witness(sc.op, t.r0, seed=int(rng.integers(2**31)))
        summary.record("multiplier_witness", "pass" if rec.passed else "fail")
    if np.isfinite(margin):
        summary.details["null_shift_min_rejection_margin"] = float(margin)


def planted_game(rng: np.random.Generator, nx: int, ny: int) -> tuple[np.ndarray, int, int]:
    """Random payoff table with a saddle at a random cell.

    Row x0 is made nonpositive and column y0 nonnegative, with f[x0, y0] = 0,
    so ``f(x0, y) <= f(x0, y0) <= f(x, y0)`` for all x, y.
    """
    f = rng.normal(size=(nx, ny))
    x0, y0 = int(rng.integers(nx)), int(rng.integers(ny))
    f[x0, :] = -np.abs(f[x0, :])
    f[:, y0] = np.abs(f[:, y0])
    f[x0, y0] = 0.0
    return f, x0, y0


def _restriction(summary: VerifySummary, scenarios, cfg: RunConfig) -> None:
    for i, sc in enumerate(scenarios):
        H, G = _families(sc, cfg, "restriction", i)
        summary.record("restriction_lemma", _outcome(check_restriction_lemma(sc, H, G).status))
        guard = check_restriction_lemma(sc, _drop_first(H), G).status
        summary.record("restriction_guard", "pass" if guard == "precondition unmet" else "fail")
    rng = np.random.default_rng(derive_seed(cfg.master_seed, "verify", "games"))
    for _ in range(int(cfg.verify.get("games", 100))):
        nx, ny = int(rng.integers(2, 7)), int(rng.integers(2, 7))
        f, x0, y0 = planted_game(rng, nx, ny)
        xs = np.union1d([x0], rng.choice(nx, size=int(rng.integers(1, nx + 1)), replace=False))
        ys = np.union1d([y0], rng.choice(ny, size=int(rng.integers(1, ny + 1)), replace=False))
        summary.record("restriction_game", _outcome(check_game_restriction(f, xs, ys).status))


def walsh_decay_scenario(level: int, nx: int = 16, beta: float = 1.0) -> Scenario:
    """Walsh design with sigma_i = 2^-i for i <= level, fixed multiplier coefficients and one null direction."""
    sigma = 2.0 ** -np.arange(1, level + 1)
    spec = make_spectral_spec(nx, nx, sigma, np.full(level, beta), null_coef=[0.5], basis="walsh")
    return spectral_scenario(spec, f"walsh{level}")


def _source(summary: VerifySummary, spectral, cfg: RunConfig) -> None:
    worst = 0.0
    for sc in spectral:
        s = source_identity(sc)
        worst = max(worst, s.gap)
        summary.record("source_identity", "pass" if s.gap <= SOURCE_TOL * max(1.0, s.direct) else "fail")
    values = []
    for level in range(2, 9):
        s = source_identity(walsh_decay_scenario(level))
        worst = max(worst, s.gap)
        summary.record("source_identity", "pass" if s.gap <= SOURCE_TOL * max(1.0, s.direct) else "fail")
        values.append(s.spectral)
    increasing = all(b > a for a, b in zip(values, values[1:]))
    summary.record("source_growth", "pass" if increasing else "fail")
    summary.details["source_identity_max_gap"] = worst
    summary.details["walsh_source_sums"] = values


def verify_suite(config: RunConfig) -> VerifySummary:
    """Run every registered check; counts are deterministic given the config."""
    cfg = config.validate()
    fixtures, randoms = _scenarios(cfg)
    summary = VerifySummary(config_hash=cfg.config_hash())
    _identification(summary, randoms, cfg)
    pool = fixtures[1:] + randoms  # W1 is identified, so it carries no null space to stress
    _main_bound(summary, pool, cfg)
    _misspec_bound(summary, pool, cfg)
    _saddle(summary, fixtures + randoms, cfg)
    _restriction(summary, fixtures + randoms, cfg)
    _source(summary, fixtures[2:] + randoms, cfg)
    summary.details["checks"] = list(CHECKS)
    return summary

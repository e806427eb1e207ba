"""Checkable versions of the identification results, finite-sample bounds and complexities.

Bound checks compare an observed error with a right-hand side built from the
exact empirical-process term ``M``, the largest deviation of the empirical
Lagrangian from its population value over the two families.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .estimators import FitResult, lagrangian_table, population_moments, sample_moments
from .funclass import FiniteFamily
from .npivop import (CondExpOp, ScenarioTruth, apply, apply_adjoint, compute_truth, conull_basis,
                     source_diagnostics, svd)
from .probspace import WeightedSpace, norm
from .scenario import Dataset, Scenario

BOUND_TOL = 1e-9
SADDLE_TOL = 1e-9
WITNESS_TOL = 1e-8
MEMBER_TOL = 1e-12


@dataclass
class BoundReport:
    """Outcome of one inequality check.

    ``status`` is ``"pass"``, ``"fail"`` or ``"precondition unmet"``; in the last
    case the inequality is still evaluated but makes no claim.
    """

    lhs: float
    rhs: float
    slack: float
    passed: bool
    status: str
    quantities: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"lhs": self.lhs, "rhs": self.rhs, "slack": self.slack, "passed": self.passed,
                "status": self.status, "quantities": self.quantities}

    @classmethod
    def from_dict(cls, d: dict) -> "BoundReport":
        return cls(d["lhs"], d["rhs"], d["slack"], d["passed"], d["status"], d.get("quantities", {}))


def _report(lhs: float, rhs: float, precondition: bool, quantities: dict) -> BoundReport:
    passed = bool(lhs <= rhs + BOUND_TOL)
    status = "precondition unmet" if not precondition else ("pass" if passed else "fail")
    return BoundReport(float(lhs), float(rhs), float(rhs - lhs), passed, status, quantities)


# ---------------------------------------------------------------------------
# empirical process term


def deviation_table(scenario: Scenario, data: Dataset, H: FiniteFamily, G: FiniteFamily) -> np.ndarray:
    """``(E_n - E)[(Y - h) g + 0.5 h^2]`` for every pair of members."""
    m = sample_moments(data, scenario.nx, scenario.nz)
    pop = population_moments(scenario)
    return lagrangian_table(m, H.members, G.members) - lagrangian_table(pop, H.members, G.members)


def empirical_sup(scenario: Scenario, data: Dataset, H: FiniteFamily, G: FiniteFamily) -> float:
    """Exact ``sup_{H x G} |(E_n - E)[(Y - h) g + 0.5 h^2]|`` by enumeration."""
    return float(np.max(np.abs(deviation_table(scenario, data, H, G))))


# ---------------------------------------------------------------------------
# realizability


def holds_h0(H: FiniteFamily, truth: ScenarioTruth, atol: float = MEMBER_TOL) -> bool:
    return H.contains(truth.h0, atol)


def holds_multiplier(G: FiniteFamily, truth: ScenarioTruth, op: CondExpOp | None = None,
                     tol: float = WITNESS_TOL) -> bool:
    """Whether some member g satisfies ``T* g = h0``.

    Without the operator only exact membership of the minimal-norm multiplier
    is tested.
    """
    if op is None:
        return G.contains(truth.gbar0, MEMBER_TOL)
    scale = max(1.0, float(np.max(np.abs(truth.h0))))
    return any(np.max(np.abs(apply_adjoint(op, g) - truth.h0)) <= tol * scale for g in G.members)


def _l2_error(fit: FitResult, truth: ScenarioTruth, x_space: WeightedSpace) -> float:
    return norm(x_space, np.asarray(fit.h_hat, dtype=float) - truth.h0)


# ---------------------------------------------------------------------------
# finite-sample bounds


def main_bound_rhs(M: float) -> float:
    """``sqrt(2 M)`` as stated for the penalized minimax estimator."""
    return math.sqrt(2.0 * max(M, 0.0))


def proven_main_rhs(M: float) -> float:
    """``2 sqrt(M)``: what the chain of inequalities yields with the key identity's factor 0.5."""
    return 2.0 * math.sqrt(max(M, 0.0))


def check_main_bound(fit: FitResult, truth: ScenarioTruth, M: float, x_space: WeightedSpace, *,
                     H: FiniteFamily | None = None, G: FiniteFamily | None = None,
                     op: CondExpOp | None = None) -> BoundReport:
    """``||h_hat - h0|| <= sqrt(2 M)``.

    When the families are supplied their realizability is checked first; a
    family without h0 or without a multiplier gives ``"precondition unmet"``.
    """
    pre = True
    if H is not None and not holds_h0(H, truth):
        pre = False
    if G is not None and not holds_multiplier(G, truth, op):
        pre = False
    lhs = _l2_error(fit, truth, x_space)
    proven = proven_main_rhs(M)
    return _report(lhs, main_bound_rhs(M), pre,
                   {"M": M, "proven_rhs": proven, "proven_passed": bool(lhs <= proven + BOUND_TOL)})


def misspec_rhs(M: float, eps_h: float, eps_g: float, C_H: float, C_G: float) -> float:
    """``sqrt((2 C_H + C_G) eps_h + C_H eps_g + 2 M)``."""
    return math.sqrt((2.0 * C_H + C_G) * eps_h + C_H * eps_g + 2.0 * max(M, 0.0))


def proven_misspec_rhs(M: float, eps_h: float, eps_g: float, C_H: float, C_G: float) -> float:
    """Root of ``e^2 = 2 (C_H + C_G) eps_h + 2 e eps_g + 4 M``.

    This is the error level implied by the same chain of inequalities when the
    key identity keeps its factor 0.5 and the multiplier term is bounded by
    ``||h_hat - h0|| eps_g``; ``C_H`` must also bound ``|h0|``.
    """
    c = 2.0 * (C_H + C_G) * eps_h + 4.0 * max(M, 0.0)
    return eps_g + math.sqrt(eps_g * eps_g + c)


def check_misspec_bound(fit: FitResult, truth: ScenarioTruth, M: float, eps_h: float, eps_g: float,
                        C_H: float, C_G: float, x_space: WeightedSpace) -> BoundReport:
    """Bound under misspecified families with approximation errors ``eps_h``, ``eps_g``.

    ``C_H`` should dominate the sup norm of both the family and h0.
    """
    if eps_h < 0 or eps_g < 0:
        raise ValueError("approximation errors must be nonnegative")
    lhs = _l2_error(fit, truth, x_space)
    rhs = misspec_rhs(M, eps_h, eps_g, C_H, C_G)
    proven = proven_misspec_rhs(M, eps_h, eps_g, C_H, C_G)
    return _report(lhs, rhs, True, {"M": M, "eps_h": eps_h, "eps_g": eps_g, "C_H": C_H, "C_G": C_G,
                                    "proven_rhs": proven, "proven_passed": bool(lhs <= proven + BOUND_TOL)})


# ---------------------------------------------------------------------------
# Rademacher complexity


@dataclass(frozen=True)
class RademacherEstimate:
    estimate: float
    stderr: float
    reps: int

    def to_dict(self) -> dict:
        return {"estimate": self.estimate, "stderr": self.stderr, "reps": self.reps}


def _family_weights(family: FiniteFamily, scenario: Scenario) -> np.ndarray:
    space = scenario.design.z_space if family.space == "z" else scenario.design.x_space
    if space.size != family.members.shape[1]:
        raise ValueError("family support does not match the scenario")
    return space.weights


def mc_rademacher(family: FiniteFamily, scenario: Scenario, n: int, reps: int, seed: int) -> RademacherEstimate:
    """Monte Carlo ``n^-1 E[sup_f sum_i sigma_i f(X_i)]`` over sign and data draws."""
    if reps < 1 or n < 1:
        raise ValueError("need n >= 1 and reps >= 1")
    w = _family_weights(family, scenario)
    rng = np.random.default_rng(seed)
    F = family.members
    vals = np.empty(reps)
    for r in range(reps):
        x = rng.choice(w.size, size=n, p=w)
        sig = rng.choice((-1.0, 1.0), size=n)
        c = np.bincount(x, weights=sig, minlength=w.size)
        vals[r] = float(np.max(F @ c)) / n
    se = float(vals.std(ddof=1) / math.sqrt(reps)) if reps > 1 else math.inf
    return RademacherEstimate(float(vals.mean()), se, reps)


def conditional_rademacher(family: FiniteFamily, points) -> float:
    """Exact ``n^-1 E_sigma[sup_f sum_i sigma_i f(x_i)]`` for fixed points, by 2^n sign patterns."""
    x = np.asarray(points, dtype=int)
    n = x.size
    if n == 0:
        raise ValueError("need at least one point")
    if n > 20:
        raise ValueError("2^n enumeration is limited to n <= 20")
    V = family.members[:, x]  # (members, n)
    signs = np.array(list(itertools.product((-1.0, 1.0), repeat=n)))
    return float(np.mean(np.max(signs @ V.T, axis=1))) / n


def _compositions(n: int, k: int):
    # all nonnegative integer vectors of length k summing to n
    for bars in itertools.combinations(range(n + k - 1), k - 1):
        prev = -1
        out = []
        for b in bars:
            out.append(b - prev - 1)
            prev = b
        out.append(n + k - 2 - prev)
        yield out


def _multinomial_logpmf(counts, p) -> float:
    n = sum(counts)
    out = math.lgamma(n + 1)
    for c, q in zip(counts, p):
        out -= math.lgamma(c + 1)
        if c:
            out += c * math.log(q)
    return out


def exact_rademacher(family: FiniteFamily, scenario: Scenario, n: int) -> float:
    """Exact ``R_n`` by enumerating the counts of (sign, support point) pairs."""
    w = _family_weights(family, scenario)
    k = w.size
    p = np.concatenate([0.5 * w, 0.5 * w])
    F = family.members
    total = 0.0
    for counts in _compositions(n, 2 * k):
        c = np.asarray(counts, dtype=float)
        net = c[:k] - c[k:]
        total += math.exp(_multinomial_logpmf(counts, p)) * float(np.max(F @ net))
    return total / n


def sign_enumerated_rademacher(family: FiniteFamily, scenario: Scenario, n: int) -> float:
    """Exact ``R_n`` as the data-averaged 2^n sign enumeration.

    The conditional value only depends on how many draws hit each support
    point, so the data average runs over multinomial count vectors.
    """
    w = _family_weights(family, scenario)
    total = 0.0
    for counts in _compositions(n, w.size):
        pts = np.repeat(np.arange(w.size), counts)
        total += math.exp(_multinomial_logpmf(counts, w)) * conditional_rademacher(family, pts)
    return total


def rademacher_bound_term(C_H: float, C_G: float, R_H: float, R_G: float, n: int, delta: float) -> float:
    """Square-root term of the Rademacher-form bound, without its constant."""
    inner = (C_H + C_G) * (R_G + R_H) + (C_G + C_H) * C_H * math.sqrt(math.log(1.0 / delta) / n)
    return math.sqrt(max(inner, 0.0))


def finite_class_term(size_h: int, size_g: int, n: int, delta: float) -> float:
    """``(ln(|H||G| / delta) / n)^(1/4)``, the finite-class rate without its polynomial factor."""
    return (math.log(size_h * size_g / delta) / n) ** 0.25


def envelope_constant(lhs, terms) -> float:
    """Smallest ``c`` with ``lhs_i <= c * term_i`` for every replication."""
    lhs = np.asarray(lhs, dtype=float)
    terms = np.asarray(terms, dtype=float)
    if lhs.shape != terms.shape or lhs.size == 0:
        raise ValueError("need matching nonempty arrays")
    if np.any(terms <= 0):
        raise ValueError("terms must be positive")
    return float(np.max(lhs / terms))


# ---------------------------------------------------------------------------
# saddle points


@dataclass
class SaddleReport:
    """``L(h, g') >= L(h', g') >= L(h', g)`` over the probes.

    ``worst_h`` is the largest ``L(h', g') - L(h, g')`` (positive means some
    probe h beats the candidate) and ``worst_g`` the largest
    ``L(h', g) - L(h', g')``.
    """

    passed: bool
    worst_h: float
    worst_g: float
    worst_h_index: int
    worst_g_index: int

    def to_dict(self) -> dict:
        return {"passed": self.passed, "worst_h": self.worst_h, "worst_g": self.worst_g,
                "worst_h_index": self.worst_h_index, "worst_g_index": self.worst_g_index}


def check_saddle(scenario: Scenario, h_cand, g_cand, H_probe, G_probe, tol: float = SADDLE_TOL) -> SaddleReport:
    """Check both saddle inequalities of the population Lagrangian over probe sets."""
    pop = population_moments(scenario)
    h = np.asarray(h_cand, dtype=float)[None, :]
    g = np.asarray(g_cand, dtype=float)[None, :]
    Hp = np.atleast_2d(np.asarray(H_probe, dtype=float))
    Gp = np.atleast_2d(np.asarray(G_probe, dtype=float))
    center = float(lagrangian_table(pop, h, g)[0, 0])
    over_h = center - lagrangian_table(pop, Hp, g)[:, 0]
    over_g = lagrangian_table(pop, h, Gp)[0, :] - center
    ih, ig = int(np.argmax(over_h)), int(np.argmax(over_g))
    scale = max(1.0, abs(center))
    ok = bool(over_h[ih] <= tol * scale and over_g[ig] <= tol * scale)
    return SaddleReport(ok, float(over_h[ih]), float(over_g[ig]), ih, ig)


@dataclass
class RestrictionReport:
    """Restricted minimax argmin and the two inclusions of the restriction lemma."""

    status: str
    argmin: list
    expected: list
    first_inclusion: bool
    second_inclusion: bool

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def to_dict(self) -> dict:
        return {"status": self.status, "argmin": self.argmin, "expected": self.expected,
                "first_inclusion": self.first_inclusion, "second_inclusion": self.second_inclusion}


def _argmin_max(table: np.ndarray, tol: float) -> np.ndarray:
    inner = table.max(axis=1)
    best = inner.min()
    return np.flatnonzero(inner <= best + tol * max(1.0, abs(best)))


def game_saddle_sets(f: np.ndarray, tol: float = SADDLE_TOL) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """For a payoff table ``f[x, y]`` (x minimises): the minimax x set, the
    maximin y set, and the best responses over x to some maximin y."""
    zx = _argmin_max(f, tol)
    outer = f.min(axis=0)
    top = outer.max()
    ys = np.flatnonzero(outer >= top - tol * max(1.0, abs(top)))
    resp = set()
    for y in ys:
        col = f[:, y]
        lo = col.min()
        resp.update(np.flatnonzero(col <= lo + tol * max(1.0, abs(lo))).tolist())
    return zx, ys, np.array(sorted(resp), dtype=int)


def has_saddle(f: np.ndarray, tol: float = SADDLE_TOL) -> bool:
    """Whether the payoff table has a pure saddle point (minimax equals maximin)."""
    a = f.max(axis=1).min()
    b = f.min(axis=0).max()
    return bool(a - b <= tol * max(1.0, abs(a)))


def check_game_restriction(f: np.ndarray, x_sub, y_sub, tol: float = SADDLE_TOL) -> RestrictionReport:
    """Both inclusions of the restriction lemma for an abstract finite game.

    The precondition is that some saddle point of the full game lies in
    ``x_sub x y_sub``.
    """
    f = np.asarray(f, dtype=float)
    xs = np.asarray(sorted(set(int(i) for i in x_sub)))
    ys = np.asarray(sorted(set(int(j) for j in y_sub)))
    zx, zy, zt = game_saddle_sets(f, tol)
    full_saddle = has_saddle(f, tol)
    inside = full_saddle and bool(np.intersect1d(zx, xs).size and np.intersect1d(zy, ys).size)
    sub = f[np.ix_(xs, ys)]
    restricted = xs[_argmin_max(sub, tol)]
    first = set(np.intersect1d(zx, xs).tolist()) <= set(restricted.tolist())
    second = set(restricted.tolist()) <= set(np.intersect1d(zt, xs).tolist())
    if not inside:
        status = "precondition unmet"
    else:
        status = "pass" if first and second else "fail"
    return RestrictionReport(status, restricted.tolist(), np.intersect1d(zx, xs).tolist(), bool(first), bool(second))


def check_restriction_lemma(scenario: Scenario, H_sub: FiniteFamily, G_sub: FiniteFamily,
                            tol: float = SADDLE_TOL) -> RestrictionReport:
    """Restricted population minimax over realizable finite families equals {h0}.

    Over the full spaces the minimax set is {h0}, and h0 is also the unique best
    response to every multiplier, so both inclusions reduce to comparing the
    restricted argmin with the members equal to h0.
    """
    truth = scenario.truth
    if not (holds_h0(H_sub, truth) and holds_multiplier(G_sub, truth, scenario.op)):
        return RestrictionReport("precondition unmet", [], [], False, False)
    pop = population_moments(scenario)
    L = lagrangian_table(pop, H_sub.members, G_sub.members)
    restricted = _argmin_max(L, tol).tolist()
    expected = [i for i in range(len(H_sub)) if np.max(np.abs(H_sub[i] - truth.h0)) <= MEMBER_TOL]
    first = set(expected) <= set(restricted)
    second = set(restricted) <= set(expected)
    return RestrictionReport("pass" if first and second else "fail", restricted, expected, first, second)


# ---------------------------------------------------------------------------
# multiplier characterisation


@dataclass
class WitnessRecord:
    """Both directions of ``T T* g = r0  <=>  T* g = h0`` on constructed witnesses."""

    forward_residual: float
    reverse_residual: float
    witnesses: int
    passed: bool

    def to_dict(self) -> dict:
        return {"forward_residual": self.forward_residual, "reverse_residual": self.reverse_residual,
                "witnesses": self.witnesses, "passed": self.passed}


def _null_of_ttstar(op: CondExpOp, rcond: float = 1e-10) -> np.ndarray:
    # null(T T*) from the eigenvectors of the whitened A A', mapped back to Z
    A = op.whitened()
    lam, U = np.linalg.eigh(A @ A.T)
    cut = rcond * max(float(lam[-1]), 0.0)
    return (U[:, lam <= cut].T) / np.sqrt(op.z_space.weights)


def multiplier_witness(op: CondExpOp, r0, samples: int = 5, seed: int = 0, scale: float = 1.0) -> WitnessRecord:
    """Witness both directions of the multiplier characterisation.

    Forward: solutions of ``T T* g = r0`` (the minimal one plus null(T T*)
    shifts) satisfy ``T* g = h0``.  Reverse: solutions of ``T* g = h0`` (the
    minimal one plus null(T*) shifts) satisfy ``T T* g = r0``.
    """
    truth = compute_truth(op, r0)
    rng = np.random.default_rng(seed)
    fwd_null = _null_of_ttstar(op)
    rev_null = conull_basis(op)
    fwd = [truth.gbar0] + [truth.gbar0 + scale * (rng.normal(size=fwd_null.shape[0]) @ fwd_null)
                           for _ in range(samples if fwd_null.shape[0] else 0)]
    rev = [truth.gbar0] + [truth.gbar0 + scale * (rng.normal(size=rev_null.shape[0]) @ rev_null)
                           for _ in range(samples if rev_null.shape[0] else 0)]
    ref_h = max(1.0, float(np.max(np.abs(truth.h0))))
    ref_r = max(1.0, float(np.max(np.abs(truth.r0))))
    f_res = 0.0
    for g in fwd:
        # the witness solves T T* g = r0 by construction; check that first, then T* g = h0
        f_res = max(f_res, float(np.max(np.abs(apply(op, apply_adjoint(op, g)) - truth.r0))) / ref_r,
                    float(np.max(np.abs(apply_adjoint(op, g) - truth.h0))) / ref_h)
    r_res = 0.0
    for g in rev:
        r_res = max(r_res, float(np.max(np.abs(apply_adjoint(op, g) - truth.h0))) / ref_h,
                    float(np.max(np.abs(apply(op, apply_adjoint(op, g)) - truth.r0))) / ref_r)
    return WitnessRecord(f_res, r_res, len(fwd) + len(rev), bool(f_res <= WITNESS_TOL and r_res <= WITNESS_TOL))


# ---------------------------------------------------------------------------
# spectral tension quantity


@dataclass(frozen=True)
class SourceIdentity:
    """``||gbar0||^2`` computed directly and as ``sum gamma_i^2 / sigma_i^4``."""

    direct: float
    spectral: float

    @property
    def gap(self) -> float:
        return abs(self.direct - self.spectral)

    def to_dict(self) -> dict:
        return {"direct": self.direct, "spectral": self.spectral, "gap": self.gap}


def source_identity(scenario: Scenario) -> SourceIdentity:
    diag = source_diagnostics(svd(scenario.op), scenario.truth.r0)
    return SourceIdentity(scenario.truth.source_norm**2, diag.source_sum)

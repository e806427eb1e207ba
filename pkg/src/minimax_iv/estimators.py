"""Minimax objectives, the five estimators and oracle evaluation metrics.

Every finite-family estimator works on a :class:`Moments` table: cell
probabilities ``P[x, z]`` and outcome masses ``Q[x, z] = E[Y 1{X=x, Z=z}]``.
An empirical sample and the population law both reduce to such a table, so
"population mode" is just a different constructor, never a different code
path.

Objectives (all on the same footing, expectations taken under the table):

* penalized Lagrangian ``0.5 E[h^2] + E[(Y - h) g]``
* projected-MSE objective ``-0.5 E[g^2] + E[(Y - h) g]``
* its Tikhonov variant, which adds ``alpha E[h^2]``
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .funclass import FiniteFamily, LinearFamily, RKHSBall, kernel_matrix, median_bandwidth
from .npivop import CondExpOp, ScenarioTruth, apply
from .probspace import DimensionError, inner_product, norm
from .scenario import Dataset, Scenario

TIE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Moments:
    """Cell masses of a sample (``n`` set) or of the population (``n=None``)."""

    cell: np.ndarray
    ysum: np.ndarray
    n: int | None = None

    @property
    def px(self) -> np.ndarray:
        return self.cell.sum(axis=1)

    @property
    def pz(self) -> np.ndarray:
        return self.cell.sum(axis=0)

    @property
    def qz(self) -> np.ndarray:
        return self.ysum.sum(axis=0)

    @property
    def population(self) -> bool:
        return self.n is None


def sample_moments(data: Dataset, nx: int, nz: int) -> Moments:
    if data.x.max() >= nx or data.z.max() >= nz:
        raise DimensionError("dataset indices exceed the family supports")
    flat = data.x * nz + data.z
    cell = np.bincount(flat, minlength=nx * nz).reshape(nx, nz) / data.n
    ysum = np.bincount(flat, weights=data.y, minlength=nx * nz).reshape(nx, nz) / data.n
    return Moments(cell, ysum, data.n)


def population_moments(scenario: Scenario) -> Moments:
    """Exact expectations; the noise has mean zero given (X, Z)."""
    p = np.asarray(scenario.design.joint)
    return Moments(p.copy(), p * scenario.h_star[:, None], None)


def as_moments(data, nx: int, nz: int) -> Moments:
    if isinstance(data, Moments):
        if data.cell.shape != (nx, nz):
            raise DimensionError(f"moment table {data.cell.shape} vs families ({nx}, {nz})")
        return data
    if isinstance(data, Dataset):
        return sample_moments(data, nx, nz)
    raise TypeError(f"expected a Dataset or Moments, got {type(data).__name__}")


# ---------------------------------------------------------------------------
# objective tables


def lagrangian_table(m: Moments, H: np.ndarray, G: np.ndarray) -> np.ndarray:
    """``L[i, j] = 0.5 E[h_i^2] + E[(Y - h_i) g_j]``."""
    return 0.5 * ((H * H) @ m.px)[:, None] + (G @ m.qz)[None, :] - H @ m.cell @ G.T


def projected_table(m: Moments, H: np.ndarray, G: np.ndarray) -> np.ndarray:
    """``Psi[i, j] = -0.5 E[g_j^2] + E[(Y - h_i) g_j]``."""
    return -0.5 * ((G * G) @ m.pz)[None, :] + (G @ m.qz)[None, :] - H @ m.cell @ G.T


def tikhonov_table(m: Moments, H: np.ndarray, G: np.ndarray, alpha: float) -> np.ndarray:
    return projected_table(m, H, G) + alpha * ((H * H) @ m.px)[:, None]


def pop_lagrangian(scenario: Scenario, h, g) -> float:
    """``0.5 <h, h> + <r0 - T h, g>`` from the scenario truth."""
    op = scenario.op
    h = np.asarray(h, dtype=float)
    g = np.asarray(g, dtype=float)
    return 0.5 * inner_product(op.x_space, h, h) + inner_product(op.z_space, scenario.truth.r0 - apply(op, h), g)


def emp_lagrangian(data: Dataset, h, g) -> float:
    """Sample average ``0.5 E_n[h^2] + E_n[(Y - h) g]`` over the raw observations."""
    h = np.asarray(h, dtype=float)
    g = np.asarray(g, dtype=float)
    if data.n < 1:
        raise ValueError("empty dataset")
    if data.x.max() >= h.size or data.z.max() >= g.size:
        raise DimensionError("dataset indices exceed function supports")
    hx = h[data.x]
    return float(np.mean(0.5 * hx * hx + (data.y - hx) * g[data.z]))


# ---------------------------------------------------------------------------
# selection rule


def select_min(values: np.ndarray, norms: np.ndarray, candidates: np.ndarray | None = None,
               tol: float = TIE_TOL) -> int:
    """Index minimising ``values``; near-ties go to the smaller norm, then the lower index.

    Two values tie when they differ by at most ``tol * max(1, |min|)``; norms
    are compared with the same relative tolerance.
    """
    idx = np.arange(values.size) if candidates is None else np.asarray(candidates)
    v = values[idx]
    vmin = v.min()
    tie = idx[v <= vmin + tol * max(1.0, abs(vmin))]
    nrm = norms[tie]
    nmin = nrm.min()
    tie = tie[nrm <= nmin + tol * max(1.0, nmin)]
    return int(tie.min())


# ---------------------------------------------------------------------------
# results


@dataclass
class FitResult:
    """Estimator output.

    ``objective`` names the function re-evaluated by :func:`reevaluate`
    (``lagrangian``, ``projected``, ``tikhonov`` or ``rkhs``).
    """

    estimator: str
    h_hat: np.ndarray
    objective_value: float
    objective: str
    h_index: int | None = None
    g_index: int | None = None
    g_inner: np.ndarray | None = None
    hyperparameters: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    converged: bool = True

    def to_dict(self) -> dict:
        return {
            "estimator": self.estimator,
            "h_hat": np.asarray(self.h_hat).tolist(),
            "objective_value": self.objective_value,
            "objective": self.objective,
            "h_index": self.h_index,
            "g_index": self.g_index,
            "g_inner": None if self.g_inner is None else np.asarray(self.g_inner).tolist(),
            "hyperparameters": self.hyperparameters,
            "diagnostics": self.diagnostics,
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        return cls(
            d["estimator"], np.asarray(d["h_hat"], dtype=float), d["objective_value"], d["objective"],
            d.get("h_index"), d.get("g_index"),
            None if d.get("g_inner") is None else np.asarray(d["g_inner"], dtype=float),
            d.get("hyperparameters", {}), d.get("diagnostics", {}), d.get("converged", True),
        )


@dataclass(frozen=True)
class Metrics:
    l2_error: float
    projected_rmse: float

    @property
    def projected_mse(self) -> float:
        return self.projected_rmse**2

    def to_dict(self) -> dict:
        return {"l2_error": self.l2_error, "projected_rmse": self.projected_rmse,
                "projected_mse": self.projected_mse}


def evaluate(fit: FitResult, truth: ScenarioTruth, op: CondExpOp) -> Metrics:
    """Oracle errors of ``fit.h_hat`` against h0 under the true law."""
    d = np.asarray(fit.h_hat, dtype=float) - truth.h0
    return Metrics(norm(op.x_space, d), norm(op.z_space, apply(op, d)))


def reevaluate(fit: FitResult, data, H: FiniteFamily | None = None, G: FiniteFamily | None = None) -> float:
    """Recompute the declared objective at ``(h_hat, g_inner)``."""
    h = np.asarray(fit.h_hat, dtype=float)[None, :]
    g = np.asarray(fit.g_inner, dtype=float)[None, :]
    m = as_moments(data, h.shape[1], g.shape[1])
    if fit.objective == "lagrangian":
        return float(lagrangian_table(m, h, g)[0, 0])
    if fit.objective == "projected":
        return float(projected_table(m, h, g)[0, 0])
    if fit.objective == "tikhonov":
        return float(tikhonov_table(m, h, g, fit.hyperparameters["alpha"])[0, 0])
    raise ValueError(f"cannot re-evaluate objective {fit.objective!r}")


# ---------------------------------------------------------------------------
# finite-family estimators


def _setup(data, H: FiniteFamily, G: FiniteFamily) -> tuple[Moments, np.ndarray, np.ndarray, np.ndarray]:
    if len(H) == 0 or len(G) == 0:
        raise ValueError("empty family")
    Hm, Gm = H.members, G.members
    m = as_moments(data, Hm.shape[1], Gm.shape[1])
    hnorm = np.sqrt(np.maximum((Hm * Hm) @ m.px, 0.0))
    return m, Hm, Gm, hnorm


def _minimax(table: np.ndarray, hnorm: np.ndarray, candidates=None) -> tuple[int, int, np.ndarray]:
    inner = table.max(axis=1)
    i = select_min(inner, hnorm, candidates)
    j = int(np.argmax(table[i]))
    return i, j, inner


def _result(name: str, objective: str, table: np.ndarray, i: int, j: int, H, G, m: Moments,
            hyper: dict | None = None, diag: dict | None = None) -> FitResult:
    d = {"enumeration_size": int(table.size), "population": m.population, **(diag or {})}
    return FitResult(name, H.members[i].copy(), float(table[i, j]), objective, i, j,
                     G.members[j].copy(), dict(hyper or {}), d)


def fit_penalized_minimax(data, H: FiniteFamily, G: FiniteFamily) -> FitResult:
    """argmin over H of max over G of the penalized Lagrangian, by enumeration."""
    m, Hm, Gm, hnorm = _setup(data, H, G)
    L = lagrangian_table(m, Hm, Gm)
    i, j, _ = _minimax(L, hnorm)
    return _result("penalized_minimax", "lagrangian", L, i, j, H, G, m)


def fit_dikkala(data, H: FiniteFamily, G: FiniteFamily) -> FitResult:
    """Minimax on the projected-MSE objective (no Tikhonov term)."""
    m, Hm, Gm, hnorm = _setup(data, H, G)
    P = projected_table(m, Hm, Gm)
    i, j, _ = _minimax(P, hnorm)
    return _result("dikkala", "projected", P, i, j, H, G, m)


def liao_alpha(n: int, c: float = 1.0) -> float:
    """Default Tikhonov schedule ``c * n^(-1/3)``."""
    return c * n ** (-1.0 / 3.0)


def fit_liao(data, H: FiniteFamily, G: FiniteFamily, alpha: float) -> FitResult:
    """Projected-MSE minimax plus ``alpha E_n[h^2]``."""
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    m, Hm, Gm, hnorm = _setup(data, H, G)
    P = tikhonov_table(m, Hm, Gm, alpha)
    i, j, _ = _minimax(P, hnorm)
    return _result("liao", "tikhonov", P, i, j, H, G, m, {"alpha": alpha})


def fit_bennett_flip(data, H: FiniteFamily, G: FiniteFamily) -> FitResult:
    """Flipped order: g = argmax_g min_h L_n, then h = argmin_h L_n(., g)."""
    m, Hm, Gm, hnorm = _setup(data, H, G)
    L = lagrangian_table(m, Hm, Gm)
    gnorm = np.sqrt(np.maximum((Gm * Gm) @ m.pz, 0.0))
    outer = L.min(axis=0)
    j = select_min(-outer, gnorm)
    i = select_min(L[:, j], hnorm)
    return _result("bennett_flip", "lagrangian", L, i, j, H, G, m,
                   diag={"stage1_g_index": j, "stage1_value": float(outer[j]),
                         "stage2_h_index": i, "stage2_value": float(L[i, j])})


def both_worlds_mu(c_h: float, c_g: float, size_h: int, size_g: int, delta: float, n: int,
                   c: float = 1.0) -> float:
    """Default threshold ``c (C_H + C_G)^2 sqrt(ln(|H||G|/delta) / n)``."""
    return c * (c_h + c_g) ** 2 * math.sqrt(math.log(size_h * size_g / delta) / n)


def fit_both_worlds(data, H: FiniteFamily, G: FiniteFamily, mu_n: float) -> FitResult:
    """Projected-MSE minimax restricted to the near-optimal set of the Lagrangian.

    The set keeps every h whose inner maximum is within ``mu_n`` of the
    minimax value; it always contains the penalized-minimax selection.
    """
    if mu_n < 0:
        raise ValueError("mu_n must be nonnegative")
    m, Hm, Gm, hnorm = _setup(data, H, G)
    L = lagrangian_table(m, Hm, Gm)
    i_mn, _, inner = _minimax(L, hnorm)
    m_star = float(inner[i_mn])
    slack = TIE_TOL * max(1.0, abs(m_star))
    keep = np.flatnonzero(inner - m_star <= mu_n + slack) if math.isfinite(mu_n) else np.arange(len(H))
    P = projected_table(m, Hm, Gm)
    i, j, _ = _minimax(P, hnorm, keep)
    return _result("both_worlds", "projected", P, i, j, H, G, m, {"mu_n": mu_n},
                   {"confidence_set": keep.tolist(), "minimax_value": m_star, "penalized_index": i_mn})


# ---------------------------------------------------------------------------
# RKHS discriminator


@dataclass(frozen=True)
class SolverConfig:
    """Projected subgradient settings.

    The budget is split into ``epochs``; each epoch restarts from the best
    point found so far with step ``step / sqrt(t)`` and halves ``step`` for
    the next epoch.  The run is converged when the best objective improves by
    less than ``tol`` over an epoch.
    """

    budget: int = 5000
    epochs: int = 10
    step: float = 1.0
    tol: float = 1e-6


def _rkhs_parts(data: Dataset, family: LinearFamily, ball: RKHSBall, z_points):
    nx = family.basis.shape[1]
    if z_points is None:
        z_points = np.arange(int(data.z.max()) + 1, dtype=float)
    zp = np.asarray(z_points, dtype=float).reshape(len(z_points), -1)
    nz = zp.shape[0]
    m = sample_moments(data, nx, nz)
    bw = ball.bandwidth if ball.bandwidth is not None else median_bandwidth(zp[np.unique(data.z)])
    K = kernel_matrix(ball, zp, zp, bw)
    n = data.n
    Phi = family.basis
    A = (Phi * m.px) @ Phi.T  # E_n[h^2] = theta' A theta
    C = (Phi @ m.cell) * n  # C[j, z] = sum_i phi_j(x_i) 1{z_i = z}
    s = m.qz * n  # s[z] = sum_i y_i 1{z_i = z}
    return A, C, s, K, n, bw


def rkhs_objective(theta, A, C, s, K, n) -> float:
    R = s - theta @ C
    q = max(float(R @ K @ R), 0.0)
    return 0.5 * float(theta @ A @ theta) + math.sqrt(q) / n


def _rkhs_subgradient(theta, A, C, s, K, n) -> np.ndarray:
    R = s - theta @ C
    q = float(R @ K @ R)
    g = A @ theta
    if q > 0:
        g = g - (C @ (K @ R)) / (n * math.sqrt(q))
    return g


def _project_ball(theta: np.ndarray, radius: float) -> np.ndarray:
    r = np.linalg.norm(theta)
    return theta if r <= radius else theta * (radius / r)


def fit_rkhs_penalized(data: Dataset, family: LinearFamily, ball: RKHSBall, config: SolverConfig | None = None,
                       z_points=None) -> FitResult:
    """Penalized minimax with the RKHS unit ball as discriminator class.

    The inner maximum has the closed form ``(1/n) sqrt(rho' K rho)`` with
    ``rho_i = Y_i - h(X_i)``, leaving a convex problem over the parameter ball
    that is solved by restarted projected subgradient with iterate averaging.
    """
    cfg = config or SolverConfig()
    if cfg.budget <= 0:
        raise ValueError("solver budget must be positive")
    A, C, s, K, n, bw = _rkhs_parts(data, family, ball, z_points)

    def f(th):
        return rkhs_objective(th, A, C, s, K, n)

    k = family.basis.shape[0]
    best = np.zeros(k)
    fbest = f(best)
    per_epoch = max(1, cfg.budget // max(1, cfg.epochs))
    step = cfg.step * family.radius
    used = 0
    last_drop = math.inf
    history = []
    while used < cfg.budget:
        theta = best.copy()
        avg = np.zeros(k)
        wsum = 0.0
        start = fbest
        for t in range(1, min(per_epoch, cfg.budget - used) + 1):
            g = _rkhs_subgradient(theta, A, C, s, K, n)
            gn = np.linalg.norm(g)
            if gn == 0:
                break
            eta = step / math.sqrt(t)
            theta = _project_ball(theta - eta * g / gn, family.radius)
            avg += eta * theta
            wsum += eta
            ft = f(theta)
            if ft < fbest:
                best, fbest = theta.copy(), ft
        used += per_epoch
        if wsum > 0:
            avg /= wsum
            fa = f(avg)
            if fa < fbest:
                best, fbest = avg, fa
        last_drop = start - fbest
        history.append(fbest)
        step *= 0.5
        if last_drop < cfg.tol and len(history) > 1 and history[-2] - fbest < cfg.tol:
            break
    converged = last_drop < cfg.tol
    return FitResult(
        "rkhs_penalized", family.evaluate(best), float(fbest), "rkhs",
        hyperparameters={"bandwidth": bw, "radius": family.radius, "budget": cfg.budget},
        diagnostics={"iterations": used, "final_decrease": float(last_drop), "theta": best.tolist(),
                     "epoch_objectives": history},
        converged=bool(converged),
    )

"""Conditional expectation operators on finite designs and their ground truth.

A :class:`JointDesign` is a finite joint law of (X, Z).  From it we build the
operator ``T h = E[h(X) | Z]`` and its adjoint ``T* g = E[g(Z) | X]``, both
acting between weighted L2 spaces.  The weighted SVD is obtained by whitening:
with diagonal marginals ``W`` (on X) and ``V`` (on Z),
``A = V^{1/2} T W^{-1/2}`` is an ordinary matrix whose Euclidean SVD maps back
to the weighted one.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .probspace import RCOND, DimensionError, WeightedSpace, norm

JOINT_TOL = 1e-12
MARGINAL_TOL = 1e-10
RANGE_TOL = 1e-8


class NotInRangeError(ValueError):
    """The response is not in the range of the operator (no solution exists)."""


class SourceConditionError(ValueError):
    """The response is not in range(T T*) to numerical tolerance."""


@dataclass(frozen=True, eq=False)
class JointDesign:
    """Finite joint distribution of (X, Z); ``joint[x, z] = P(X=x, Z=z)``."""

    x_space: WeightedSpace
    z_space: WeightedSpace
    joint: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        p = np.array(self.joint, dtype=float)
        if p.shape != (self.x_space.size, self.z_space.size):
            raise DimensionError(f"joint table {p.shape} vs supports ({self.x_space.size}, {self.z_space.size})")
        if np.any(p < 0):
            x, z = np.unravel_index(np.argmin(p), p.shape)
            raise ValueError(f"negative mass {p[x, z]!r} at cell (x={self.x_space.labels[x]!r}, z={self.z_space.labels[z]!r})")
        if abs(p.sum() - 1.0) > JOINT_TOL:
            raise ValueError(f"joint mass is {p.sum()!r}")
        if np.max(np.abs(p.sum(axis=1) - self.x_space.weights)) > MARGINAL_TOL:
            raise ValueError("row sums do not reproduce the X marginal")
        if np.max(np.abs(p.sum(axis=0) - self.z_space.weights)) > MARGINAL_TOL:
            raise ValueError("column sums do not reproduce the Z marginal")
        p.setflags(write=False)
        object.__setattr__(self, "joint", p)

    @classmethod
    def from_table(cls, joint, x_labels: Sequence | None = None, z_labels: Sequence | None = None,
                   x_coords=None, z_coords=None, metadata: dict | None = None) -> "JointDesign":
        """Build a design whose marginals are read off the table."""
        p = np.asarray(joint, dtype=float)
        nx, nz = p.shape
        xs = WeightedSpace(tuple(range(nx)) if x_labels is None else tuple(x_labels), p.sum(axis=1), x_coords)
        zs = WeightedSpace(tuple(range(nz)) if z_labels is None else tuple(z_labels), p.sum(axis=0), z_coords)
        return cls(xs, zs, p, dict(metadata or {}))

    @property
    def shape(self) -> tuple[int, int]:
        return self.joint.shape

    def to_dict(self) -> dict:
        return {
            "x_space": self.x_space.to_dict(),
            "z_space": self.z_space.to_dict(),
            "shape": list(self.joint.shape),
            "joint": self.joint.ravel().tolist(),
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "JointDesign":
        xs = WeightedSpace.from_dict(d["x_space"])
        zs = WeightedSpace.from_dict(d["z_space"])
        joint = np.asarray(d["joint"], dtype=float).reshape(xs.size, zs.size)
        return cls(xs, zs, joint, dict(d.get("metadata", {})))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "JointDesign":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class CondExpOp:
    """``t_table[z, x] = p(x | z)`` and ``tstar_table[x, z] = p(z | x)``."""

    design: JointDesign
    t_table: np.ndarray
    tstar_table: np.ndarray

    @property
    def x_space(self) -> WeightedSpace:
        return self.design.x_space

    @property
    def z_space(self) -> WeightedSpace:
        return self.design.z_space

    def whitened(self) -> np.ndarray:
        """``A = V^{1/2} T W^{-1/2}``, i.e. ``p(x, z) / sqrt(p(x) p(z))`` indexed [z, x]."""
        w = self.x_space.weights
        v = self.z_space.weights
        return self.design.joint.T / np.sqrt(np.outer(v, w))


@dataclass(frozen=True, eq=False)
class OperatorSVD:
    """Weighted SVD of T.

    Row ``i`` of ``left`` (on Z) and ``right`` (on X) pair with
    ``singular_values[i]``; only min(|Z|, |X|) pairs are kept.  ``rank`` counts
    values above the relative cutoff.
    """

    singular_values: np.ndarray
    left: np.ndarray
    right: np.ndarray
    rank: int
    cutoff: float
    z_weights: np.ndarray
    x_weights: np.ndarray


@dataclass(frozen=True, eq=False)
class ScenarioTruth:
    """Least-norm solution, response, minimal-norm multiplier and null spaces."""

    h0: np.ndarray
    r0: np.ndarray
    gbar0: np.ndarray
    nullspace_dim: int
    source_norm: float
    null_basis: np.ndarray  # orthonormal basis of null(T), rows on X
    conull_basis: np.ndarray  # orthonormal basis of null(T*), rows on Z

    def to_dict(self) -> dict:
        return {
            "h0": self.h0.tolist(),
            "r0": self.r0.tolist(),
            "gbar0": self.gbar0.tolist(),
            "nullspace_dim": self.nullspace_dim,
            "source_norm": self.source_norm,
        }


@dataclass(frozen=True)
class SourceDiagnostics:
    gamma: np.ndarray
    source_sum: float
    failing: tuple[int, ...]
    outside_range: float  # norm of the part of r0 outside span(left functions)

    @property
    def satisfied(self) -> bool:
        return not self.failing and self.outside_range <= RANGE_TOL


def build_operator(design: JointDesign) -> CondExpOp:
    p = design.joint
    t = p.T / design.z_space.weights[:, None]
    ts = p / design.x_space.weights[:, None]
    t.setflags(write=False)
    ts.setflags(write=False)
    return CondExpOp(design, t, ts)


def apply(op: CondExpOp, h) -> np.ndarray:
    """``(T h)(z) = E[h(X) | Z = z]``."""
    h = np.asarray(h, dtype=float)
    if h.shape != (op.x_space.size,):
        raise DimensionError(f"h has shape {h.shape}, X support has {op.x_space.size} points")
    return op.t_table @ h


def apply_adjoint(op: CondExpOp, g) -> np.ndarray:
    """``(T* g)(x) = E[g(Z) | X = x]``."""
    g = np.asarray(g, dtype=float)
    if g.shape != (op.z_space.size,):
        raise DimensionError(f"g has shape {g.shape}, Z support has {op.z_space.size} points")
    return op.tstar_table @ g


def _fix_signs(U: np.ndarray, Vt: np.ndarray, k: int) -> None:
    # Make the largest-magnitude entry of each right vector positive, in place.
    for i in range(k):
        j = np.argmax(np.abs(Vt[i]))
        if Vt[i, j] < 0:
            Vt[i] *= -1
            U[:, i] *= -1


def svd(op: CondExpOp, rcond: float = RCOND) -> OperatorSVD:
    """Singular system of T in the weighted geometry, by whitening."""
    A = op.whitened()
    try:
        U, s, Vt = np.linalg.svd(A, full_matrices=False)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise RuntimeError(f"SVD of the whitened operator failed: {exc}") from exc
    k = s.size
    _fix_signs(U, Vt, k)
    sqv = np.sqrt(op.z_space.weights)
    sqw = np.sqrt(op.x_space.weights)
    left = U.T / sqv
    right = Vt / sqw
    cutoff = rcond * (s[0] if k else 0.0)
    rank = int(np.sum(s > cutoff))
    return OperatorSVD(s, left, right, rank, cutoff, op.z_space.weights, op.x_space.weights)


def _null_bases(op: CondExpOp, rcond: float = RCOND) -> tuple[np.ndarray, np.ndarray]:
    A = op.whitened()
    U, s, Vt = np.linalg.svd(A, full_matrices=True)
    cutoff = rcond * (s[0] if s.size else 0.0)
    r = int(np.sum(s > cutoff))
    null_x = Vt[r:] / np.sqrt(op.x_space.weights)
    null_z = U[:, r:].T / np.sqrt(op.z_space.weights)
    return null_x, null_z


def null_basis(op: CondExpOp, rcond: float = RCOND) -> np.ndarray:
    """Weighted-orthonormal basis of null(T) (rows are functions on X)."""
    return _null_bases(op, rcond)[0]


def conull_basis(op: CondExpOp, rcond: float = RCOND) -> np.ndarray:
    """Weighted-orthonormal basis of null(T*) (rows are functions on Z)."""
    return _null_bases(op, rcond)[1]


def _relative_residual(resid: np.ndarray, target: np.ndarray) -> float:
    return float(np.linalg.norm(resid) / max(1.0, np.linalg.norm(target)))


def least_norm_solution(op: CondExpOp, r0, rcond: float = RCOND, tol: float = RANGE_TOL) -> np.ndarray:
    """Minimum-norm h with T h = r0.

    Raises
    ------
    NotInRangeError
        If the relative residual of the least-squares solution exceeds ``tol``.
    """
    r0 = np.asarray(r0, dtype=float)
    if r0.shape != (op.z_space.size,):
        raise DimensionError(f"r0 has shape {r0.shape}")
    A = op.whitened()
    sqv = np.sqrt(op.z_space.weights)
    rt = sqv * r0
    ht = np.linalg.pinv(A, rcond=rcond) @ rt
    res = _relative_residual(A @ ht - rt, rt)
    if res > tol:
        raise NotInRangeError(f"no solution: relative residual {res:.3e} of T h = r0")
    return ht / np.sqrt(op.x_space.weights)


def lagrange_multiplier(op: CondExpOp, r0, rcond: float = RCOND, tol: float = RANGE_TOL) -> np.ndarray:
    """Minimum-norm g with T T* g = r0 (the stationary multiplier of minimal norm)."""
    r0 = np.asarray(r0, dtype=float)
    if r0.shape != (op.z_space.size,):
        raise DimensionError(f"r0 has shape {r0.shape}")
    A = op.whitened()
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    sqv = np.sqrt(op.z_space.weights)
    rt = sqv * r0
    cutoff = rcond * (s[0] if s.size else 0.0)
    keep = s > cutoff
    coef = U[:, keep].T @ rt
    gt = U[:, keep] @ (coef / s[keep] ** 2)
    res = _relative_residual(A @ (A.T @ gt) - rt, rt)
    if res > tol:
        raise SourceConditionError(f"source condition violated numerically: relative residual {res:.3e}")
    return gt / sqv


def source_diagnostics(sv: OperatorSVD, r0) -> SourceDiagnostics:
    """Coefficients of r0 on the left singular functions and sum gamma_i^2 / sigma_i^4.

    Components with a nonzero coefficient but a singular value at or below the
    cutoff are reported in ``failing``.
    """
    r0 = np.asarray(r0, dtype=float)
    w = sv.z_weights
    if r0.shape != w.shape:
        raise DimensionError(f"r0 has shape {r0.shape}")
    gamma = (sv.left * w) @ r0
    s = sv.singular_values
    big = s > sv.cutoff
    scale = max(1.0, float(np.sqrt(np.dot(w, r0 * r0))))
    failing = tuple(int(i) for i in np.flatnonzero(~big & (np.abs(gamma) > RANGE_TOL * scale)))
    total = float(np.sum(gamma[big] ** 2 / s[big] ** 4))
    resid = r0 - gamma @ sv.left
    outside = float(np.sqrt(np.dot(w, resid * resid)))
    return SourceDiagnostics(gamma, total, failing, outside)


def illposedness_measure(op: CondExpOp, family, h_ref, tol: float = 1e-12) -> float:
    """Largest ratio ||h - h_ref||^2 / ||T(h - h_ref)||^2 over the family.

    Members equal to ``h_ref`` are skipped; a singleton (or all-equal) family
    returns 0.  ``math.inf`` marks a difference lying in null(T).
    """
    F = np.atleast_2d(np.asarray(family, dtype=float))
    if F.shape[0] == 0 or F.size == 0:
        raise ValueError("empty family")
    h_ref = np.asarray(h_ref, dtype=float)
    best = 0.0
    for h in F:
        d = h - h_ref
        num = norm(op.x_space, d) ** 2
        if num <= tol:
            continue
        den = norm(op.z_space, apply(op, d)) ** 2
        if den <= tol * num:
            return math.inf
        best = max(best, num / den)
    return best


def compute_truth(op: CondExpOp, r0, rcond: float = RCOND) -> ScenarioTruth:
    """Ground truth for a response r0 (which must lie in range(T))."""
    r0 = np.asarray(r0, dtype=float)
    h0 = least_norm_solution(op, r0, rcond)
    g0 = lagrange_multiplier(op, r0, rcond)
    nb, cb = _null_bases(op, rcond)
    return ScenarioTruth(
        h0=h0,
        r0=r0,
        gbar0=g0,
        nullspace_dim=int(nb.shape[0]),
        source_norm=norm(op.z_space, g0),
        null_basis=nb,
        conull_basis=cb,
    )

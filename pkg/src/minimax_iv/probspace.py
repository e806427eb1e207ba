"""Finite weighted probability spaces and the weighted L2 geometry on them.

Functions on a space are plain 1-d numpy arrays with one value per support
point; everything else in the package computes inner products through the
helpers defined here.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

WEIGHT_FLOOR = 1e-12
MASS_TOL = 1e-12
RCOND = 1e-10


class DimensionError(ValueError):
    """A function's length does not match the support it is evaluated on."""


@dataclass(frozen=True, eq=False)
class WeightedSpace:
    """Ordered finite support with strictly positive probability weights.

    ``coords`` optionally embeds the support labels into the real line (or
    R^d); kernels use it as their metric.  Without it the label index is used.
    """

    labels: tuple
    weights: np.ndarray
    coords: np.ndarray | None = None

    def __post_init__(self):
        labels = tuple(self.labels)
        weights = np.array(self.weights, dtype=float).ravel()
        if len(labels) != weights.size:
            raise DimensionError(f"{len(labels)} labels but {weights.size} weights")
        if len(set(labels)) != len(labels):
            raise ValueError("support labels must be distinct")
        if weights.size == 0:
            raise ValueError("empty support")
        if np.any(weights < WEIGHT_FLOOR):
            bad = int(np.argmin(weights))
            raise ValueError(f"weight {weights[bad]!r} at label {labels[bad]!r} is below {WEIGHT_FLOOR}")
        if abs(weights.sum() - 1.0) > MASS_TOL:
            raise ValueError(f"weights sum to {weights.sum()!r}, not 1")
        weights.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "weights", weights)
        if self.coords is not None:
            coords = np.array(self.coords, dtype=float)
            if coords.shape[0] != weights.size:
                raise DimensionError("coords must have one row per support point")
            coords.setflags(write=False)
            object.__setattr__(self, "coords", coords)

    @property
    def size(self) -> int:
        return self.weights.size

    def embedding(self) -> np.ndarray:
        """Real coordinates of the support, shape (size, d)."""
        if self.coords is None:
            return np.arange(self.size, dtype=float)[:, None]
        c = self.coords
        return c[:, None] if c.ndim == 1 else c

    @classmethod
    def uniform(cls, n: int, labels: Sequence | None = None) -> "WeightedSpace":
        return cls(tuple(range(n)) if labels is None else tuple(labels), np.full(n, 1.0 / n))

    def to_dict(self) -> dict:
        d = {"labels": list(self.labels), "weights": self.weights.tolist()}
        if self.coords is not None:
            d["coords"] = self.coords.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "WeightedSpace":
        return cls(tuple(d["labels"]), np.asarray(d["weights"], dtype=float), d.get("coords"))

    def __eq__(self, other):
        if not isinstance(other, WeightedSpace):
            return NotImplemented
        return (
            self.labels == other.labels
            and np.array_equal(self.weights, other.weights)
            and (
                (self.coords is None and other.coords is None)
                or (self.coords is not None and other.coords is not None and np.array_equal(self.coords, other.coords))
            )
        )

    __hash__ = None


def _check(space: WeightedSpace, *fs: np.ndarray) -> list[np.ndarray]:
    out = []
    for f in fs:
        f = np.asarray(f, dtype=float)
        if f.shape != (space.size,):
            raise DimensionError(f"function of shape {f.shape} on a support of size {space.size}")
        out.append(f)
    return out


def inner_product(space: WeightedSpace, f, g) -> float:
    """Weighted inner product sum_i w_i f_i g_i."""
    f, g = _check(space, f, g)
    return float(np.dot(space.weights * f, g))


def norm(space: WeightedSpace, f) -> float:
    """Weighted L2 norm."""
    (f,) = _check(space, f)
    return float(np.sqrt(np.dot(space.weights, f * f)))


def gram(space: WeightedSpace, basis) -> np.ndarray:
    """Gram matrix of the rows of ``basis`` in the weighted inner product."""
    B = np.atleast_2d(np.asarray(basis, dtype=float))
    if B.shape[1] != space.size:
        raise DimensionError(f"basis rows have length {B.shape[1]}, support has {space.size}")
    return (B * space.weights) @ B.T


def orthogonal_projection(space: WeightedSpace, f, basis, rcond: float = RCOND) -> np.ndarray:
    """Project ``f`` onto span(basis) in the weighted geometry.

    The basis need not be orthonormal or even linearly independent; the Gram
    system is solved by a pseudoinverse whose cutoff is ``rcond`` times the
    largest singular value.
    """
    (f,) = _check(space, f)
    B = np.atleast_2d(np.asarray(basis, dtype=float))
    if B.size == 0:
        return np.zeros_like(f)
    G = gram(space, B)
    rhs = (B * space.weights) @ f
    coef = np.linalg.pinv(G, rcond=rcond, hermitian=True) @ rhs
    return coef @ B


def orthonormalize(space: WeightedSpace, funcs, tol: float = 1e-10) -> np.ndarray:
    """Modified Gram-Schmidt in the weighted inner product.

    Functions that are (numerically) dependent on earlier ones are dropped.
    """
    out: list[np.ndarray] = []
    for f in np.atleast_2d(np.asarray(funcs, dtype=float)):
        (v,) = _check(space, f)
        v = v.copy()
        for _ in range(2):  # re-orthogonalise once for stability
            for q in out:
                v -= inner_product(space, v, q) * q
        nv = norm(space, v)
        if nv > tol * max(1.0, norm(space, f)):
            out.append(v / nv)
    return np.array(out).reshape(len(out), space.size)

"""Hypothesis and discriminator families with known sup-norm bounds."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .npivop import ScenarioTruth
from .probspace import WeightedSpace, norm, orthogonal_projection

PSD_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class FiniteFamily:
    """Finite list of functions on one support (rows of ``members``).

    ``space`` is ``"x"`` or ``"z"`` and only records which support the rows
    live on.  ``sup_bound`` defaults to the largest member sup norm.
    """

    members: np.ndarray
    space: str = "x"
    sup_bound: float | None = None
    tags: tuple = ()

    def __post_init__(self):
        M = np.atleast_2d(np.asarray(self.members, dtype=float))
        if M.shape[0] == 0 or M.size == 0:
            raise ValueError("a finite family needs at least one member")
        M = M.copy()
        M.setflags(write=False)
        object.__setattr__(self, "members", M)
        exact = float(np.max(np.abs(M)))
        if self.sup_bound is None:
            object.__setattr__(self, "sup_bound", exact)
        elif exact > self.sup_bound + 1e-12:
            raise ValueError(f"member sup norm {exact} exceeds the declared bound {self.sup_bound}")
        if self.tags and len(self.tags) != M.shape[0]:
            raise ValueError("tags must have one entry per member")
        object.__setattr__(self, "tags", tuple(self.tags))

    def __len__(self) -> int:
        return self.members.shape[0]

    def __getitem__(self, i) -> np.ndarray:
        return self.members[i]

    def index_of(self, f, atol: float = 0.0) -> int | None:
        """Index of the first member equal to ``f`` (exactly by default)."""
        hit = np.flatnonzero(np.all(np.abs(self.members - np.asarray(f)) <= atol, axis=1))
        return int(hit[0]) if hit.size else None

    def contains(self, f, atol: float = 0.0) -> bool:
        return self.index_of(f, atol) is not None

    def with_member(self, f, tag: str = "") -> "FiniteFamily":
        tags = self.tags + (tag,) if self.tags else ()
        return FiniteFamily(np.vstack([self.members, f]), self.space, None, tags)

    def permuted(self, perm) -> "FiniteFamily":
        perm = np.asarray(perm)
        tags = tuple(self.tags[i] for i in perm) if self.tags else ()
        return FiniteFamily(self.members[perm], self.space, self.sup_bound, tags)

    def to_dict(self) -> dict:
        return {"type": "finite", "space": self.space, "sup_bound": self.sup_bound,
                "members": self.members.tolist(), "tags": list(self.tags)}

    @classmethod
    def from_dict(cls, d: dict) -> "FiniteFamily":
        return cls(d["members"], d.get("space", "x"), d.get("sup_bound"), tuple(d.get("tags", ())))


@dataclass(frozen=True, eq=False)
class LinearFamily:
    """``{theta @ basis : |theta|_2 <= radius}`` on the X support."""

    basis: np.ndarray
    radius: float

    def __post_init__(self):
        B = np.atleast_2d(np.asarray(self.basis, dtype=float))
        if B.size == 0:
            raise ValueError("basis must be nonempty")
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        object.__setattr__(self, "basis", B)

    @property
    def sup_bound(self) -> float:
        # Cauchy-Schwarz gives B * max_x |phi(x)|_2, which never exceeds B * max_x sum_j |phi_j(x)|.
        return float(self.radius * np.max(np.linalg.norm(self.basis, axis=0)))

    @property
    def loose_sup_bound(self) -> float:
        return float(self.radius * np.max(np.sum(np.abs(self.basis), axis=0)))

    def evaluate(self, theta) -> np.ndarray:
        return np.asarray(theta, dtype=float) @ self.basis

    def to_dict(self) -> dict:
        return {"type": "linear", "basis": self.basis.tolist(), "radius": self.radius,
                "sup_bound": self.sup_bound}


@dataclass(frozen=True)
class RKHSBall:
    """Unit ball of a Gaussian RKHS on the Z support.

    ``bandwidth=None`` selects the median heuristic on the points passed to
    :func:`gram_matrix`.
    """

    kind: str = "gaussian"
    bandwidth: float | None = None

    def __post_init__(self):
        if self.kind != "gaussian":
            raise ValueError(f"unsupported kernel {self.kind!r}")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")

    def to_dict(self) -> dict:
        return {"type": "rkhs_ball", "kernel": self.kind, "bandwidth": self.bandwidth, "radius": 1.0}


def median_bandwidth(points) -> float:
    """Median pairwise distance among the distinct points (1.0 if fewer than two)."""
    P = np.unique(np.atleast_2d(np.asarray(points, dtype=float).reshape(len(points), -1)), axis=0)
    if P.shape[0] < 2:
        return 1.0
    d = np.sqrt(((P[:, None, :] - P[None, :, :]) ** 2).sum(-1))
    iu = np.triu_indices(P.shape[0], 1)
    med = float(np.median(d[iu]))
    return med if med > 0 else 1.0


def kernel_matrix(ball: RKHSBall, a, b, bandwidth: float) -> np.ndarray:
    A = np.asarray(a, dtype=float).reshape(len(a), -1)
    B = np.asarray(b, dtype=float).reshape(len(b), -1)
    d2 = ((A[:, None, :] - B[None, :, :]) ** 2).sum(-1)
    return np.exp(-d2 / (2.0 * bandwidth**2))


def gram_matrix(ball: RKHSBall, points) -> np.ndarray:
    """``K[i, j] = k(z_i, z_j)``; raises if the result is not PSD to tolerance."""
    pts = np.asarray(points, dtype=float)
    bw = ball.bandwidth if ball.bandwidth is not None else median_bandwidth(pts)
    K = kernel_matrix(ball, pts, pts, bw)
    K = 0.5 * (K + K.T)
    lam = np.linalg.eigvalsh(K)
    if lam[0] < -PSD_TOL * max(1.0, lam[-1]):
        raise ValueError(f"kernel Gram matrix is not PSD (min eigenvalue {lam[0]:.3e})")
    return K


def sup_norm_bound(family) -> float:
    """Exact maximum for finite families, recorded bound for linear ones."""
    if isinstance(family, FiniteFamily):
        return float(np.max(np.abs(family.members)))
    if isinstance(family, LinearFamily):
        return family.sup_bound
    raise TypeError(f"no sup-norm bound for {type(family).__name__}")


def _unit(space: WeightedSpace, f: np.ndarray) -> np.ndarray:
    n = norm(space, f)
    return f / n if n > 0 else f


@dataclass(frozen=True)
class DistractorRecipe:
    """How seeded distractors are drawn around h0 and the multiplier.

    ``h_kinds``/``g_kinds`` cycle through ``"null"`` (shift inside null(T) or
    null(T*)), ``"range"`` (shift orthogonal to it), ``"scale"`` (shift
    along f itself), ``"random"`` (unrestricted direction) and
    ``"independent"`` (fresh draw of magnitude comparable to f, ignoring the
    scale).  Each shift has weighted L2 norm equal to the scale.  ``signed``
    adds the mirrored shift for every direction; ``g_signed`` overrides it for
    the discriminator family.
    """

    h_kinds: tuple = ("null", "range", "random", "scale", "independent")
    g_kinds: tuple = ("random", "null", "scale", "independent")
    signed: bool = False
    clip: float | None = None
    g_signed: bool | None = None

    def to_dict(self) -> dict:
        return {"h_kinds": list(self.h_kinds), "g_kinds": list(self.g_kinds),
                "signed": self.signed, "clip": self.clip, "g_signed": self.g_signed}

    @classmethod
    def from_dict(cls, d: dict) -> "DistractorRecipe":
        return cls(tuple(d.get("h_kinds", cls.h_kinds)), tuple(d.get("g_kinds", cls.g_kinds)),
                   bool(d.get("signed", False)), d.get("clip"), d.get("g_signed"))


def _draw_shift(kind: str, space: WeightedSpace, f: np.ndarray, null_b: np.ndarray,
                rng: np.random.Generator) -> np.ndarray | None:
    n = space.size
    if kind == "null":
        if null_b.shape[0] == 0:
            return None
        return _unit(space, rng.normal(size=null_b.shape[0]) @ null_b)
    if kind == "range":
        v = rng.normal(size=n)
        if null_b.shape[0]:
            v = v - orthogonal_projection(space, v, null_b)
        return _unit(space, v)
    if kind == "random":
        return _unit(space, rng.normal(size=n))
    if kind == "scale":
        return _unit(space, f) if norm(space, f) > 0 else _unit(space, np.ones(n))
    raise ValueError(f"unknown distractor kind {kind!r}")


def _distractors(f: np.ndarray, space: WeightedSpace, null_b: np.ndarray, count: int, scale: float,
                 kinds, signed: bool, rng: np.random.Generator) -> tuple[list[np.ndarray], list[str]]:
    out: list[np.ndarray] = []
    tags: list[str] = []
    mag = max(1.0, norm(space, f))
    i = 0
    guard = 0
    while len(out) < count:
        kind = kinds[i % len(kinds)]
        i += 1
        guard += 1
        if guard > 50 * (count + 1):  # pragma: no cover - only reachable with no usable kinds
            raise ValueError("could not draw distractors with the given kinds")
        if kind == "independent":
            d = mag * _unit(space, rng.normal(size=space.size))
            out.append(d)
            tags.append("independent")
            continue
        shift = _draw_shift(kind, space, f, null_b, rng)
        if shift is None:
            continue
        for sgn in ((1.0, -1.0) if signed else (1.0,)):
            if len(out) < count:
                out.append(f + sgn * scale * shift)
                tags.append(kind if sgn > 0 else f"-{kind}")
    return out, tags


def make_realizable_families(
    truth: ScenarioTruth,
    x_space: WeightedSpace,
    z_space: WeightedSpace,
    distractors: int,
    scale: float,
    seed: int,
    *,
    g_distractors: int | None = None,
    g_scale: float | None = None,
    recipe: DistractorRecipe | None = None,
    eps_h: float = 0.0,
    eps_g: float = 0.0,
) -> tuple[FiniteFamily, FiniteFamily]:
    """Families containing h0 and the minimal-norm multiplier, plus distractors.

    With ``eps_h``/``eps_g`` > 0 the true functions are replaced by copies
    displaced by exactly that weighted L2 distance.  The displacement of h0 is
    drawn at random; the displacement of the multiplier is taken orthogonal to
    null(T*) so that its distance to the whole multiplier set is ``eps_g``.

    Index 0 of each family is the (possibly displaced) true function.
    """
    recipe = recipe or DistractorRecipe()
    rng = np.random.default_rng(seed)
    gd = distractors if g_distractors is None else g_distractors
    gs = scale if g_scale is None else g_scale

    h_first = truth.h0.copy()
    h_tag = "h0"
    if eps_h > 0:
        h_first = truth.h0 + eps_h * _unit(x_space, rng.normal(size=x_space.size))
        h_tag = "h_dagger"
    g_first = truth.gbar0.copy()
    g_tag = "gbar0"
    if eps_g > 0:
        v = rng.normal(size=z_space.size)
        if truth.conull_basis.shape[0]:
            v = v - orthogonal_projection(z_space, v, truth.conull_basis)
        g_first = truth.gbar0 + eps_g * _unit(z_space, v)
        g_tag = "g_dagger"

    hs, htags = _distractors(truth.h0, x_space, truth.null_basis, distractors, scale,
                             recipe.h_kinds, recipe.signed, rng)
    gs_, gtags = _distractors(truth.gbar0, z_space, truth.conull_basis, gd, gs,
                              recipe.g_kinds, recipe.signed if recipe.g_signed is None else recipe.g_signed, rng)
    H = np.vstack([h_first] + hs) if hs else h_first[None, :]
    G = np.vstack([g_first] + gs_) if gs_ else g_first[None, :]
    if recipe.clip is not None:
        H[1:] = np.clip(H[1:], -recipe.clip, recipe.clip)
        G[1:] = np.clip(G[1:], -recipe.clip, recipe.clip)
    return (FiniteFamily(H, "x", tags=(h_tag, *htags)),
            FiniteFamily(G, "z", tags=(g_tag, *gtags)))


def save_families(path, H: FiniteFamily, G: FiniteFamily, extra: dict | None = None) -> None:
    with open(path, "w") as fh:
        json.dump({"H": H.to_dict(), "G": G.to_dict(), **(extra or {})}, fh)


def load_families(path) -> tuple[FiniteFamily, FiniteFamily]:
    with open(path) as fh:
        d = json.load(fh)
    return FiniteFamily.from_dict(d["H"]), FiniteFamily.from_dict(d["G"])

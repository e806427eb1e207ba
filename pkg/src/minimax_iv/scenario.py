"""Sampleable NPIV problems with prescribed spectra and known ground truth."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .npivop import CondExpOp, JointDesign, ScenarioTruth, apply, build_operator, compute_truth
from .probspace import DimensionError, WeightedSpace, inner_product, orthonormalize


@dataclass(frozen=True)
class Noise:
    """Outcome noise independent of (X, Z).

    ``kind`` is ``"uniform"`` (on [-scale, scale]), ``"gaussian"`` (sd
    ``scale``) or ``"none"``.  All kinds have mean zero, so E[eps | Z] = 0.
    """

    kind: str = "uniform"
    scale: float = 0.5

    def __post_init__(self):
        if self.kind not in ("uniform", "gaussian", "none"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.scale < 0:
            raise ValueError("noise scale must be nonnegative")

    @property
    def mean(self) -> float:
        return 0.0

    @property
    def second_moment(self) -> float:
        if self.kind == "uniform":
            return self.scale**2 / 3.0
        if self.kind == "gaussian":
            return self.scale**2
        return 0.0

    @property
    def bound(self) -> float:
        return float("inf") if self.kind == "gaussian" else (self.scale if self.kind == "uniform" else 0.0)

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "uniform":
            return rng.uniform(-self.scale, self.scale, size=n)
        if self.kind == "gaussian":
            return rng.normal(0.0, self.scale, size=n)
        return np.zeros(n)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "scale": self.scale}


def cosine_system(space: WeightedSpace, m: int) -> np.ndarray:
    """``m`` weighted-orthonormal functions orthogonal to constants.

    Discrete cosines ``cos(pi k (i + 1/2) / N)`` for k = 1..m, Gram-Schmidt
    orthonormalised after the constant function.
    """
    N = space.size
    if m > N - 1:
        raise ValueError(f"at most {N - 1} non-constant orthonormal functions on {N} points")
    i = np.arange(N) + 0.5
    raw = [np.ones(N)] + [np.cos(np.pi * k * i / N) for k in range(1, N)]
    q = orthonormalize(space, raw)
    if q.shape[0] < m + 1:  # pragma: no cover - cosines span the space
        raise ValueError("cosine system is degenerate on this support")
    return q[1 : m + 1]


def walsh_system(N: int, m: int) -> np.ndarray:
    """First ``m`` non-constant +-1 valued Walsh functions on 2^k uniform points.

    They are orthonormal under uniform weights and have sup norm 1, the
    smallest possible for unit-norm functions.
    """
    if N & (N - 1) or N < 2:
        raise ValueError("Walsh functions need a power-of-two support")
    if m > N - 1:
        raise ValueError(f"at most {N - 1} non-constant Walsh functions on {N} points")
    H = np.array([[1.0]])
    while H.shape[0] < N:
        H = np.block([[H, H], [H, -H]])
    # order rows by number of sign changes (sequency)
    seq = np.sum(np.abs(np.diff(np.sign(H), axis=1)) > 0, axis=1)
    H = H[np.argsort(seq, kind="stable")]
    return H[1 : m + 1]


@dataclass(frozen=True, eq=False)
class SpectralSpec:
    """Inverse-SVD recipe for a design.

    Rows of ``x_system``/``z_system`` beyond ``len(sigma)`` are allowed: extra
    X rows are null-space directions of the resulting operator and
    ``null_coef`` places the structural function partly along them.
    ``mean`` is the constant component shared by h0, r0 and the multiplier.
    """

    x_weights: np.ndarray
    z_weights: np.ndarray
    x_system: np.ndarray
    z_system: np.ndarray
    sigma: np.ndarray
    beta: np.ndarray
    mean: float = 0.0
    null_coef: np.ndarray = field(default_factory=lambda: np.zeros(0))
    noise: Noise = field(default_factory=Noise)
    x_coords: np.ndarray | None = None
    z_coords: np.ndarray | None = None

    def __post_init__(self):
        for name in ("x_weights", "z_weights", "sigma", "beta", "null_coef"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).ravel())
        xs = np.asarray(self.x_system, dtype=float).reshape(-1, self.x_weights.size)
        zs = np.asarray(self.z_system, dtype=float).reshape(-1, self.z_weights.size)
        object.__setattr__(self, "x_system", xs)
        object.__setattr__(self, "z_system", zs)
        k = self.sigma.size
        if self.beta.size != k:
            raise DimensionError("beta and sigma must have equal length")
        if xs.shape[0] < k or zs.shape[0] < k:
            raise DimensionError("each system needs at least len(sigma) functions")
        if xs.shape[0] - k < self.null_coef.size:
            raise DimensionError("null_coef is longer than the spare X functions")
        if np.any(self.sigma <= 0) or np.any(self.sigma >= 1):
            raise ValueError("prescribed singular values must lie in (0, 1)")
        for sp_w, sys_, tag in ((self.x_weights, xs, "X"), (self.z_weights, zs, "Z")):
            full = np.vstack([np.ones(sp_w.size), sys_])
            G = (full * sp_w) @ full.T
            if np.max(np.abs(G - np.eye(G.shape[0]))) > 1e-8:
                raise ValueError(f"{tag} system is not weighted-orthonormal and orthogonal to constants")

    @property
    def positivity_margin(self) -> float:
        """``1 - sum sigma_i |v_i|_inf |u_i|_inf``; positive guarantees a valid table."""
        k = self.sigma.size
        sx = np.max(np.abs(self.x_system[:k]), axis=1) if k else np.zeros(0)
        sz = np.max(np.abs(self.z_system[:k]), axis=1) if k else np.zeros(0)
        return float(1.0 - np.sum(self.sigma * sx * sz))

    def structural_function(self) -> np.ndarray:
        """h* = mean + sum sigma_i beta_i v_i + sum null_coef_j v_{k+j}."""
        k = self.sigma.size
        h = self.mean + (self.sigma * self.beta) @ self.x_system[:k]
        if self.null_coef.size:
            h = h + self.null_coef @ self.x_system[k : k + self.null_coef.size]
        return h

    def to_dict(self) -> dict:
        d = {
            "x_weights": self.x_weights.tolist(),
            "z_weights": self.z_weights.tolist(),
            "x_system": self.x_system.tolist(),
            "z_system": self.z_system.tolist(),
            "sigma": self.sigma.tolist(),
            "beta": self.beta.tolist(),
            "mean": self.mean,
            "null_coef": self.null_coef.tolist(),
            "noise": self.noise.to_dict(),
        }
        if self.x_coords is not None:
            d["x_coords"] = np.asarray(self.x_coords).tolist()
        if self.z_coords is not None:
            d["z_coords"] = np.asarray(self.z_coords).tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SpectralSpec":
        return cls(
            x_weights=d["x_weights"],
            z_weights=d["z_weights"],
            x_system=d["x_system"],
            z_system=d["z_system"],
            sigma=d["sigma"],
            beta=d["beta"],
            mean=d.get("mean", 0.0),
            null_coef=d.get("null_coef", []),
            noise=Noise(**d.get("noise", {})),
            x_coords=d.get("x_coords"),
            z_coords=d.get("z_coords"),
        )


def make_spectral_spec(nx: int, nz: int, sigma, beta, *, mean: float = 0.0, null_coef=(),
                       basis: str = "cosine", x_weights=None, z_weights=None,
                       noise: Noise | None = None) -> SpectralSpec:
    """Convenience constructor with cosine or Walsh systems.

    X gets ``len(sigma) + len(null_coef)`` functions, Z gets ``len(sigma)``.
    """
    sigma = np.asarray(sigma, dtype=float)
    null_coef = np.asarray(null_coef, dtype=float)
    k = sigma.size
    mx = k + null_coef.size
    if basis == "walsh":
        if x_weights is not None or z_weights is not None:
            raise ValueError("Walsh systems require uniform weights")
        xw, zw = np.full(nx, 1.0 / nx), np.full(nz, 1.0 / nz)
        xs, zs = walsh_system(nx, mx), walsh_system(nz, k)
    elif basis == "cosine":
        xw = np.full(nx, 1.0 / nx) if x_weights is None else np.asarray(x_weights, dtype=float)
        zw = np.full(nz, 1.0 / nz) if z_weights is None else np.asarray(z_weights, dtype=float)
        xs = cosine_system(WeightedSpace.uniform(nx) if x_weights is None else WeightedSpace(tuple(range(nx)), xw), mx)
        zs = cosine_system(WeightedSpace.uniform(nz) if z_weights is None else WeightedSpace(tuple(range(nz)), zw), k)
    else:
        raise ValueError(f"unknown basis {basis!r}")
    return SpectralSpec(xw, zw, xs, zs, sigma, beta, mean, null_coef, noise or Noise())


def build_spectral_design(spec: SpectralSpec) -> JointDesign:
    """Joint table ``p(x, z) = w_x v_z (1 + sum_i sigma_i v_i(x) u_i(z))``.

    Raises
    ------
    ValueError
        Naming the first cell whose mass would be negative.
    """
    k = spec.sigma.size
    core = np.ones((spec.x_weights.size, spec.z_weights.size))
    if k:
        core = core + (spec.x_system[:k].T * spec.sigma) @ spec.z_system[:k]
    if np.any(core < 0):
        x, z = np.unravel_index(np.argmin(core), core.shape)
        raise ValueError(f"positivity violated at cell (x={x}, z={z}): factor {core[x, z]:.4g} < 0")
    joint = np.outer(spec.x_weights, spec.z_weights) * core
    joint = joint / joint.sum()
    xs = WeightedSpace(tuple(range(spec.x_weights.size)), spec.x_weights, spec.x_coords)
    zs = WeightedSpace(tuple(range(spec.z_weights.size)), spec.z_weights, spec.z_coords)
    return JointDesign(xs, zs, joint, {"kind": "spectral", "sigma": spec.sigma.tolist()})


@dataclass(frozen=True, eq=False)
class Scenario:
    """A design with an outcome rule ``Y = h_star(X) + eps``."""

    design: JointDesign
    op: CondExpOp
    truth: ScenarioTruth
    h_star: np.ndarray
    noise: Noise
    name: str = ""

    @property
    def nx(self) -> int:
        return self.design.shape[0]

    @property
    def nz(self) -> int:
        return self.design.shape[1]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "design": self.design.to_dict(),
            "h_star": self.h_star.tolist(),
            "noise": self.noise.to_dict(),
            "truth": self.truth.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        design = JointDesign.from_dict(d["design"])
        return attach_truth(design, d["h_star"], Noise(**d.get("noise", {})), name=d.get("name", ""))


def attach_truth(design: JointDesign, h_star, noise: Noise | None = None, name: str = "") -> Scenario:
    """Compute r0 = T h*, then the least-norm h0 and multiplier from the design."""
    op = build_operator(design)
    h_star = np.asarray(h_star, dtype=float)
    if h_star.shape != (design.shape[0],):
        raise DimensionError(f"h_star has shape {h_star.shape}")
    r0 = apply(op, h_star)
    truth = compute_truth(op, r0)
    return Scenario(design, op, truth, h_star, noise or Noise(), name)


def spectral_scenario(spec: SpectralSpec, name: str = "") -> Scenario:
    return attach_truth(build_spectral_design(spec), spec.structural_function(), spec.noise, name)


@dataclass(frozen=True, eq=False)
class Dataset:
    """``n`` observations as support indices plus real outcomes."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    seed: int | None = None
    scenario_name: str = ""

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.int64)
        z = np.asarray(self.z, dtype=np.int64)
        y = np.asarray(self.y, dtype=float)
        if not (x.shape == y.shape == z.shape) or x.ndim != 1:
            raise DimensionError("x, y, z must be 1-d arrays of equal length")
        if x.size < 1:
            raise ValueError("a dataset needs at least one observation")
        if x.min() < 0 or z.min() < 0:
            raise ValueError("support indices must be nonnegative")
        for a in (x, y, z):
            a.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)

    @property
    def n(self) -> int:
        return self.x.size

    def to_dict(self) -> dict:
        return {"seed": self.seed, "scenario": self.scenario_name,
                "x": self.x.tolist(), "y": self.y.tolist(), "z": self.z.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Dataset":
        return cls(d["x"], d["y"], d["z"], d.get("seed"), d.get("scenario", ""))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y", "z"])
        for xi, yi, zi in zip(self.x.tolist(), self.y.tolist(), self.z.tolist()):
            w.writerow([xi, repr(yi), zi])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, seed: int | None = None) -> "Dataset":
        rows = list(csv.DictReader(io.StringIO(text)))
        return cls([int(r["x"]) for r in rows], [float(r["y"]) for r in rows], [int(r["z"]) for r in rows], seed)


def sample(scenario: Scenario, n: int, seed: int) -> Dataset:
    """Draw ``n`` i.i.d. triples; identical arguments give identical datasets."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    p = scenario.design.joint.ravel()
    cells = rng.choice(p.size, size=n, p=p / p.sum())
    x, z = np.divmod(cells, scenario.nz)
    y = scenario.h_star[x] + scenario.noise.draw(rng, n)
    return Dataset(x, y, z, seed, scenario.name)


# ---------------------------------------------------------------------------
# shipped fixtures


def fixture_w1() -> JointDesign:
    """Binary X, Z with joint [[0.4, 0.1], [0.1, 0.4]]; singular values (1, 0.6)."""
    return JointDesign.from_table([[0.4, 0.1], [0.1, 0.4]], metadata={"name": "W1"})


def fixture_w2() -> JointDesign:
    """Three-point X, binary Z; T has a one-dimensional null space."""
    return JointDesign.from_table([[0.2, 0.1], [0.1, 0.2], [0.2, 0.2]], metadata={"name": "W2"})


def default_spectral_spec(noise: Noise | None = None) -> SpectralSpec:
    """Non-identified spectral design used by the rate sweep and verify suite.

    Six X points, five Z points, two coupled directions with sigma = (0.3,
    0.15): null(T) has dimension 3 and null(T*) dimension 2.
    """
    return make_spectral_spec(6, 5, sigma=[0.3, 0.15], beta=[1.0, -0.8], mean=0.5,
                              null_coef=[0.6, -0.4], noise=noise or Noise("uniform", 0.5))


def random_spectral_spec(rng: np.random.Generator, *, nx: int | None = None, nz: int | None = None,
                         k: int | None = None, noise: Noise | None = None) -> SpectralSpec:
    """Random non-identified spectral spec (nx > k + 1 guarantees a null space).

    Weights are random, systems are random functions orthonormalised against
    constants, and singular values are shrunk until every cell is positive.
    """
    nx = int(rng.integers(4, 8)) if nx is None else nx
    nz = int(rng.integers(3, 7)) if nz is None else nz
    k = int(rng.integers(1, min(nx - 1, nz))) if k is None else k
    if k > min(nx - 2, nz - 1):
        raise ValueError("need k <= min(nx - 2, nz - 1) for a non-trivial null space")
    xw = rng.dirichlet(np.full(nx, 5.0))
    zw = rng.dirichlet(np.full(nz, 5.0))
    xsp = WeightedSpace(tuple(range(nx)), xw)
    zsp = WeightedSpace(tuple(range(nz)), zw)
    xs = orthonormalize(xsp, np.vstack([np.ones(nx), rng.normal(size=(nx - 1, nx))]))[1:]
    zs = orthonormalize(zsp, np.vstack([np.ones(nz), rng.normal(size=(nz - 1, nz))]))[1:]
    sigma = np.sort(rng.uniform(0.2, 0.9, size=k))[::-1]
    sup = np.max(np.abs(xs[:k]), axis=1) * np.max(np.abs(zs[:k]), axis=1)
    total = float(np.sum(sigma * sup))
    if total >= 0.9:
        sigma = sigma * 0.9 / total
    beta = rng.normal(size=k)
    n_null = nx - 1 - k
    null_coef = rng.normal(size=n_null)
    return SpectralSpec(xw, zw, xs, zs, sigma, beta, float(rng.normal()), null_coef,
                        noise or Noise("uniform", 0.5))


def scenario_from_config(d: dict) -> Scenario:
    """Scenario from a JSON-style mapping.

    Accepted forms: ``{"fixture": "W1"|"W2"|"default", "h_star": [...]}``,
    ``{"spectral": {...SpectralSpec fields...}}``,
    ``{"spectral_simple": {"nx":..,"nz":..,"sigma":..,"beta":..,...}}``,
    or a serialized :class:`Scenario` (``{"design": ..., "h_star": ...}``).
    """
    noise = Noise(**d["noise"]) if "noise" in d else None
    name = d.get("name", "")
    if "fixture" in d:
        f = d["fixture"]
        if f == "default":
            return spectral_scenario(default_spectral_spec(noise), name or "default")
        design = {"W1": fixture_w1, "W2": fixture_w2}[f]()
        h_star = d.get("h_star", [1.0, -1.0] if f == "W1" else [1.0, 2.0, 3.0])
        return attach_truth(design, h_star, noise, name or f)
    if "spectral" in d:
        spec = SpectralSpec.from_dict(d["spectral"])
        return spectral_scenario(spec, name or "spectral")
    if "spectral_simple" in d:
        kw = dict(d["spectral_simple"])
        nx, nz = kw.pop("nx"), kw.pop("nz")
        if noise is not None:
            kw["noise"] = noise
        return spectral_scenario(make_spectral_spec(nx, nz, **kw), name or "spectral")
    if "design" in d:
        return Scenario.from_dict(d)
    raise ValueError("unrecognised scenario description")


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        return scenario_from_config(json.load(fh))


def weighted_coefficients(space: WeightedSpace, f, system) -> np.ndarray:
    """Coefficients of ``f`` on each row of an orthonormal ``system``."""
    return np.array([inner_product(space, f, s) for s in np.atleast_2d(system)])

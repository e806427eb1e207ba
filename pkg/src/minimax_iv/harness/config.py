"""Run configuration: JSON schema, validation and hashing."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace

from ..funclass import DistractorRecipe

ESTIMATORS = ("penalized_minimax", "dikkala", "liao", "bennett_flip", "both_worlds")
DEFAULT_N_GRID = tuple(512 * 2**k for k in range(7))
OUT_ENV = "MINIMAX_IV_OUT"


class ConfigError(ValueError):
    """Invalid run configuration (CLI exit status 2)."""


@dataclass(frozen=True)
class FamilySpec:
    """How the finite families are built for each sample size.

    The hypothesis perturbation scale is ``scale * n^(-rate)``; ``rate=0``
    gives the same families for every n.  Distractor directions come from
    ``seed`` (derived from the master seed when ``None``) and never depend on
    n or the replication.
    """

    distractors: int = 2
    scale: float = 1.0
    rate: float = 0.25
    g_distractors: int = 1
    g_scale: float = 4.0
    recipe: DistractorRecipe = field(default_factory=lambda: DistractorRecipe(
        h_kinds=("scale",), g_kinds=("scale",), signed=True, g_signed=False))
    include_structural: bool = True
    seed: int | None = None
    eps_h: float = 0.0
    eps_g: float = 0.0

    def scale_at(self, n: int) -> float:
        return self.scale * n ** (-self.rate)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["recipe"] = self.recipe.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FamilySpec":
        d = dict(d)
        if "recipe" in d:
            d["recipe"] = DistractorRecipe.from_dict(d["recipe"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown family keys: {sorted(unknown)}")
        return cls(**d)


def default_estimators() -> dict:
    return {
        "penalized_minimax": {},
        "dikkala": {},
        "liao": {"c": 1.0},
        "bennett_flip": {},
        "both_worlds": {"c": 1.0, "delta": 0.1},
    }


def default_verify() -> dict:
    return {
        "random_scenarios": 20,
        "seeds": 400,
        "n_values": [50, 200, 1000],
        "distractors": 7,
        "scale": 0.3,
        "eps_h": [0.05, 0.1, 0.2],
        "eps_g": [0.0, 0.1],
        "misspec_reps": 50,
        "games": 100,
        "exclude_h0": False,
    }


@dataclass(frozen=True)
class RunConfig:
    scenario: dict = field(default_factory=lambda: {"fixture": "default"})
    estimators: dict = field(default_factory=default_estimators)
    n_grid: tuple = DEFAULT_N_GRID
    reps: int = 50
    master_seed: int = 0
    out_dir: str | None = None
    families: FamilySpec = field(default_factory=FamilySpec)
    tolerances: dict = field(default_factory=lambda: {"bound": 1e-9})
    population: bool = False
    check_bounds: bool = True
    n: int = 1000
    verify: dict = field(default_factory=default_verify)

    def __post_init__(self):
        object.__setattr__(self, "verify", {**default_verify(), **self.verify})

    def validate(self) -> "RunConfig":
        if not isinstance(self.scenario, dict) or not self.scenario:
            raise ConfigError("scenario must be a nonempty mapping")
        unknown = [e for e in self.estimators if e not in ESTIMATORS]
        if unknown:
            raise ConfigError(f"unknown estimators: {unknown}; known: {list(ESTIMATORS)}")
        if not self.estimators:
            raise ConfigError("no estimators selected")
        grid = list(self.n_grid)
        if not grid or any(not isinstance(n, int) or n < 1 for n in grid):
            raise ConfigError("n grid must be positive integers")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("n grid must be strictly increasing")
        if not isinstance(self.reps, int) or self.reps < 1:
            raise ConfigError("reps must be >= 1")
        if not isinstance(self.n, int) or self.n < 1:
            raise ConfigError("n must be >= 1")
        f = self.families
        if f.distractors < 0 or f.g_distractors < 0 or f.scale < 0 or f.g_scale < 0:
            raise ConfigError("family sizes and scales must be nonnegative")
        if f.eps_h < 0 or f.eps_g < 0:
            raise ConfigError("misspecification levels must be nonnegative")
        for name, hp in self.estimators.items():
            if not isinstance(hp, dict):
                raise ConfigError(f"hyperparameters of {name} must be a mapping")
            if name == "liao" and hp.get("alpha") is not None and hp["alpha"] < 0:
                raise ConfigError("liao alpha must be nonnegative")
            if name == "both_worlds":
                mu = hp.get("mu")
                if mu is not None and not mu >= 0:
                    raise ConfigError("both_worlds mu must be nonnegative")
                if not 0 < hp.get("delta", 0.1) < 1:
                    raise ConfigError("both_worlds delta must lie in (0, 1)")
        return self

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "estimators": self.estimators,
            "n_grid": list(self.n_grid),
            "reps": self.reps,
            "master_seed": self.master_seed,
            "out_dir": self.out_dir,
            "families": self.families.to_dict(),
            "tolerances": self.tolerances,
            "population": self.population,
            "check_bounds": self.check_bounds,
            "n": self.n,
            "verify": self.verify,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kw = dict(d)
        if "n_grid" in kw:
            kw["n_grid"] = tuple(kw["n_grid"])
        if "families" in kw:
            kw["families"] = FamilySpec.from_dict(kw["families"])
        if "estimators" in kw and isinstance(kw["estimators"], list):
            defaults = default_estimators()
            kw["estimators"] = {e: defaults.get(e, {}) for e in kw["estimators"]}
        try:
            cfg = cls(**kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        return cfg.validate()

    def with_seed(self, seed: int | None) -> "RunConfig":
        return self if seed is None else replace(self, master_seed=int(seed))

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form, ignoring the output directory."""
        d = self.to_dict()
        d.pop("out_dir")
        text = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            d = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return RunConfig.from_dict(d)

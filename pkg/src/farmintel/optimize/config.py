from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ObjectiveError(RuntimeError):
    """The objective produced a value the optimizer cannot rank."""


class ConfigError(ValueError):
    pass


@dataclass
class CMAESSettings:
    sigma0: float = 0.3
    population: int | None = None  # None -> 4 + floor(3 ln dim)
    mean0: float = 0.5


@dataclass
class MapElitesSettings:
    batch: int = 64
    init_random: int = 2000
    mutation_sigma: float = 0.1
    variation: str = "gaussian"  # or "iso_line_dd"
    iso_sigma: float = 0.01
    line_sigma: float = 0.2


@dataclass
class OptimizerConfig:
    dim: int
    max_evaluations: int
    seed: int = 0
    cmaes: CMAESSettings = field(default_factory=CMAESSettings)
    map_elites: MapElitesSettings = field(default_factory=MapElitesSettings)
    # genes on a circle (camera orientation) wrap instead of clamping
    periodic_genes: tuple[int, ...] = ()

    def validate(self) -> None:
        if self.dim <= 0:
            raise ConfigError("dim must be positive")
        if self.max_evaluations <= 0:
            raise ConfigError("max_evaluations must be positive")
        if not 0.0 < self.cmaes.sigma0 <= 1.0:
            raise ConfigError("cmaes.sigma0 must lie in (0, 1]")
        if self.cmaes.population is not None and self.cmaes.population < 4:
            raise ConfigError("cmaes.population must be at least 4")
        me = self.map_elites
        if me.batch < 1 or me.init_random < me.batch:
            raise ConfigError("map_elites needs batch >= 1 and init_random >= batch")
        if any(not 0 <= i < self.dim for i in self.periodic_genes):
            raise ConfigError("periodic_genes index out of range")
        if me.mutation_sigma <= 0 or me.iso_sigma <= 0 or me.line_sigma < 0:
            raise ConfigError("map_elites mutation scales must be positive")
        if me.variation not in ("gaussian", "iso_line_dd"):
            raise ConfigError(f"unknown map_elites.variation {me.variation!r}")

    @classmethod
    def from_dict(cls, data: dict, *, dim: int) -> OptimizerConfig:
        data = dict(data)
        cm = CMAESSettings(**data.pop("cmaes", {}))
        me = MapElitesSettings(**data.pop("map_elites", {}))
        data.setdefault("max_evaluations", 200_000)
        data["periodic_genes"] = tuple(data.get("periodic_genes", ()))
        cfg = cls(dim=dim, cmaes=cm, map_elites=me, **data)
        cfg.validate()
        return cfg


@dataclass
class SolutionReport:
    algorithm: str
    genotype: np.ndarray
    fitness: float
    evaluations: int
    seed: int
    wall_time: float = 0.0

    def to_dict(self, *, include_timing: bool = False) -> dict:
        out = {
            "algorithm": self.algorithm,
            "seed": self.seed,
            "evaluations": self.evaluations,
            "fitness": self.fitness,
            "genotype": [float(g) for g in self.genotype],
        }
        if include_timing:
            out["wall_time_s"] = self.wall_time
        return out

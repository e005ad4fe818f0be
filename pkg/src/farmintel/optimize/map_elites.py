"""MAP-Elites over a discrete behaviour descriptor (beam-usage bit vectors)."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from .cmaes import _checked, repair
from .config import OptimizerConfig


@dataclass
class Elite:
    genotype: np.ndarray
    fitness: float


class Archive:
    """At most one elite per descriptor; an incumbent is replaced only by a strictly fitter genotype."""

    def __init__(self, descriptor_length: int | None = None):
        self.descriptor_length = descriptor_length
        self.cells: dict[tuple[int, ...], Elite] = {}

    @property
    def capacity(self) -> int | None:
        return None if self.descriptor_length is None else 2 ** self.descriptor_length

    def __len__(self) -> int:
        return len(self.cells)

    def __iter__(self) -> Iterator[tuple[tuple[int, ...], Elite]]:
        return iter(sorted(self.cells.items()))

    def __contains__(self, key) -> bool:
        return tuple(key) in self.cells

    def __getitem__(self, key) -> Elite:
        return self.cells[tuple(key)]

    def insert(self, descriptor, genotype, fitness: float) -> bool:
        key = tuple(int(b) for b in descriptor)
        if self.descriptor_length is None:
            self.descriptor_length = len(key)
        elif len(key) != self.descriptor_length:
            raise ValueError(f"descriptor length {len(key)} != archive descriptor length {self.descriptor_length}")
        cur = self.cells.get(key)
        if cur is not None and not fitness > cur.fitness:
            return False
        self.cells[key] = Elite(np.array(genotype, dtype=np.float64), float(fitness))
        return True

    def best(self) -> tuple[tuple[int, ...], Elite]:
        if not self.cells:
            raise ValueError("archive is empty")
        # first key in sorted order wins ties
        return max(self, key=lambda kv: kv[1].fitness)

    def keys(self) -> list[tuple[int, ...]]:
        return sorted(self.cells)

    def top(self, k: int) -> list[tuple[tuple[int, ...], Elite]]:
        return sorted(self, key=lambda kv: -kv[1].fitness)[:k]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        dim = len(next(iter(self.cells.values())).genotype) if self.cells else 0
        w.writerow(["descriptor", "fitness"] + [f"g{i}" for i in range(dim)])
        for key, elite in self:
            w.writerow(["".join(map(str, key)), repr(elite.fitness)] + [repr(float(g)) for g in elite.genotype])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> Archive:
        rows = list(csv.reader(io.StringIO(text)))
        arch = cls()
        for row in rows[1:]:
            arch.insert([int(c) for c in row[0]], [float(v) for v in row[2:]], float(row[1]))
        return arch


def map_elites_run(objective: Callable[[np.ndarray], float],
                   descriptor_fn: Callable[[np.ndarray], tuple[int, ...]],
                   config: OptimizerConfig,
                   *, archive: Archive | None = None,
                   on_batch: Callable[[Archive, int], None] | None = None) -> Archive:
    """Fill an archive keyed by ``descriptor_fn`` with high-fitness genotypes.

    ``init_random`` uniform genotypes seed the archive; afterwards each batch
    picks parents uniformly among filled cells and mutates them with either
    isotropic Gaussian noise or Iso+LineDD (``map_elites.variation``), then
    repairs them into the box. ``on_batch(archive, evaluations)`` is called
    after every batch.
    """
    config.validate()
    me = config.map_elites
    rng = np.random.default_rng(config.seed)
    arch = archive if archive is not None else Archive()
    evals = 0
    while evals < config.max_evaluations:
        n = min(me.batch, config.max_evaluations - evals)
        if evals < me.init_random or not arch.cells:
            n = min(n, me.init_random - evals) if evals < me.init_random else n
            xs = rng.random((n, config.dim))
        else:
            xs = _vary(arch, n, config, rng)
        f = _checked([objective(x) for x in xs], f"evaluation {evals}")
        for x, fx in zip(xs, f):
            arch.insert(descriptor_fn(x), x, fx)
        evals += n
        if on_batch is not None:
            on_batch(arch, evals)
    return arch


def _vary(arch: Archive, n: int, config: OptimizerConfig, rng: np.random.Generator) -> np.ndarray:
    me = config.map_elites
    keys = arch.keys()
    parents = np.stack([arch[keys[p]].genotype for p in rng.integers(0, len(keys), size=n)])
    if me.variation == "gaussian":
        xs = parents + rng.normal(0.0, me.mutation_sigma, parents.shape)
    else:
        # Iso+LineDD: isotropic noise plus a jump along the line to a second elite
        others = np.stack([arch[keys[p]].genotype for p in rng.integers(0, len(keys), size=n)])
        xs = (parents + rng.normal(0.0, me.iso_sigma, parents.shape)
              + rng.normal(0.0, me.line_sigma, (n, 1)) * (others - parents))
    return repair(xs, config.periodic_genes)


def archive_stats(arch: Archive) -> dict:
    fits = [e.fitness for _, e in arch]
    return {
        "filled": len(arch),
        "capacity": arch.capacity,
        "best": max(fits) if fits else -math.inf,
        "mean": float(np.mean(fits)) if fits else math.nan,
    }

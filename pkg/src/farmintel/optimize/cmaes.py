"""(mu/mu_w, lambda)-CMA-ES with rank-one and rank-mu updates, maximizing on [0, 1]^n.

Samples are repaired into the box before evaluation: periodic genes wrap,
all others clamp. The distribution update sees the raw samples, so the
repair never distorts the covariance estimate; the reported genotype is
always the repaired one.
"""
from __future__ import annotations

import logging
import math
import time
from typing import Callable

import numpy as np

from .config import OptimizerConfig, SolutionReport, ObjectiveError

log = logging.getLogger(__name__)


class CMAESParameters:
    """Static strategy parameters for dimension ``n`` and population ``lam``."""

    def __init__(self, n: int, lam: int | None = None):
        self.n = n
        self.lam = lam if lam else 4 + int(3 * math.log(n))
        self.mu = self.lam // 2
        w = np.array([math.log(self.lam / 2 + 0.5) - math.log(i + 1) for i in range(self.mu)])
        self.weights = w / w.sum()
        self.mueff = 1.0 / np.sum(self.weights ** 2)
        self.cc = (4 + self.mueff / n) / (n + 4 + 2 * self.mueff / n)
        self.cs = (self.mueff + 2) / (n + self.mueff + 5)
        self.c1 = 2 / ((n + 1.3) ** 2 + self.mueff)
        self.cmu = min(1 - self.c1, 2 * (self.mueff - 2 + 1 / self.mueff) / ((n + 2) ** 2 + self.mueff))
        self.damps = 1 + 2 * max(0.0, math.sqrt((self.mueff - 1) / (n + 1)) - 1) + self.cs
        self.chi_n = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n ** 2))


class CMAES:
    """Ask/tell CMA-ES state. Fitness values are maximized."""

    def __init__(self, mean: np.ndarray, sigma: float, rng: np.random.Generator, lam: int | None = None):
        self.mean = np.asarray(mean, dtype=np.float64).copy()
        n = self.mean.size
        self.p = CMAESParameters(n, lam)
        self.sigma = float(sigma)
        self.rng = rng
        self.pc = np.zeros(n)
        self.ps = np.zeros(n)
        self.C = np.eye(n)
        self.B = np.eye(n)
        self.D = np.ones(n)
        self.invsqrtC = np.eye(n)
        self.generation = 0

    def ask(self) -> np.ndarray:
        z = self.rng.standard_normal((self.p.lam, self.mean.size))
        return self.mean + self.sigma * ((z * self.D) @ self.B.T)

    @property
    def degenerate(self) -> bool:
        return not (np.isfinite(self.sigma) and 1e-14 < self.sigma < 1e14 and np.all(np.isfinite(self.C)))

    def tell(self, xs: np.ndarray, fitness: np.ndarray) -> None:
        p = self.p
        n = self.mean.size
        # stable sort keeps index order among ties
        order = np.argsort(-np.asarray(fitness), kind="stable")
        sel = xs[order[:p.mu]]
        old = self.mean
        self.mean = p.weights @ sel
        self.generation += 1

        step = (self.mean - old) / self.sigma
        self.ps = (1 - p.cs) * self.ps + math.sqrt(p.cs * (2 - p.cs) * p.mueff) * (self.invsqrtC @ step)
        norm_ps = np.linalg.norm(self.ps)
        hsig = norm_ps / math.sqrt(1 - (1 - p.cs) ** (2 * self.generation)) / p.chi_n < 1.4 + 2 / (n + 1)
        self.pc = (1 - p.cc) * self.pc + hsig * math.sqrt(p.cc * (2 - p.cc) * p.mueff) * step

        artmp = (sel - old) / self.sigma
        c1a = p.c1 * (1 - (1 - hsig) * p.cc * (2 - p.cc))
        self.C = ((1 - c1a - p.cmu) * self.C
                  + p.c1 * np.outer(self.pc, self.pc)
                  + p.cmu * (artmp.T * p.weights) @ artmp)
        self.sigma *= math.exp(min(1.0, (p.cs / p.damps) * (norm_ps / p.chi_n - 1)))
        self._decompose()

    def _decompose(self) -> None:
        self.C = np.triu(self.C) + np.triu(self.C, 1).T
        d2, self.B = np.linalg.eigh(self.C)
        d2 = np.maximum(d2, 1e-300)
        self.D = np.sqrt(d2)
        self.invsqrtC = (self.B / self.D) @ self.B.T


def repair(xs: np.ndarray, periodic=()) -> np.ndarray:
    out = np.array(xs, dtype=np.float64)
    if len(periodic):
        idx = list(periodic)
        out[..., idx] = np.mod(out[..., idx], 1.0)
    return np.clip(out, 0.0, 1.0)


def _checked(values, where: str) -> np.ndarray:
    f = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(f)):
        bad = int(np.flatnonzero(~np.isfinite(f))[0])
        raise ObjectiveError(f"objective returned non-finite value {f[bad]!r} at {where}, candidate {bad}")
    return f


def cmaes_run(objective: Callable[[np.ndarray], float], config: OptimizerConfig,
              *, target_fitness: float | None = None,
              history: list | None = None) -> SolutionReport:
    """Maximize ``objective`` over [0, 1]^dim with CMA-ES.

    Runs until ``config.max_evaluations`` is spent or ``target_fitness`` is
    reached. The best-so-far genotype is returned; an exhausted budget is not
    an error. When ``history`` is a list, the best-so-far fitness is appended
    after every generation.
    """
    config.validate()
    started = time.perf_counter()
    rng = np.random.default_rng(config.seed)
    es = CMAES(np.full(config.dim, config.cmaes.mean0), config.cmaes.sigma0, rng, config.cmaes.population)

    best_x = es.mean.copy()
    best_f = -math.inf
    evals = 0
    while evals < config.max_evaluations:
        raw = es.ask()[: config.max_evaluations - evals]
        xs = repair(raw, config.periodic_genes)
        f = _checked([objective(x) for x in xs], f"generation {es.generation}")
        evals += len(xs)
        i = int(np.argmax(f))
        if f[i] > best_f:
            best_f, best_x = float(f[i]), xs[i].copy()
        if history is not None:
            history.append(best_f)
        if target_fitness is not None and best_f >= target_fitness:
            break
        if len(xs) < es.p.lam:
            break
        es.tell(raw, f)
        if es.degenerate:
            log.warning("CMA-ES distribution degenerated (sigma=%g) after %d evaluations", es.sigma, evals)
            break

    return SolutionReport(algorithm="cmaes", genotype=best_x, fitness=best_f, evaluations=evals,
                          seed=config.seed, wall_time=time.perf_counter() - started)

"""Evolutionary search whose mutation is a truncated noise-then-denoise pass."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ..ldm import LatentDiffusion, posterior_mean, q_sample
from ..numerics import make_rng
from ..sim import Task
from .core import Evaluator, OptResult, finish


@dataclass
class DiffusionEsConfig:
    population: int = 16
    elites: int = 4
    truncation: int | None = None   # default N // 10
    generations: int | None = None  # default: fill ``budget`` rollouts
    budget: int = 3400
    seed: int = 0


def denoise_from(ldm: LatentDiffusion, x: np.ndarray, start: int, rng: np.random.Generator) -> np.ndarray:
    """Ancestral reverse pass from step ``start`` down to 0 (no noise on the last step)."""
    sched = ldm.sched
    for i in range(start, 0, -1):
        mu = posterior_mean(ldm.denoise(x, i), x, i, sched)
        x = mu + sched.sigma(i) * rng.standard_normal(x.shape) if i > 1 else mu
    return x


def diffusion_es_optimize(task: Task, decoder, ldm: LatentDiffusion,
                          cfg: DiffusionEsConfig | None = None) -> OptResult:
    """Generation 0 is a batch of unguided samples; later generations re-noise
    elites to ``truncation`` and denoise them back.  Elites are chosen from
    the union of the previous elites and the new offspring.  Returns the
    best trajectory ever rolled out.
    """
    cfg = cfg or DiffusionEsConfig()
    t0 = time.perf_counter()
    sched = ldm.sched
    trunc = sched.N // 10 if cfg.truncation is None else cfg.truncation
    gens = cfg.generations if cfg.generations is not None else max(1, cfg.budget // cfg.population)
    rng = make_rng(cfg.seed, "diffusion-es", task.name)
    G = task.agents
    shape = (G,) + ldm.shape
    P, E = cfg.population, min(cfg.elites, cfg.population)
    ev = Evaluator(task, decoder)

    def score(xs):
        return ev(ldm.destandardize(xs))

    flat = lambda xs: xs.reshape((-1,) + ldm.shape)
    pop = denoise_from(ldm, rng.standard_normal((P * G,) + ldm.shape), sched.N, rng).reshape((P,) + shape)
    costs = score(pop)
    trace = [ev.best_cost]
    for _ in range(gens - 1):
        order = np.argsort(costs, kind="stable")[:E]
        elites, ecost = pop[order], costs[order]
        parents = elites[np.arange(P) % E]
        if trunc > 0:
            noisy = q_sample(flat(parents), trunc, rng.standard_normal(flat(parents).shape), sched)
            kids = denoise_from(ldm, noisy, trunc, rng).reshape(parents.shape)
        else:
            kids = parents.copy()
        kcost = score(kids)
        pop = np.concatenate([elites, kids])
        costs = np.concatenate([ecost, kcost])
        trace.append(ev.best_cost)
    return finish("diffusion-es", task, ev, trace, t0, cfg)

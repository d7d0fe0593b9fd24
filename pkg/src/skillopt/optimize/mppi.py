"""MPPI baselines over raw actions (receding horizon) and over skill latents."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ..numerics import make_rng
from ..sim import BatchState, Task, simulate_batch
from .core import Evaluator, OptResult, finish


@dataclass
class MppiConfig:
    population: int = 30
    horizon: int = 15
    execute: int = 5          # steps committed per replanning round
    temperature: float = 0.1  # on costs rescaled to [0, 1] within each population
    sigma: float = 0.3
    budget: int = 3400        # rollouts, matched to the diffusion search at N=200, B=16
    seed: int = 0

    def __post_init__(self):
        if self.population < 1 or self.sigma <= 0 or self.temperature <= 0:
            raise ValueError("population >= 1, sigma > 0 and temperature > 0 required")


def mppi_weights(costs: np.ndarray, temperature: float) -> np.ndarray:
    """exp(-(c - min) / (range * temperature)), normalised; uniform when all costs tie."""
    c = np.asarray(costs, dtype=np.float64)
    span = c.max() - c.min()
    if not span > 0:
        return np.full(c.shape, 1.0 / c.size)
    w = np.exp(-(c - c.min()) / (span * temperature))
    return w / w.sum()


def mppi_update(mean: np.ndarray, samples: np.ndarray, costs: np.ndarray, temperature: float) -> np.ndarray:
    """Cost-weighted average of ``samples`` (P, ...); ``mean`` only fixes the shape."""
    w = mppi_weights(costs, temperature)
    return np.tensordot(w, samples, axes=1).reshape(mean.shape)


def mppi_optimize(task: Task, cfg: MppiConfig | None = None) -> OptResult:
    """Receding-horizon MPPI over clipped raw actions.

    Each round samples ``population`` perturbations of the current
    ``horizon``-step plan, scores each by the divergence at the end of its
    horizon (rolled out from the current state), re-weights, and repeats
    ``iters`` times, then commits ``execute`` steps and shifts the plan.
    The ``(budget - 1) // population`` refinement iterations are spread
    over the rounds (earlier rounds take the remainder), so the total
    rollout count, including the final full rollout, is within one
    population of ``budget``.
    The result is the committed trajectory; its full rollout is the last
    evaluation.
    """
    cfg = cfg or MppiConfig()
    t0 = time.perf_counter()
    rng = make_rng(cfg.seed, "mppi", task.name)
    G, T, A = task.agents, task.horizon, task.action_dim
    rounds = -(-T // cfg.execute)
    total = max(rounds, (cfg.budget - 1) // cfg.population)
    per_round = [total // rounds + (r < total % rounds) for r in range(rounds)]
    plan = np.zeros((G, cfg.horizon, A))
    state = BatchState.from_state(task.initial_state())
    executed = np.zeros((G, 0, A))
    ev = Evaluator(task)
    trace = []
    for iters in per_round:
        h = min(cfg.horizon, T - executed.shape[1])
        for _ in range(iters):
            eps = cfg.sigma * rng.standard_normal((cfg.population, G, h, A))
            samples = np.clip(plan[:, :h] + eps, -1.0, 1.0)
            start = BatchState(*(np.repeat(a, cfg.population, axis=0) for a in
                                 (state.base, state.rot, state.joints, state.particles)), state.t)
            _, costs = simulate_batch(task, samples, start=start)
            ev.count += cfg.population
            plan[:, :h] = mppi_update(plan[:, :h], samples, costs, cfg.temperature)
        k = min(cfg.execute, h)
        block = np.clip(plan[:, :k], -1.0, 1.0)
        state, c = simulate_batch(task, block[None], start=state)
        executed = np.concatenate([executed, block], axis=1)
        trace.append(float(c[0]))
        plan = np.concatenate([plan[:, k:], np.zeros((G, k, A))], axis=1)
    ev.rollout(executed[None])
    return finish("mppi", task, ev, trace, t0, cfg, trajectory=executed, c_best=ev.best_cost)


@dataclass
class SkillMppiConfig:
    population: int = 30
    temperature: float = 0.1
    sigma: float = 0.5        # in standardised latent units
    budget: int = 3400
    seed: int = 0

    def __post_init__(self):
        if self.population < 1 or self.sigma <= 0 or self.temperature <= 0:
            raise ValueError("population >= 1, sigma > 0 and temperature > 0 required")


def skill_mppi_optimize(task: Task, decoder, cfg: SkillMppiConfig | None = None,
                        latent_mean: np.ndarray | None = None, latent_std: np.ndarray | None = None,
                        K: int | None = None) -> OptResult:
    """MPPI whose decision variable is the whole skill sequence (K latents per agent).

    Perturbations are drawn in standardised latent units (``latent_mean``,
    ``latent_std``, default 0 and 1) around a mean that starts at the data
    mean.  Each iteration rolls out the population, re-weights, and the
    result is the cheapest trajectory rolled out over the run.
    """
    cfg = cfg or SkillMppiConfig()
    t0 = time.perf_counter()
    rng = make_rng(cfg.seed, "skill-mppi", task.name)
    H = decoder.cfg.H if hasattr(decoder, "cfg") else decoder.H
    D = decoder.cfg.latent_dim if hasattr(decoder, "cfg") else decoder.latent_dim
    K = K or task.horizon // H
    m = np.zeros(D) if latent_mean is None else np.asarray(latent_mean)
    s = np.ones(D) if latent_std is None else np.asarray(latent_std)
    G = task.agents
    iters = max(1, cfg.budget // cfg.population)
    mean = np.zeros((G, K, D))
    ev = Evaluator(task, decoder)
    trace = []
    for _ in range(iters):
        samples = mean + cfg.sigma * rng.standard_normal((cfg.population, G, K, D))
        costs = ev(samples * s + m)
        mean = mppi_update(mean, samples, costs, cfg.temperature)
        trace.append(ev.best_cost)
    return finish("skill-mppi", task, ev, trace, t0, cfg)

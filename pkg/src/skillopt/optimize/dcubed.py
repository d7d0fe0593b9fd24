"""Cross-entropy search embedded in the reverse diffusion over skill trajectories."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ..ldm import LatentDiffusion, posterior_mean
from ..numerics import make_rng
from ..sim import Task
from .core import Evaluator, IdentitySkills, OptimizerFault, OptResult, finish


@dataclass
class DCubedConfig:
    B: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.B < 1:
            raise ValueError("batch size B must be >= 1")


def d_cubed_optimize(task: Task, decoder, ldm: LatentDiffusion, cfg: DCubedConfig | None = None,
                     method: str = "d-cubed") -> OptResult:
    """Gradient-free trajectory optimisation through the reverse diffusion.

    For ``i = N..1``: roll out the batch and take its best member ``z``
    (lowest index on ties); predict ``mu_i = posterior_mean(denoise(z, i), z, i)``
    and roll it out; keep ``mu_best`` if that rollout is strictly better
    than every earlier mean; draw the next batch from
    ``N(mu_best, sigma_{i-1}^2 I)`` with ``sigma_0 = 0``.

    Every agent of a multi-hand task carries its own skill trajectory; the
    agents are denoised together as one model batch.  Each step costs
    ``B + 1`` rollouts.  The returned trajectory is the cheapest one ever
    rolled out (the final ``mu_best`` or an earlier batch member), so
    ``c_best`` is the minimum over every evaluation of the run.
    """
    cfg = cfg or DCubedConfig()
    t0 = time.perf_counter()
    sched = ldm.sched
    G = task.agents
    K, D = ldm.shape
    rng = make_rng(cfg.seed, method, task.name)

    def to_latent(x):  # standardised (.., G, K, D) -> decoder latents
        return ldm.destandardize(x)

    ev = Evaluator(task, decoder)
    x = rng.standard_normal((cfg.B, G, K, D))
    mu_best, c_mu_best = None, np.inf
    trace = []
    for i in range(sched.N, 0, -1):
        costs = ev(to_latent(x))
        z_best = x[int(np.argmin(costs))]
        mu = posterior_mean(ldm.denoise(z_best, i), z_best, i, sched)
        c_mu = ev(to_latent(mu[None]))[0]
        if c_mu < c_mu_best:
            mu_best, c_mu_best = mu, c_mu
        trace.append(ev.best_cost)
        if mu_best is None:
            raise OptimizerFault("no mean has been evaluated successfully")
        x = mu_best + sched.sigma(i - 1) * rng.standard_normal((cfg.B, G, K, D))
    res = finish(method, task, ev, trace, t0, cfg)
    res.config["mu_best_cost"] = float(c_mu_best)
    return res


def ablation_no_skill(task: Task, raw_ldm: LatentDiffusion, cfg: DCubedConfig | None = None,
                      H: int = 10) -> OptResult:
    """The same search over raw H-step action windows (identity skill space)."""
    decoder = IdentitySkills(H, task.action_dim)
    if raw_ldm.shape[1] != decoder.latent_dim:
        raise ValueError(f"raw-action model width {raw_ldm.shape[1]} != H*A = {decoder.latent_dim}")
    return d_cubed_optimize(task, decoder, raw_ldm, cfg, method="no-skill")

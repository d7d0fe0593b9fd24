"""Latent diffusion over skill trajectories: training, ancestral sampling, checkpoints.

The diffusion runs on standardised latents; per-dimension mean and std of
the training latents travel with the model and are applied on the way in
and undone on the way out.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..numerics import ParamStore, adam_step, load_checkpoint, make_rng, save_checkpoint
from .denoiser import Denoiser, DenoiserConfig
from .schedule import NoiseSchedule, cosine_schedule, posterior_mean, q_sample


class ModelFault(FloatingPointError):
    pass


class TrainingFault(FloatingPointError):
    def __init__(self, what: str, step: int):
        super().__init__(f"{what} diverged at step {step}")
        self.step = step


@dataclass
class LdmTrainConfig:
    steps: int = 3000
    batch: int = 32
    lr: float = 5e-4
    clip_norm: float | None = 1.0
    N: int = 200
    s: float = 0.008
    eval_every: int = 500


@dataclass
class LdmCurve:
    steps: list[int] = field(default_factory=list)
    loss: list[float] = field(default_factory=list)


class LatentDiffusion:
    """Denoiser + schedule + latent standardisation."""

    def __init__(self, denoiser: Denoiser, sched: NoiseSchedule, mean: np.ndarray, std: np.ndarray):
        self.denoiser = denoiser
        self.sched = sched
        self.mean = np.asarray(mean, dtype=np.float64)
        self.std = np.asarray(std, dtype=np.float64)

    @property
    def shape(self) -> tuple[int, int]:
        return self.denoiser.cfg.length, self.denoiser.cfg.latent_dim

    def standardize(self, z: np.ndarray) -> np.ndarray:
        return (z - self.mean) / self.std

    def destandardize(self, x: np.ndarray) -> np.ndarray:
        return x * self.std + self.mean

    def denoise(self, x_i: np.ndarray, i) -> np.ndarray:
        """Predicted clean (standardised) trajectories for noisy ``x_i`` (B, K, D) at step ``i``."""
        x_i = np.asarray(x_i, dtype=np.float64)
        if not np.isfinite(x_i).all():
            raise ModelFault("non-finite denoiser input")
        y = self.denoiser(x_i, i)
        if not np.isfinite(y).all():
            raise ModelFault(f"denoiser produced non-finite output at step {i}")
        return y


def denoise(model: LatentDiffusion, x_i: np.ndarray, i) -> np.ndarray:
    return model.denoise(x_i, i)


def ldm_loss(model: LatentDiffusion | Denoiser, x0: np.ndarray, rng: np.random.Generator | None = None,
             sched: NoiseSchedule | None = None, steps=None, eps=None, backward: bool = False) -> float:
    """Mean squared error between ``x0`` and the prediction from ``q_sample(x0, i, eps)``.

    ``i ~ U{1..N}`` per trajectory and ``eps ~ N(0, I)`` unless given.  With
    ``backward`` the denoiser's gradients are accumulated.
    """
    den = model.denoiser if isinstance(model, LatentDiffusion) else model
    sched = sched or model.sched
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.ndim != 3 or x0.shape[0] == 0:
        raise ValueError(f"expected a nonempty (B, K, D) batch, got {x0.shape}")
    B = x0.shape[0]
    if steps is None:
        steps = rng.integers(1, sched.N + 1, size=B)
    if eps is None:
        eps = rng.standard_normal(x0.shape)
    xi = q_sample(x0, steps, eps, sched)
    pred, cache = den.forward(xi, steps)
    diff = pred - x0
    loss = float(np.mean(diff * diff))
    if backward:
        den.backward(2.0 * diff / diff.size, cache)
    return loss


def train_ldm(latents: np.ndarray, cfg: DenoiserConfig | None = None, hyper: LdmTrainConfig | None = None,
              seed: int = 0):
    """Fit a denoiser to skill trajectories (E, K, D); returns ``(LatentDiffusion, curve)``."""
    latents = np.asarray(latents, dtype=np.float64)
    if latents.ndim != 3 or latents.shape[0] == 0:
        raise ValueError(f"expected nonempty (E, K, D) latents, got {latents.shape}")
    hyper = hyper or LdmTrainConfig()
    E, K, D = latents.shape
    cfg = cfg or DenoiserConfig(latent_dim=D, length=K)
    sched = cosine_schedule(hyper.N, hyper.s)
    mean = latents.reshape(-1, D).mean(axis=0)
    std = np.maximum(latents.reshape(-1, D).std(axis=0), 1e-6)
    model = LatentDiffusion(Denoiser(cfg, seed), sched, mean, std)
    data = model.standardize(latents)
    rng = make_rng(seed, "ldm-train")
    curve = LdmCurve()
    for step in range(hyper.steps):
        idx = rng.integers(E, size=hyper.batch)
        loss = ldm_loss(model, data[idx], rng, backward=True)
        if not np.isfinite(loss):
            raise TrainingFault("LDM loss", step)
        try:
            adam_step(model.denoiser.store, hyper.lr, clip_norm=hyper.clip_norm)
        except FloatingPointError as exc:
            raise TrainingFault(f"LDM gradient ({exc})", step) from exc
        if step % hyper.eval_every == 0 or step == hyper.steps - 1:
            curve.steps.append(step)
            curve.loss.append(loss)
    return model, curve


def sample_unguided(model: LatentDiffusion, rng: np.random.Generator, B: int,
                    standardized: bool = False) -> np.ndarray:
    """Ancestral sampling of ``B`` skill trajectories.

    x_N ~ N(0, I); x_{i-1} = posterior_mean(denoise(x_i, i), x_i, i) + sigma_i eps,
    with no noise on the last step.  Returns de-standardised latents unless
    ``standardized``.
    """
    sched = model.sched
    x = rng.standard_normal((B,) + model.shape)
    for i in range(sched.N, 0, -1):
        mu = posterior_mean(model.denoise(x, i), x, i, sched)
        x = mu + sched.sigma(i) * rng.standard_normal(x.shape) if i > 1 else mu
    return x if standardized else model.destandardize(x)


def save_ldm(path, model: LatentDiffusion, extra: dict | None = None) -> None:
    meta = {"kind": "ldm", "config": asdict(model.denoiser.cfg),
            "schedule": {"N": model.sched.N, "s": model.sched.s},
            "latent_mean": model.mean.tolist(), "latent_std": model.std.tolist(), **(extra or {})}
    save_checkpoint(path, model.denoiser.store, meta)


def load_ldm(path) -> LatentDiffusion:
    store, meta = load_checkpoint(path)
    if meta.get("kind") != "ldm":
        raise ValueError(f"{path} is not an LDM checkpoint")
    den = Denoiser(DenoiserConfig(**meta["config"]), store=store)
    sched = cosine_schedule(meta["schedule"]["N"], meta["schedule"]["s"])
    return LatentDiffusion(den, sched, np.array(meta["latent_mean"]), np.array(meta["latent_std"]))

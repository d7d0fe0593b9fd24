"""Latent diffusion over skill trajectories."""

from .denoiser import Denoiser, DenoiserConfig, step_features
from .diffusion import (
    LatentDiffusion,
    LdmCurve,
    LdmTrainConfig,
    ModelFault,
    TrainingFault,
    denoise,
    ldm_loss,
    load_ldm,
    sample_unguided,
    save_ldm,
    train_ldm,
)
from .schedule import (
    NoiseSchedule,
    ScheduleError,
    cosine_schedule,
    posterior_coefficients,
    posterior_mean,
    q_sample,
)

__all__ = [
    "Denoiser", "DenoiserConfig", "LatentDiffusion", "LdmCurve", "LdmTrainConfig", "ModelFault",
    "NoiseSchedule", "ScheduleError", "TrainingFault", "cosine_schedule", "denoise", "ldm_loss",
    "load_ldm", "posterior_coefficients", "posterior_mean", "q_sample", "sample_unguided", "save_ldm",
    "step_features", "train_ldm",
]

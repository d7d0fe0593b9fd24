"""Trajectory optimizers over the simulator's black-box rollout cost."""

from .core import (
    Evaluator,
    IdentitySkills,
    OptimizerFault,
    OptResult,
    evaluate_actions,
    find_best_latents,
)
from .dcubed import DCubedConfig, ablation_no_skill, d_cubed_optimize
from .des import DiffusionEsConfig, denoise_from, diffusion_es_optimize
from .guidance import GuidanceConfig, classifier_guided_sample, guided_sample
from .mppi import MppiConfig, SkillMppiConfig, mppi_optimize, mppi_update, mppi_weights, skill_mppi_optimize

__all__ = [
    "DCubedConfig", "DiffusionEsConfig", "Evaluator", "GuidanceConfig", "IdentitySkills", "MppiConfig",
    "OptResult", "OptimizerFault", "SkillMppiConfig", "ablation_no_skill", "classifier_guided_sample",
    "d_cubed_optimize", "denoise_from", "diffusion_es_optimize", "evaluate_actions", "find_best_latents",
    "guided_sample", "mppi_optimize", "mppi_update", "mppi_weights", "skill_mppi_optimize",
]

"""2D particle dough, disc-finger hands, tasks and shape costs."""

from .cost import CostConfig, emd_exact, entropic_ot, entropic_ot_self, normalized_improvement, sinkhorn_divergence
from .dynamics import BatchState, SimParams, SimState, SimulationFault, project_out_of_discs, step, step_batch
from .hand import HandConfig, HandSpec, fingertips, forward_kinematics
from .rollout import as_agent_trajectory, rollout, rollout_cost, simulate_batch
from .tasks import ROLLOUT_COST, Task, builtin_tasks, get_task, load_cloud_csv, load_task_file, task_from_config

__all__ = [
    "BatchState", "CostConfig", "HandConfig", "HandSpec", "ROLLOUT_COST", "SimParams", "SimState",
    "SimulationFault", "Task", "as_agent_trajectory", "builtin_tasks", "emd_exact", "entropic_ot",
    "entropic_ot_self", "fingertips", "forward_kinematics", "get_task", "load_cloud_csv", "load_task_file",
    "normalized_improvement", "project_out_of_discs", "rollout", "rollout_cost", "simulate_batch",
    "sinkhorn_divergence", "step", "step_batch", "task_from_config",
]

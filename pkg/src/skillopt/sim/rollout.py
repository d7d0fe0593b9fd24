from __future__ import annotations

import numpy as np

from .dynamics import BatchState, SimState, run_batch
from .tasks import Task


def as_agent_trajectory(task: Task, traj) -> np.ndarray:
    """Normalise a trajectory to (G, T, A); accepts (T, A) for one agent or a per-agent list."""
    a = np.asarray(traj, dtype=np.float64)
    if a.ndim == 2:
        a = a[None]
    if a.shape != (task.agents, a.shape[1], task.action_dim):
        raise ValueError(f"trajectory shape {a.shape} does not fit task {task.name!r} "
                         f"({task.agents} agents x T x {task.action_dim})")
    return a


def simulate_batch(task: Task, trajs: np.ndarray, start: BatchState | None = None,
                   trace: bool = False):
    """Run (B, G, T, A) trajectories; returns ``(final BatchState, costs[, trace])``.

    ``costs`` is the final-step divergence per row; ``trace`` (B, T+1) holds the
    divergence after every step when requested.
    """
    trajs = np.asarray(trajs, dtype=np.float64)
    B, G, T, A = trajs.shape
    if G != task.agents or A != task.action_dim:
        raise ValueError(f"trajectories {trajs.shape} do not fit task {task.name!r}")
    bs = start if start is not None else BatchState.from_state(task.initial_state(), B)
    if not trace:
        bs = run_batch(bs, trajs, task.spec, task.sim)
        return bs, np.asarray(task.divergence(bs.particles)).reshape(B)
    tr = np.empty((B, T + 1))
    tr[:, 0] = task.divergence(bs.particles)
    bs, hist = run_batch(bs, trajs, task.spec, task.sim, record=True)
    if T:
        tr[:, 1:] = task.divergence(hist)
    return bs, tr[:, -1].copy(), tr


def rollout(task: Task, traj) -> tuple[SimState, np.ndarray]:
    """Apply ``traj`` from the task's initial state.

    Returns the final state and the divergence trace of length T+1; the
    rollout cost is ``trace[-1]``.
    """
    a = as_agent_trajectory(task, traj)
    bs, _, tr = simulate_batch(task, a[None], trace=True)
    return bs.row(0), tr[0]


def rollout_cost(task: Task, traj) -> float:
    a = as_agent_trajectory(task, traj)
    return float(simulate_batch(task, a[None])[1][0])

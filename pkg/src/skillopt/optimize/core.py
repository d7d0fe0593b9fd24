"""Shared optimizer plumbing: results, counted evaluations, skill decoders."""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, is_dataclass
from pathlib import Path

import numpy as np

from ..sim import SimulationFault, Task, normalized_improvement, simulate_batch


class OptimizerFault(RuntimeError):
    pass


@dataclass
class OptResult:
    """Outcome of one optimizer run.

    ``trajectory`` is (G, T, A); ``c_best`` is its rollout cost (re-simulated
    and checked at the end); ``trace`` holds one cost per optimizer iteration.
    """

    method: str
    task: str
    trajectory: np.ndarray
    c_best: float
    d0: float
    trace: list[float]
    evaluations: int
    wall_time: float
    config: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    latents: np.ndarray | None = None

    @property
    def improvement(self) -> float:
        return normalized_improvement(self.d0, self.c_best)

    def to_dict(self) -> dict:
        return {
            "method": self.method, "task": self.task, "c_best": self.c_best, "d0": self.d0,
            "improvement": self.improvement, "evaluations": self.evaluations,
            "wall_time": self.wall_time, "config": self.config, "warnings": self.warnings,
            "trace": [float(c) for c in self.trace],
            "trajectory": np.asarray(self.trajectory).tolist(),
        }

    def save(self, path, include_wall_time: bool = True) -> None:
        d = self.to_dict()
        if not include_wall_time:
            d.pop("wall_time")
        Path(path).write_text(json.dumps(d, indent=1, sort_keys=True))

    @classmethod
    def load(cls, path) -> "OptResult":
        d = json.loads(Path(path).read_text())
        return cls(d["method"], d["task"], np.array(d["trajectory"]), d["c_best"], d["d0"], d["trace"],
                   d["evaluations"], d.get("wall_time", 0.0), d["config"], d["warnings"])


def config_dict(cfg) -> dict:
    return asdict(cfg) if is_dataclass(cfg) else dict(cfg)


class IdentitySkills:
    """Skill space without a VAE: a "latent" is a flattened H-step action window."""

    def __init__(self, H: int, action_dim: int):
        self.H, self.action_dim = H, action_dim

    @property
    def latent_dim(self) -> int:
        return self.H * self.action_dim

    def decode_sequence(self, zs: np.ndarray) -> np.ndarray:
        zs = np.asarray(zs, dtype=np.float64)
        a = zs.reshape(*zs.shape[:-2], zs.shape[-2] * self.H, self.action_dim)
        return np.clip(a, -1.0, 1.0)

    @staticmethod
    def encode_episodes(actions: np.ndarray, H: int) -> np.ndarray:
        """(E, T, A) -> (E, T/H, H*A) flattened windows."""
        E, T, A = actions.shape
        return actions.reshape(E, T // H, H * A)


class Evaluator:
    """Counted rollout evaluations with best-ever tracking.

    Ties keep the earlier candidate: within a batch the lowest index wins,
    and across calls a later candidate must be strictly lower.
    """

    def __init__(self, task: Task, decoder=None):
        self.task = task
        self.decoder = decoder
        self.count = 0
        self.best_cost = np.inf
        self.best_actions: np.ndarray | None = None
        self.best_latents: np.ndarray | None = None

    def actions(self, zs: np.ndarray) -> np.ndarray:
        """Skill trajectories (B, G, K, D) -> action trajectories (B, G, T, A)."""
        return self.decoder.decode_sequence(zs)

    def rollout(self, acts: np.ndarray, latents: np.ndarray | None = None) -> np.ndarray:
        acts = np.ascontiguousarray(acts, dtype=np.float64)
        costs = evaluate_actions(self.task, acts)
        self.count += len(costs)
        b = int(np.argmin(costs))
        if costs[b] < self.best_cost:
            self.best_cost = float(costs[b])
            self.best_actions = acts[b].copy()
            self.best_latents = None if latents is None else latents[b].copy()
        return costs

    def __call__(self, zs: np.ndarray) -> np.ndarray:
        return self.rollout(self.actions(zs), zs)


def evaluate_actions(task: Task, acts: np.ndarray) -> np.ndarray:
    """Final-step costs of (B, G, T, A); a fault names the first failing row."""
    try:
        return simulate_batch(task, acts)[1]
    except SimulationFault:
        for b in range(len(acts)):
            try:
                simulate_batch(task, acts[b:b + 1])
            except SimulationFault as exc:
                raise SimulationFault(f"trajectory {b}: {exc}") from exc
        raise


def find_best_latents(batch: np.ndarray, task: Task, decoder) -> tuple[np.ndarray, float]:
    """Decode, roll out and return the lowest-cost skill trajectory (lowest index on ties).

    ``batch`` is (B, K, D) for one agent or (B, G, K, D).
    """
    z = np.asarray(batch, dtype=np.float64)
    if z.ndim == 3:
        z = z[:, None]
    if len(z) == 0:
        raise ValueError("empty batch")
    costs = evaluate_actions(task, decoder.decode_sequence(z))
    b = int(np.argmin(costs))
    return np.asarray(batch)[b], float(costs[b])


def finish(method: str, task: Task, ev: Evaluator, trace, t0: float, cfg, warnings=(),
           trajectory: np.ndarray | None = None, c_best: float | None = None) -> OptResult:
    """Assemble an OptResult and re-simulate the returned trajectory as a check."""
    traj = ev.best_actions if trajectory is None else trajectory
    cost = ev.best_cost if c_best is None else c_best
    if traj is None:
        raise OptimizerFault(f"{method}: no successful evaluation")
    check = float(simulate_batch(task, traj[None])[1][0])
    if check != cost:
        raise OptimizerFault(f"{method}: re-simulated cost {check!r} != reported {cost!r}")
    return OptResult(method, task.name, traj, cost, task.d0, [float(c) for c in trace], ev.count,
                     time.perf_counter() - t0, config_dict(cfg), list(warnings), ev.best_latents)

"""Built-in deformable-manipulation tasks and task config loading."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np
import yaml

from .cost import CostConfig, entropic_ot_self, sinkhorn_divergence
from .dynamics import SimParams, SimState
from .hand import HandConfig, HandSpec

# Rollout costs stop Sinkhorn after 40 iterations at the target blur: the
# value is then within ~1e-4 relative of the fully converged one at a tenth
# of the cost.
ROLLOUT_COST = CostConfig(max_iter=40)


@dataclass
class Task:
    name: str
    particles: np.ndarray
    hands: list[HandConfig]
    target: np.ndarray
    horizon: int = 150
    cost: CostConfig = ROLLOUT_COST
    spec: HandSpec = field(default_factory=HandSpec)
    sim: SimParams = field(default_factory=SimParams)
    chunk: int = 10

    def __post_init__(self):
        self.particles = np.asarray(self.particles, dtype=np.float64)
        self.target = np.asarray(self.target, dtype=np.float64)
        if self.target.ndim != 2 or self.target.shape[0] == 0:
            raise ValueError(f"task {self.name!r}: target cloud must be nonempty (M, 2)")
        if self.horizon % self.chunk:
            raise ValueError(f"task {self.name!r}: horizon {self.horizon} not divisible by {self.chunk}")
        if len(self.hands) not in (1, 2):
            raise ValueError(f"task {self.name!r}: 1 or 2 agents supported")

    @property
    def agents(self) -> int:
        return len(self.hands)

    @property
    def action_dim(self) -> int:
        return self.spec.action_dim

    def initial_state(self) -> SimState:
        return SimState([HandConfig(h.base.copy(), float(h.rot), h.joints.copy()) for h in self.hands],
                        self.particles.copy(), 0)

    @cached_property
    def target_self_ot(self) -> float:
        return float(entropic_ot_self(self.target, self.cost)[0])

    def divergence(self, particles: np.ndarray) -> np.ndarray | float:
        """Sinkhorn divergence of (batched) particle clouds to the target."""
        return sinkhorn_divergence(particles, self.target, self.cost, yy=self.target_self_ot)

    @cached_property
    def d0(self) -> float:
        return float(self.divergence(self.particles))


# --------------------------------------------------------------------------
# layouts


def grid_points(nx: int, ny: int, spacing: float, center_x: float = 0.0, y0: float = 0.005) -> np.ndarray:
    xs = center_x + (np.arange(nx) - (nx - 1) / 2) * spacing
    ys = y0 + np.arange(ny) * spacing
    X, Y = np.meshgrid(xs, ys)
    return np.stack([X.ravel(), Y.ravel()], axis=1)


def disc_points(n: int, center, radius: float) -> np.ndarray:
    """Sunflower (Vogel) spiral filling a disc uniformly."""
    k = np.arange(n) + 0.5
    r = radius * np.sqrt(k / n)
    th = k * np.pi * (3 - np.sqrt(5))
    return np.stack([center[0] + r * np.cos(th), center[1] + r * np.sin(th)], axis=1)


def _hand(x: float, y: float = 0.16, spec: HandSpec = HandSpec()) -> HandConfig:
    return HandConfig(np.array([x, y]), -np.pi / 2, np.zeros((spec.n_fingers, spec.n_links)))


def gather_to_disc() -> Task:
    blob = grid_points(8, 8, 0.01)
    return Task("gather-to-disc", blob, [_hand(-0.06)], disc_points(64, (0.05, 0.035), 0.035))


def fold_line() -> Task:
    strip = grid_points(16, 4, 0.01)
    tgt = strip.copy()
    left = tgt[:, 0] < 0
    tgt[left, 0] = -tgt[left, 0]
    return Task("fold-line", strip, [_hand(-0.06)], tgt)


def split_two() -> Task:
    blob = grid_points(8, 8, 0.01)
    tgt = np.concatenate([disc_points(32, (-0.08, 0.03), 0.025), disc_points(32, (0.08, 0.03), 0.025)])
    return Task("split-two", blob, [_hand(-0.05), _hand(0.05)], tgt)


def elongate() -> Task:
    blob = grid_points(8, 8, 0.01)
    return Task("elongate", blob, [_hand(0.0)], grid_points(32, 2, 0.01))


_BUILTIN: dict[str, Callable[[], Task]] = {
    "gather-to-disc": gather_to_disc,
    "fold-line": fold_line,
    "split-two": split_two,
    "elongate": elongate,
}


def builtin_tasks() -> dict[str, Callable[[], Task]]:
    """Name -> factory for every built-in task (a fresh copy per call)."""
    return dict(_BUILTIN)


def get_task(name: str) -> Task:
    try:
        return _BUILTIN[name]()
    except KeyError:
        raise LookupError(f"unknown task {name!r}; known: {sorted(_BUILTIN)}") from None


# --------------------------------------------------------------------------
# config files


def load_cloud_csv(path: str | Path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                rows.append((float(row[0]), float(row[1])))
            except (ValueError, IndexError):
                if i == 0:
                    continue  # header line
                raise ValueError(f"{path}:{i + 1}: expected 'x,y', got {row!r}") from None
    if not rows:
        raise ValueError(f"{path}: no points")
    return np.array(rows, dtype=np.float64)


def _layout(spec: dict, base_dir: Path) -> np.ndarray:
    if "grid" in spec:
        g = spec["grid"]
        return grid_points(g["nx"], g["ny"], g.get("spacing", 0.01), g.get("center_x", 0.0), g.get("y0", 0.005))
    if "disc" in spec:
        d = spec["disc"]
        return disc_points(d["n"], d["center"], d["radius"])
    if "csv" in spec:
        return load_cloud_csv(base_dir / spec["csv"])
    if "points" in spec:
        return np.asarray(spec["points"], dtype=np.float64)
    raise ValueError(f"unrecognised point layout {sorted(spec)}")


def task_from_config(cfg: dict, base_dir: str | Path = ".") -> Task:
    base_dir = Path(base_dir)
    spec = HandSpec()
    hands = [HandConfig(np.asarray(h["base"], dtype=np.float64), float(h.get("rot", -np.pi / 2)),
                        np.asarray(h.get("joints", np.zeros((spec.n_fingers, spec.n_links)))))
             for h in cfg["hands"]]
    if "agents" in cfg and cfg["agents"] != len(hands):
        raise ValueError(f"agents={cfg['agents']} but {len(hands)} hands listed")
    cost = CostConfig(**cfg["cost"]) if "cost" in cfg else ROLLOUT_COST
    return Task(cfg["name"], _layout(cfg["particles"], base_dir), hands,
                _layout(cfg["target"], base_dir), int(cfg.get("horizon", 150)), cost)


def load_task_file(path: str | Path) -> Task:
    path = Path(path)
    with open(path) as fh:
        cfg = yaml.safe_load(fh)
    return task_from_config(cfg, path.parent)

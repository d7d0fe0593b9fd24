"""Planar multi-finger hand: kinematic parameters and forward kinematics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class HandSpec:
    """Geometry, limits and action scaling shared by every hand in a task.

    Finger ``f`` is a planar chain rooted at ``base + R(rot) @ root_offsets[f]``;
    link ``j`` points along ``rot + sum(joints[f, :j+1])``.
    """

    link_lengths: tuple[float, ...] = (0.04, 0.03)
    root_offsets: tuple[tuple[float, float], ...] = ((0.0, -0.02), (0.0, 0.0), (0.0, 0.02))
    tip_radius: float = 0.012
    joint_limit: float = 1.2
    rot_limits: tuple[float, float] = (-np.pi, 0.0)
    workspace: tuple[float, float, float, float] = (-0.3, 0.3, 0.0, 0.35)  # xmin, xmax, ymin, ymax
    max_base_delta: float = 0.01
    max_rot_delta: float = 0.04
    max_joint_delta: float = 0.02

    @property
    def n_fingers(self) -> int:
        return len(self.root_offsets)

    @property
    def n_links(self) -> int:
        return len(self.link_lengths)

    @property
    def action_dim(self) -> int:
        """Base (x, y), base rotation, then every finger joint."""
        return 3 + self.n_fingers * self.n_links

    def delta_scale(self) -> np.ndarray:
        s = np.full(self.action_dim, self.max_joint_delta)
        s[:2] = self.max_base_delta
        s[2] = self.max_rot_delta
        return s


@dataclass
class HandConfig:
    base: np.ndarray
    rot: float
    joints: np.ndarray = field(default_factory=lambda: np.zeros((3, 2)))

    def __post_init__(self):
        self.base = np.asarray(self.base, dtype=np.float64).reshape(2)
        self.joints = np.asarray(self.joints, dtype=np.float64)
        if self.joints.ndim != 2 or self.joints.shape[0] < 1:
            raise ValueError(f"joints must be (F>=1, J), got {self.joints.shape}")


def fingertips(base: np.ndarray, rot: np.ndarray, joints: np.ndarray, spec: HandSpec) -> np.ndarray:
    """Vectorised FK: ``base (..., 2)``, ``rot (...)``, ``joints (..., F, J)`` -> ``(..., F, 2)``."""
    rot = np.asarray(rot, dtype=np.float64)
    offs = np.asarray(spec.root_offsets, dtype=np.float64)           # F, 2
    c, s = np.cos(rot)[..., None], np.sin(rot)[..., None]
    roots = np.stack([c * offs[:, 0] - s * offs[:, 1],
                      s * offs[:, 0] + c * offs[:, 1]], axis=-1) + base[..., None, :]
    ang = rot[..., None, None] + np.cumsum(joints, axis=-1)            # ..., F, J
    L = np.asarray(spec.link_lengths, dtype=np.float64)
    tip = roots + np.stack([(L * np.cos(ang)).sum(-1), (L * np.sin(ang)).sum(-1)], axis=-1)
    return tip


def forward_kinematics(hand: HandConfig, spec: HandSpec | None = None) -> np.ndarray:
    """World-frame fingertip disc centres, shape ``(F, 2)``."""
    if spec is None:
        spec = HandSpec()
    if hand.joints.shape != (spec.n_fingers, spec.n_links):
        raise ValueError(f"joints shape {hand.joints.shape} does not match hand spec "
                         f"({spec.n_fingers}, {spec.n_links})")
    return fingertips(hand.base, np.float64(hand.rot), hand.joints, spec)

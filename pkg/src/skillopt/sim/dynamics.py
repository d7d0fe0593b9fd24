"""Position-based particle dough pushed by fingertip discs.

Rows of a batch are stepped independently by compiled kernels, so a row's
result is bit-identical whatever else shares its batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as _k
from .hand import HandConfig, HandSpec, fingertips


class SimulationFault(FloatingPointError):
    pass


@dataclass(frozen=True)
class SimParams:
    cohesion: float = 0.1   # fraction of mean neighbour displacement dragged along
    neighbors: int = 4
    substeps: int = 4       # contact sub-steps per action, keeps tip travel below the disc radius
    separation: float = 0.008  # minimum particle spacing enforced once the dough is touched
    relax_iters: int = 2


@dataclass
class SimState:
    hands: list[HandConfig]
    particles: np.ndarray
    t: int = 0

    def copy(self) -> "SimState":
        return SimState([HandConfig(h.base.copy(), float(h.rot), h.joints.copy()) for h in self.hands],
                        self.particles.copy(), self.t)


@dataclass
class BatchState:
    """Batched arrays: base (B,G,2), rot (B,G), joints (B,G,F,J), particles (B,M,2)."""

    base: np.ndarray
    rot: np.ndarray
    joints: np.ndarray
    particles: np.ndarray
    t: int = 0

    @classmethod
    def from_state(cls, state: SimState, batch: int = 1) -> "BatchState":
        base = np.stack([h.base for h in state.hands])
        rot = np.array([h.rot for h in state.hands], dtype=np.float64)
        joints = np.stack([h.joints for h in state.hands])
        rep = lambda a: np.repeat(a[None], batch, axis=0)
        return cls(rep(base), rep(rot), rep(joints), rep(np.asarray(state.particles, np.float64)), state.t)

    def row(self, b: int) -> SimState:
        hands = [HandConfig(self.base[b, g].copy(), float(self.rot[b, g]), self.joints[b, g].copy())
                 for g in range(self.base.shape[1])]
        return SimState(hands, self.particles[b].copy(), self.t)

    def discs(self, spec: HandSpec) -> np.ndarray:
        tips = fingertips(self.base, self.rot, self.joints, spec)   # B,G,F,2
        return tips.reshape(tips.shape[0], -1, 2)


# --------------------------------------------------------------------------
# kernels


def _spec_args(spec: HandSpec):
    return (spec.delta_scale(), np.asarray(spec.root_offsets, dtype=np.float64),
            np.asarray(spec.link_lengths, dtype=np.float64), float(spec.tip_radius),
            float(spec.joint_limit), float(spec.rot_limits[0]), float(spec.rot_limits[1]),
            np.asarray(spec.workspace, dtype=np.float64))


def project_out_of_discs(p: np.ndarray, centers: np.ndarray, r: float) -> np.ndarray:
    """Move every particle strictly inside a disc to the nearest point outside all discs.

    ``p`` is (M, 2) and ``centers`` (D, 2).  Candidates are the radial
    projections onto each circle plus pairwise circle intersections; the
    nearest candidate outside every disc wins.  A particle exactly at a
    centre is pushed straight up (+y).
    """
    out = np.array(p, dtype=np.float64)
    c = np.asarray(centers, dtype=np.float64)
    _k.project_row(out, c, float(r), _k._intersections(c, float(r)))
    return out


def run_batch(bs: BatchState, actions: np.ndarray, spec: HandSpec, params: SimParams,
              record: bool = False):
    """Advance every row through ``actions`` (B, G, T, A).

    Returns the new :class:`BatchState` and, with ``record``, the particle
    history (B, T, M, 2).
    """
    actions = np.ascontiguousarray(actions, dtype=np.float64)
    B, G, T, A = actions.shape
    if (B, G) != bs.base.shape[:2] or A != spec.action_dim:
        raise ValueError(f"actions {actions.shape} do not match state batch {bs.base.shape[:2]} "
                         f"and action dim {spec.action_dim}")
    base, rot, joints, parts = bs.base.copy(), bs.rot.copy(), bs.joints.copy(), bs.particles.copy()
    hist = np.empty((B, T, parts.shape[1], 2)) if record else np.empty((0, 0, 0, 2))
    ok = _k.rollout_rows(base, rot, joints, parts, actions, *_spec_args(spec),
                         float(params.cohesion), int(params.neighbors), int(params.substeps),
                         float(params.separation), int(params.relax_iters), record, hist)
    if not ok or not (np.isfinite(base).all() and np.isfinite(joints).all()):
        raise SimulationFault(f"non-finite state during steps {bs.t}..{bs.t + T}")
    out = BatchState(base, rot, joints, parts, bs.t + T)
    return (out, hist) if record else out


def step_batch(bs: BatchState, action: np.ndarray, spec: HandSpec, params: SimParams = SimParams()) -> BatchState:
    """One simulator step for every row; ``action`` is (B, G, A)."""
    action = np.asarray(action, dtype=np.float64)
    if action.shape != bs.base.shape[:2] + (spec.action_dim,):
        raise ValueError(f"action shape {action.shape} != {bs.base.shape[:2] + (spec.action_dim,)}")
    return run_batch(bs, action[:, :, None, :], spec, params)


def step(state: SimState, action: np.ndarray, spec: HandSpec | None = None,
         params: SimParams = SimParams()) -> SimState:
    """Advance one state by one action: (A,) for one hand or (G, A) for several.

    Order within a step: integrate clipped deltas into the hands (lifting a
    hand whose fingertips would dip below the table), project particles out
    of fingertip discs and, once contact has happened, relax particle pairs
    to the minimum spacing (per contact sub-step), drag each particle by ``cohesion`` times the mean
    displacement of its nearest neighbours, re-project, clamp to ``y >= 0``.
    """
    spec = spec or HandSpec()
    for h in state.hands:
        if not (np.isfinite(h.base).all() and np.isfinite(h.joints).all() and np.isfinite(h.rot)):
            raise SimulationFault("non-finite hand configuration")
    if not np.isfinite(state.particles).all():
        raise SimulationFault("non-finite particle positions")
    a = np.asarray(action, dtype=np.float64).reshape(len(state.hands), spec.action_dim)
    return step_batch(BatchState.from_state(state), a[None], spec, params).row(0)

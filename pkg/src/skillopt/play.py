"""Task-agnostic play data: scripted hand motions, persistence and windowing.

Episodes are sequences of motion primitives.  Each primitive is a
minimum-jerk path through a few waypoints in configuration space (base
x/y, base rotation, finger joints), differenced into per-step deltas and
expressed in normalised action units, so one unit is the per-step maximum
of that degree of freedom.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numerics import make_rng
from .sim.hand import HandSpec

PLAY_MAGIC = b"SKOPT-PLAY/1\n"

FAMILIES = ("close-all", "open-all", "wiggle", "translate-x", "translate-y", "rotate", "sweep")


class PlayConfigError(ValueError):
    pass


class DatasetParseError(ValueError):
    def __init__(self, msg: str, offset: int):
        super().__init__(f"{msg} (at byte {offset})")
        self.offset = offset


@dataclass
class PlayConfig:
    episodes: int = 200
    length: int = 150
    H: int = 10
    families: dict[str, float] = field(default_factory=lambda: {f: 1.0 for f in FAMILIES})
    min_count: int = 10
    segment: tuple[int, int] = (20, 60)      # primitive duration range in steps
    amplitude: tuple[float, float] = (0.3, 0.95)  # fraction of the largest unclamped move

    def validate(self) -> None:
        active = {k: v for k, v in self.families.items() if v > 0}
        if not active:
            raise PlayConfigError("no primitive family enabled")
        unknown = set(active) - set(FAMILIES)
        if unknown:
            raise PlayConfigError(f"unknown primitive families {sorted(unknown)}")
        if self.length % self.H:
            raise PlayConfigError(f"episode length {self.length} not divisible by H={self.H}")
        if self.episodes < 1 or not 1 <= self.segment[0] <= self.segment[1]:
            raise PlayConfigError("invalid episode count or segment range")

    @classmethod
    def from_dict(cls, d: dict) -> "PlayConfig":
        d = dict(d)
        for k in ("segment", "amplitude"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


@dataclass
class Episode:
    actions: np.ndarray                      # (T_e, A), values exactly representable in float32
    labels: list[tuple[str, int, int]]       # (family, start, stop) segments
    seed: int = 0


@dataclass
class PlayDataset:
    episodes: list[Episode]
    H: int = 10
    seed: int = 0

    @property
    def action_dim(self) -> int:
        return self.episodes[0].actions.shape[1]

    def census(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for ep in self.episodes:
            for fam, _, _ in ep.labels:
                out[fam] = out.get(fam, 0) + 1
        return dict(sorted(out.items()))

    def __len__(self) -> int:
        return len(self.episodes)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PlayDataset) or (self.H, self.seed, len(self)) != (other.H, other.seed, len(other)):
            return False
        return all(a.labels == b.labels and a.seed == b.seed and np.array_equal(a.actions, b.actions)
                   for a, b in zip(self.episodes, other.episodes))


# --------------------------------------------------------------------------
# generation


def min_jerk(n: int) -> np.ndarray:
    """Minimum-jerk progress s(k/n) for k = 0..n."""
    tau = np.arange(n + 1) / n
    return tau**3 * (10 - 15 * tau + 6 * tau**2)


def _path(waypoints: np.ndarray, steps: int) -> np.ndarray:
    """Piecewise minimum-jerk path through ``waypoints`` (K, D); returns (steps+1, D)."""
    K = len(waypoints) - 1
    cuts = np.linspace(0, steps, K + 1).round().astype(int)
    out = [waypoints[:1]]
    for k in range(K):
        n = cuts[k + 1] - cuts[k]
        if n == 0:
            continue
        s = min_jerk(n)[1:, None]
        out.append(waypoints[k] + s * (waypoints[k + 1] - waypoints[k]))
    return np.concatenate(out)


# peak speed of a minimum-jerk move is 1.875 x its average speed
_PEAK = 1.875


def _primitive(family: str, n: int, spec: HandSpec, rng: np.random.Generator, amp) -> np.ndarray:
    """Normalised action deltas (n, A) for one primitive lasting ``n`` steps."""
    A = spec.action_dim
    F, J = spec.n_fingers, spec.n_links
    joint = lambda f, j: 3 + f * J + j
    reach = lambda pieces: rng.uniform(*amp) * (n / pieces) / _PEAK

    wp = np.zeros((2, A))
    if family in ("close-all", "open-all"):
        sign = 1.0 if family == "close-all" else -1.0
        d = n / _PEAK
        wp[1, 3:] = sign * rng.uniform(*amp, size=F * J) * d
    elif family == "wiggle":
        f = rng.integers(F)
        wp = np.zeros((3, A))
        for j in range(J):
            wp[1, joint(f, j)] = rng.choice([-1.0, 1.0]) * reach(2)
    elif family == "translate-x":
        wp[1, 0] = rng.choice([-1.0, 1.0]) * reach(1)
    elif family == "translate-y":
        wp[1, 1] = rng.choice([-1.0, 1.0]) * reach(1)
    elif family == "rotate":
        wp[1, 2] = rng.choice([-1.0, 1.0]) * reach(1)
    elif family == "sweep":
        # down, across, up, while the paddle turns
        wp = np.zeros((4, A))
        across = rng.choice([-1.0, 1.0])
        down, side, up = reach(3), reach(3), reach(3)
        wp[1, :2] = [rng.uniform(-0.3, 0.3) * side, -down]
        wp[2, :2] = wp[1, :2] + [across * side, rng.uniform(-0.2, 0.2) * down]
        wp[3, :2] = wp[2, :2] + [rng.uniform(-0.3, 0.3) * side, up]
        turn = rng.uniform(-1, 1) * n / _PEAK * 0.5
        wp[:, 2] = np.linspace(0, turn, 4)
    else:  # pragma: no cover - guarded by PlayConfig.validate
        raise PlayConfigError(family)
    return np.diff(_path(wp, n), axis=0)


def generate_play(cfg: PlayConfig | None = None, seed: int = 0, spec: HandSpec | None = None) -> PlayDataset:
    """Scripted play corpus; bit-identical for a given ``(cfg, seed)``."""
    cfg = cfg or PlayConfig()
    spec = spec or HandSpec()
    cfg.validate()
    names = [f for f in FAMILIES if cfg.families.get(f, 0) > 0]
    w = np.array([cfg.families[f] for f in names], dtype=np.float64)
    w /= w.sum()
    episodes = []
    for e in range(cfg.episodes):
        rng = make_rng(seed, "play", e)
        acts, labels, t = [], [], 0
        while t < cfg.length:
            n = int(rng.integers(cfg.segment[0], cfg.segment[1] + 1))
            n = min(n, cfg.length - t)
            fam = names[rng.choice(len(names), p=w)]
            acts.append(_primitive(fam, n, spec, rng, cfg.amplitude))
            labels.append((fam, t, t + n))
            t += n
        a = np.clip(np.concatenate(acts), -1.0, 1.0).astype(np.float32).astype(np.float64)
        episodes.append(Episode(a, labels, seed))
    return PlayDataset(episodes, cfg.H, seed)


# --------------------------------------------------------------------------
# persistence


def save_dataset(ds: PlayDataset, path) -> None:
    """Header (JSON) then each episode as little-endian float32, in episode order."""
    header = {
        "episodes": len(ds), "A": ds.action_dim if len(ds) else 0, "H": ds.H, "seed": ds.seed,
        "census": ds.census(),
        "lengths": [int(ep.actions.shape[0]) for ep in ds.episodes],
        "labels": [[list(l) for l in ep.labels] for ep in ds.episodes],
        "episode_seeds": [ep.seed for ep in ds.episodes],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(PLAY_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for ep in ds.episodes:
            fh.write(np.ascontiguousarray(ep.actions, dtype="<f4").tobytes())


def load_dataset(path) -> PlayDataset:
    raw = Path(path).read_bytes()
    if not raw.startswith(PLAY_MAGIC):
        raise DatasetParseError("not a play dataset (bad magic)", 0)
    off = len(PLAY_MAGIC)
    if len(raw) < off + 8:
        raise DatasetParseError("truncated header length", off)
    (hlen,) = struct.unpack_from("<Q", raw, off)
    off += 8
    if len(raw) < off + hlen:
        raise DatasetParseError(f"header needs {hlen} bytes, file has {len(raw) - off}", off)
    try:
        h = json.loads(raw[off:off + hlen].decode("utf-8"))
        n, A, lengths = int(h["episodes"]), int(h["A"]), h["lengths"]
    except (ValueError, KeyError, TypeError) as exc:
        raise DatasetParseError(f"malformed header: {exc}", off) from exc
    off += hlen
    if n == 0:
        raise DatasetParseError("dataset has no episodes", off)
    episodes = []
    for e in range(n):
        nbytes = int(lengths[e]) * A * 4
        if len(raw) < off + nbytes:
            raise DatasetParseError(f"episode {e} truncated", off)
        a = np.frombuffer(raw, dtype="<f4", count=int(lengths[e]) * A, offset=off)
        episodes.append(Episode(a.reshape(-1, A).astype(np.float64),
                                [(str(f), int(s), int(t)) for f, s, t in h["labels"][e]],
                                int(h["episode_seeds"][e])))
        off += nbytes
    if off != len(raw):
        raise DatasetParseError(f"{len(raw) - off} trailing bytes", off)
    return PlayDataset(episodes, int(h["H"]), int(h["seed"]))


# --------------------------------------------------------------------------
# windows


def sample_window(ds: PlayDataset, rng: np.random.Generator, aligned: bool = False,
                  H: int | None = None) -> np.ndarray:
    """One H-step window: uniform episode (among those long enough), then uniform start.

    Unaligned windows may start at any step; aligned ones only at multiples of H.
    """
    H = H or ds.H
    ok = [ep for ep in ds.episodes if ep.actions.shape[0] >= H]
    if not ok:
        raise ValueError(f"no episode has at least H={H} steps")
    ep = ok[rng.integers(len(ok))].actions
    if aligned:
        start = H * int(rng.integers(ep.shape[0] // H))
    else:
        start = int(rng.integers(ep.shape[0] - H + 1))
    return ep[start:start + H]


def sample_windows(ds: PlayDataset, rng: np.random.Generator, n: int, aligned: bool = False) -> np.ndarray:
    return np.stack([sample_window(ds, rng, aligned) for _ in range(n)])


def aligned_windows(ds: PlayDataset) -> np.ndarray:
    """Every H-aligned window of every episode, (E, T_e/H, H, A); episodes must share a length."""
    lengths = {ep.actions.shape[0] for ep in ds.episodes}
    if len(lengths) != 1:
        raise ValueError(f"episodes differ in length: {sorted(lengths)}")
    (T,) = lengths
    if T % ds.H:
        raise ValueError(f"episode length {T} not divisible by H={ds.H}")
    a = np.stack([ep.actions for ep in ds.episodes])
    return a.reshape(len(ds), T // ds.H, ds.H, -1)


def encode_dataset(ds: PlayDataset, vae) -> np.ndarray:
    """Posterior-mean skill latents for every aligned window: (E, T_e/H, D_z)."""
    w = aligned_windows(ds)
    E, K = w.shape[:2]
    mu, _ = vae.encode(w.reshape(E * K, *w.shape[2:]))
    return mu.reshape(E, K, -1)


def step_magnitude_envelope(ds: PlayDataset, q: float = 99.0) -> float:
    """Percentile ``q`` of per-step action norms over the whole corpus."""
    a = np.concatenate([ep.actions for ep in ds.episodes])
    return float(np.percentile(np.linalg.norm(a, axis=1), q))

"""Parameter storage, Adam, and the binary checkpoint format."""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Any

import numpy as np

CKPT_MAGIC = b"SKOPT-CKPT/1\n"


class NonFiniteGradientError(FloatingPointError):
    def __init__(self, name: str):
        super().__init__(f"non-finite gradient in parameter {name!r}")
        self.name = name


class CheckpointError(ValueError):
    pass


class ParamStore:
    """Named float64 parameters with gradient accumulators and Adam moments."""

    def __init__(self) -> None:
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self.params:
            raise KeyError(f"duplicate parameter {name!r}")
        value = np.array(value, dtype=np.float64)
        self.params[name] = value
        self.grads[name] = np.zeros_like(value)
        self.m[name] = np.zeros_like(value)
        self.v[name] = np.zeros_like(value)
        return value

    def __getitem__(self, name: str) -> np.ndarray:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __iter__(self):
        return iter(self.params)

    def __len__(self) -> int:
        return len(self.params)

    def accumulate(self, name: str, g: np.ndarray) -> None:
        self.grads[name] += g

    def zero_grad(self) -> None:
        for g in self.grads.values():
            g.fill(0.0)

    def num_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def copy(self) -> "ParamStore":
        out = ParamStore()
        for k, p in self.params.items():
            out.add(k, p.copy())
            out.m[k][...] = self.m[k]
            out.v[k][...] = self.v[k]
        out.step = self.step
        return out


def adam_step(store: ParamStore, lr: float = 1e-4, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8, clip_norm: float | None = None) -> None:
    """Bias-corrected Adam update in place, then zero the gradients.

    If ``clip_norm`` is given, gradients are rescaled so their global L2 norm
    does not exceed it.
    """
    for name, g in store.grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(name)
    scale = 1.0
    if clip_norm is not None:
        total = np.sqrt(sum(float(np.sum(g * g)) for g in store.grads.values()))
        if total > clip_norm:
            scale = clip_norm / total
    store.step += 1
    t = store.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, p in store.params.items():
        g = store.grads[name] * scale
        m = store.m[name]
        v = store.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    store.zero_grad()


# --------------------------------------------------------------------------
# checkpoint: magic line, 8-byte LE header length, JSON header, raw LE float64


def save_checkpoint(path: str | Path, store: ParamStore, meta: dict[str, Any] | None = None) -> None:
    names = sorted(store.params)
    manifest = [{"name": n, "shape": list(store.params[n].shape), "dtype": "<f8"} for n in names]
    header = json.dumps({"tensors": manifest, "step": store.step, "meta": meta or {}},
                        sort_keys=True, indent=1).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for n in names:
            fh.write(np.ascontiguousarray(store.params[n], dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> tuple[ParamStore, dict[str, Any]]:
    raw = Path(path).read_bytes()
    if not raw.startswith(CKPT_MAGIC):
        raise CheckpointError(f"{path}: bad magic")
    off = len(CKPT_MAGIC)
    if len(raw) < off + 8:
        raise CheckpointError(f"{path}: truncated before header length (byte {off})")
    (hlen,) = struct.unpack_from("<Q", raw, off)
    off += 8
    try:
        header = json.loads(raw[off:off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: malformed header at byte {off}: {exc}") from None
    off += hlen
    store = ParamStore()
    for t in header["tensors"]:
        n = int(np.prod(t["shape"], dtype=np.int64))
        end = off + 8 * n
        if end > len(raw):
            raise CheckpointError(f"{path}: tensor {t['name']!r} truncated at byte {len(raw)}")
        arr = np.frombuffer(raw, dtype="<f8", count=n, offset=off).reshape(t["shape"])
        store.add(t["name"], arr.astype(np.float64))
        off = end
    if off != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - off} trailing bytes at byte {off}")
    store.step = int(header.get("step", 0))
    return store, header.get("meta", {})

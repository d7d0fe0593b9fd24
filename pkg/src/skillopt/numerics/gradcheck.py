from __future__ import annotations

from typing import Callable

import numpy as np

from .params import ParamStore


def rel_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-12) -> float:
    """Max-norm relative error ``|a - b|_inf / max(|a|_inf, |b|_inf)``.

    Normalising by the tensor scale rather than per element keeps
    analytically-zero entries (e.g. key biases in attention) from turning
    finite-difference round-off into huge ratios.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0:
        return 0.0
    scale = max(float(np.max(np.abs(a))), float(np.max(np.abs(b))), floor)
    return float(np.max(np.abs(a - b))) / scale


def numeric_grad(f: Callable[[], float], x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central differences of ``f`` w.r.t. ``x`` (perturbed in place)."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for k in range(flat.size):
        old = flat[k]
        flat[k] = old + eps
        fp = f()
        flat[k] = old - eps
        fm = f()
        flat[k] = old
        gflat[k] = (fp - fm) / (2 * eps)
    return g


def grad_check(f: Callable[[], float], store: ParamStore, eps: float = 1e-5,
               max_coords: int | None = None, rng: np.random.Generator | None = None) -> float:
    """Max relative error between ``store.grads`` and central differences.

    ``f`` evaluates the loss from the current parameter values; the analytic
    gradient must already sit in ``store.grads``.  With ``max_coords`` only a
    random subset of coordinates per parameter is probed.
    """
    worst = 0.0
    for name, p in store.params.items():
        flat = p.reshape(-1)
        ga = store.grads[name].reshape(-1)
        idx = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            rng = rng or np.random.default_rng(0)
            idx = rng.choice(flat.size, size=max_coords, replace=False)
        num = np.empty(idx.size)
        for j, k in enumerate(idx):
            old = flat[k]
            flat[k] = old + eps
            fp = f()
            flat[k] = old - eps
            fm = f()
            flat[k] = old
            num[j] = (fp - fm) / (2 * eps)
        worst = max(worst, rel_error(ga[idx], num))
    return worst

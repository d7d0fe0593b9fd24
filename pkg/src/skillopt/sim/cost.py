"""Shape costs: debiased Sinkhorn divergence, exact EMD, normalised improvement."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import _kernels as _k


@dataclass(frozen=True)
class CostConfig:
    p: float = 1.0
    blur: float = 1e-3
    max_iter: int = 500
    tol: float = 1e-9
    scaling: float = 0.5
    eps_start: float = 1.0   # annealing start; fixed so batched rows never interact
    check_every: int = 5

    def __post_init__(self):
        if self.blur <= 0:
            raise ValueError("blur must be positive")
        if self.p <= 0:
            raise ValueError("p must be positive")


def _eps_schedule(cfg: CostConfig) -> np.ndarray:
    eps_final = cfg.blur**cfg.p
    out = []
    e = max(cfg.eps_start, eps_final)
    while e > eps_final:
        out.append(e)
        e *= cfg.scaling**cfg.p
    out.append(eps_final)
    return np.array(out)


def _solver_args(cfg: CostConfig):
    return _eps_schedule(cfg), int(cfg.max_iter), float(cfg.tol), int(cfg.check_every)


def entropic_ot(x: np.ndarray, y: np.ndarray, cfg: CostConfig = CostConfig()):
    """Entropic OT value between uniform clouds ``x`` (..., n, 2) and ``y`` (..., m, 2).

    Log-domain Sinkhorn with epsilon annealing from ``cfg.eps_start`` down to
    ``blur**p`` (one averaged update per level), then alternating iterations
    at the target epsilon until the L1 row-marginal violation drops below
    ``cfg.tol`` or ``cfg.max_iter`` is reached.

    The pair is put in a canonical order first, which makes the value
    exactly symmetric in its arguments.

    Returns ``(value, converged)`` shaped like the leading batch dimensions.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    lead = np.broadcast_shapes(x.shape[:-2], y.shape[:-2])
    xb = np.broadcast_to(x, lead + x.shape[-2:]).reshape(-1, *x.shape[-2:])
    yb = np.broadcast_to(y, lead + y.shape[-2:]).reshape(-1, *y.shape[-2:])
    args = _solver_args(cfg)
    val = np.empty(len(xb))
    conv = np.empty(len(xb), dtype=bool)
    for b in range(len(xb)):
        v, err = _k.ot_cross(np.ascontiguousarray(xb[b]), np.ascontiguousarray(yb[b]),
                             float(cfg.p), *args)
        val[b], conv[b] = v, err < cfg.tol
    return val.reshape(lead), conv.reshape(lead)


def entropic_ot_self(x: np.ndarray, cfg: CostConfig = CostConfig()):
    """OT_eps(x, x) through the symmetric fixed point; batched like :func:`entropic_ot`."""
    x = np.asarray(x, dtype=np.float64)
    lead = x.shape[:-2]
    xb = x.reshape(-1, *x.shape[-2:])
    args = _solver_args(cfg)
    val = np.empty(len(xb))
    conv = np.empty(len(xb), dtype=bool)
    for b in range(len(xb)):
        c = np.ascontiguousarray(xb[b])
        v, err = _k.ot_self(_k.cost_matrix(c, c, float(cfg.p)), *args)
        val[b], conv[b] = v, err < cfg.tol
    return val.reshape(lead), conv.reshape(lead)


def sinkhorn_divergence(x: np.ndarray, y: np.ndarray, cfg: CostConfig = CostConfig(),
                        return_converged: bool = False, yy: float | None = None):
    """S(x, y) = OT(x, y) - OT(x, x)/2 - OT(y, y)/2 with uniform weights.

    ``x`` may carry leading batch dimensions; ``y`` is either batched the same
    way or a single cloud.  ``yy`` optionally supplies a precomputed OT(y, y).
    Negative round-off is clipped to zero.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape[-2] == 0 or y.shape[-2] == 0:
        raise ValueError("point clouds must be nonempty")
    if y.ndim == 2 and x.ndim >= 2:
        # fixed target: one compiled pass over the batch
        if yy is None:
            yy_v, c3 = entropic_ot_self(y, cfg)
            yy_v, c3 = float(yy_v), bool(c3)
        else:
            yy_v, c3 = float(yy), True
        xb = np.ascontiguousarray(x.reshape(-1, *x.shape[-2:]))
        out = np.empty(len(xb))
        conv = np.empty(len(xb), dtype=bool)
        _k.divergence_rows(xb, np.ascontiguousarray(y), yy_v, *_solver_args(cfg), float(cfg.p), out, conv)
        s = out.reshape(x.shape[:-2])
        conv = conv.reshape(x.shape[:-2]) & c3
    else:
        xy, c1 = entropic_ot(x, y, cfg)
        xx, c2 = entropic_ot_self(x, cfg)
        if yy is None:
            yy_v, c3 = entropic_ot_self(y, cfg)
        else:
            yy_v, c3 = yy, True
        s = np.maximum(xy - 0.5 * xx - 0.5 * yy_v, 0.0)
        conv = c1 & c2 & c3
    if s.ndim == 0:
        s, conv = float(s), bool(conv)
    return (s, conv) if return_converged else s


def emd_exact(x: np.ndarray, y: np.ndarray, max_points: int = 64) -> float:
    """Exact EMD between equal-size uniform clouds (optimal assignment / n)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"cloud sizes differ: {x.shape} vs {y.shape}")
    if x.shape[0] > max_points:
        raise ValueError(f"{x.shape[0]} points exceeds the exact-EMD limit of {max_points}")
    C = np.sqrt(((x[:, None, :] - y[None, :, :]) ** 2).sum(-1))
    r, c = linear_sum_assignment(C)
    return float(C[r, c].sum() / x.shape[0])


def normalized_improvement(d0: float, dt: float) -> float:
    """max(0, (d0 - dt) / d0)."""
    if not d0 > 0:
        raise ValueError(f"initial distance must be positive, got {d0}")
    return max(0.0, (d0 - dt) / d0)

"""Cosine DDPM noise schedule, forward corruption and the reverse-step posterior."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BETA_MAX = 0.999


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseSchedule:
    """Arrays indexed by diffusion step ``i = 0..N``.

    Entry 0 of ``beta``, ``alpha`` and ``var`` is a placeholder
    (0, 1, 0); ``alpha_bar[0] = 1``.  ``var[i]`` is the posterior variance
    ((1 - abar[i-1]) / (1 - abar[i])) * beta[i].
    """

    N: int
    s: float
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    var: np.ndarray

    def __len__(self) -> int:
        return self.N

    def sigma(self, i) -> np.ndarray:
        """Posterior standard deviation; ``sigma(0) = 0``."""
        return np.sqrt(self.var[i])


def cosine_schedule(N: int = 200, s: float = 0.008) -> NoiseSchedule:
    """f(i) = cos^2(((i/N + s)/(1 + s)) pi/2); beta_i = 1 - f(i)/f(i-1), clipped at 0.999.

    ``alpha_bar`` is recomputed as the running product of the clipped
    ``1 - beta`` so every schedule identity holds exactly as stored.
    """
    if int(N) != N or N < 1:
        raise ScheduleError(f"N must be a positive integer, got {N}")
    if not s > 0:
        raise ScheduleError(f"s must be positive, got {s}")
    N = int(N)
    f = np.cos(((np.arange(N + 1) / N + s) / (1 + s)) * np.pi / 2) ** 2
    abar_raw = f / f[0]
    beta = np.zeros(N + 1)
    beta[1:] = np.minimum(1.0 - abar_raw[1:] / abar_raw[:-1], BETA_MAX)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    var = np.zeros(N + 1)
    var[1:] = (1.0 - alpha_bar[:-1]) / (1.0 - alpha_bar[1:]) * beta[1:]
    for a in (beta, alpha, alpha_bar, var):
        a.flags.writeable = False
    return NoiseSchedule(N, float(s), beta, alpha, alpha_bar, var)


def _check_step(i, sched: NoiseSchedule) -> np.ndarray:
    i = np.asarray(i)
    if i.dtype.kind not in "iu" or np.any(i < 1) or np.any(i > sched.N):
        raise ScheduleError(f"diffusion step must be an integer in [1, {sched.N}], got {i}")
    return i


def _bcast(c: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Per-sample coefficients (B,) against (B, ...), scalars pass through."""
    return c.reshape(c.shape + (1,) * (x.ndim - c.ndim)) if c.ndim else c


def q_sample(x0: np.ndarray, i, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """x_i = sqrt(abar_i) x0 + sqrt(1 - abar_i) eps; ``i`` is a scalar or one step per batch row."""
    x0 = np.asarray(x0, dtype=np.float64)
    if np.shape(eps) != x0.shape:
        raise ValueError(f"noise shape {np.shape(eps)} != sample shape {x0.shape}")
    i = _check_step(i, sched)
    ab = sched.alpha_bar[i]
    return _bcast(np.sqrt(ab), x0) * x0 + _bcast(np.sqrt(1.0 - ab), x0) * eps


def posterior_coefficients(i, sched: NoiseSchedule) -> tuple[np.ndarray, np.ndarray]:
    """Weights ``(c0, ct)`` of the posterior mean ``c0 * x0 + ct * x_i``.

    At ``i = 1`` they are exactly (1, 0), since ``1 - abar_0 = 0``.
    """
    i = _check_step(i, sched)
    ab, ab_prev = sched.alpha_bar[i], sched.alpha_bar[i - 1]
    b, a = sched.beta[i], sched.alpha[i]
    c0 = np.sqrt(ab_prev) * b / (1.0 - ab)
    ct = np.sqrt(a) * (1.0 - ab_prev) / (1.0 - ab)
    first = i == 1
    return np.where(first, 1.0, c0), np.where(first, 0.0, ct)


def posterior_mean(x0_hat: np.ndarray, x_i: np.ndarray, i, sched: NoiseSchedule) -> np.ndarray:
    """Mean of q(x_{i-1} | x_i, x0) with the prediction ``x0_hat`` in place of x0."""
    x0_hat = np.asarray(x0_hat, dtype=np.float64)
    x_i = np.asarray(x_i, dtype=np.float64)
    if x0_hat.shape != x_i.shape:
        raise ValueError(f"shape mismatch {x0_hat.shape} vs {x_i.shape}")
    c0, ct = posterior_coefficients(i, sched)
    return _bcast(c0, x0_hat) * x0_hat + _bcast(ct, x_i) * x_i

"""Hand-derived forward/backward primitives.

Every ``*_forward`` returns ``(out, cache)`` unless noted; the matching
``*_backward`` consumes ``(dout, cache)``.  Leading dimensions are treated as
batch dimensions throughout.
"""

from __future__ import annotations

import numpy as np

LN_EPS = 1e-5


class DimensionError(ValueError):
    pass


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise DimensionError(msg)


# --------------------------------------------------------------------------
# affine


def affine_forward(x: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    """y = x @ W + b, broadcast over every leading dimension of ``x``."""
    _check(W.ndim == 2, f"W must be 2-D, got shape {W.shape}")
    _check(x.shape[-1] == W.shape[0], f"x has {x.shape[-1]} cols but W has {W.shape[0]} rows")
    _check(b.shape == (W.shape[1],), f"b has shape {b.shape}, expected ({W.shape[1]},)")
    # one 2-D GEMM; a batched 3-D matmul would loop over small products
    y = x.reshape(-1, x.shape[-1]) @ W + b
    return y.reshape(x.shape[:-1] + (W.shape[1],))


def affine_backward(x: np.ndarray, W: np.ndarray, dy: np.ndarray):
    """Returns ``(dx, dW, db)`` for ``y = x @ W + b``."""
    _check(x.shape[-1] == W.shape[0], "x / W shape mismatch")
    _check(dy.shape == x.shape[:-1] + (W.shape[1],), f"dy has shape {dy.shape}")
    x2 = x.reshape(-1, x.shape[-1])
    dy2 = dy.reshape(-1, dy.shape[-1])
    dx = (dy2 @ W.T).reshape(x.shape)
    dW = x2.T @ dy2
    db = dy2.sum(axis=0)
    return dx, dW, db


# --------------------------------------------------------------------------
# pointwise


def sigmoid(x: np.ndarray) -> np.ndarray:
    # split on sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu_forward(x: np.ndarray):
    """tanh approximation of GELU."""
    u = _GELU_C * (x + 0.044715 * (x * x * x))
    t = np.tanh(u)
    return 0.5 * x * (1.0 + t), (x, t)


def gelu_backward(dout: np.ndarray, cache) -> np.ndarray:
    x, t = cache
    du = _GELU_C * (1.0 + 3 * 0.044715 * (x * x))
    return dout * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)


# --------------------------------------------------------------------------
# softmax / layer norm


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_backward(dout: np.ndarray, p: np.ndarray, axis: int = -1) -> np.ndarray:
    return p * (dout - (dout * p).sum(axis=axis, keepdims=True))


def layer_norm_forward(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float = LN_EPS):
    _check(gamma.shape == (x.shape[-1],) and beta.shape == gamma.shape, "layer norm width mismatch")
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc**2).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    return xhat * gamma + beta, (xhat, rstd, gamma)


def layer_norm_backward(dout: np.ndarray, cache):
    xhat, rstd, gamma = cache
    n = xhat.shape[-1]
    dgamma = (dout * xhat).reshape(-1, n).sum(axis=0)
    dbeta = dout.reshape(-1, n).sum(axis=0)
    dxhat = dout * gamma
    dx = rstd * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                 - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return dx, dgamma, dbeta


# --------------------------------------------------------------------------
# multi-head self-attention (full, non-causal)


def attention_forward(x: np.ndarray, Wqkv, bqkv, Wo, bo, n_heads: int):
    """Full self-attention over the second-to-last axis of ``x`` (B, T, E)."""
    B, T, E = x.shape
    _check(E % n_heads == 0, f"embedding {E} not divisible by {n_heads} heads")
    hd = E // n_heads
    qkv = affine_forward(x, Wqkv, bqkv)                      # B,T,3E
    qkv = qkv.reshape(B, T, 3, n_heads, hd).transpose(2, 0, 3, 1, 4)
    q, k, v = qkv[0], qkv[1], qkv[2]                         # B,h,T,hd
    scale = 1.0 / np.sqrt(hd)
    att = softmax((q @ k.transpose(0, 1, 3, 2)) * scale)     # B,h,T,T
    y = att @ v                                              # B,h,T,hd
    yc = y.transpose(0, 2, 1, 3).reshape(B, T, E)
    out = affine_forward(yc, Wo, bo)
    return out, (x, q, k, v, att, yc, Wqkv, Wo, n_heads, scale)


def attention_backward(dout: np.ndarray, cache):
    """Returns ``(dx, dWqkv, dbqkv, dWo, dbo)``."""
    x, q, k, v, att, yc, Wqkv, Wo, n_heads, scale = cache
    B, T, E = x.shape
    hd = E // n_heads
    dyc, dWo, dbo = affine_backward(yc, Wo, dout)
    dy = dyc.reshape(B, T, n_heads, hd).transpose(0, 2, 1, 3)
    datt = dy @ v.transpose(0, 1, 3, 2)
    dv = att.transpose(0, 1, 3, 2) @ dy
    dscores = softmax_backward(datt, att) * scale
    dq = dscores @ k
    dk = dscores.transpose(0, 1, 3, 2) @ q
    dqkv = np.stack([dq, dk, dv]).transpose(1, 3, 0, 2, 4).reshape(B, T, 3 * E)
    dx, dWqkv, dbqkv = affine_backward(x, Wqkv, dqkv)
    return dx, dWqkv, dbqkv, dWo, dbo


# --------------------------------------------------------------------------
# gated recurrent cells


def gru_cell_forward(x, h_prev, Wx, Wh, bx, bh):
    """GRU update ``h = (1 - z) * n + z * h_prev``.

    Gate layout along the 3*Hd axis is (reset, update, candidate).
    """
    Hd = h_prev.shape[-1]
    _check(Wx.shape == (x.shape[-1], 3 * Hd) and Wh.shape == (Hd, 3 * Hd), "gru weight shape mismatch")
    gx = affine_forward(x, Wx, bx)
    gh = affine_forward(h_prev, Wh, bh)
    r = sigmoid(gx[..., :Hd] + gh[..., :Hd])
    z = sigmoid(gx[..., Hd:2 * Hd] + gh[..., Hd:2 * Hd])
    n = np.tanh(gx[..., 2 * Hd:] + r * gh[..., 2 * Hd:])
    h = (1.0 - z) * n + z * h_prev
    return h, (x, h_prev, r, z, n, gh[..., 2 * Hd:], Wx, Wh)


def gru_cell_backward(dh, cache):
    """Returns ``(dx, dh_prev, dWx, dWh, dbx, dbh)``."""
    x, h_prev, r, z, n, ghn, Wx, Wh = cache
    dn = dh * (1.0 - z)
    dz = dh * (h_prev - n)
    dh_prev = dh * z
    dan = dn * (1.0 - n**2)
    dr = dan * ghn
    dar = dr * r * (1.0 - r)
    daz = dz * z * (1.0 - z)
    dgx = np.concatenate([dar, daz, dan], axis=-1)
    dgh = np.concatenate([dar, daz, dan * r], axis=-1)
    dx, dWx, dbx = affine_backward(x, Wx, dgx)
    dhp, dWh, dbh = affine_backward(h_prev, Wh, dgh)
    return dx, dh_prev + dhp, dWx, dWh, dbx, dbh


def lstm_cell_forward(x, state_prev, Wx, Wh, bx, bh):
    """LSTM update; ``state`` is ``(h, c)``.  Gate layout (i, f, g, o)."""
    h_prev, c_prev = state_prev
    Hd = h_prev.shape[-1]
    _check(Wx.shape == (x.shape[-1], 4 * Hd) and Wh.shape == (Hd, 4 * Hd), "lstm weight shape mismatch")
    a = affine_forward(x, Wx, bx) + affine_forward(h_prev, Wh, bh)
    i = sigmoid(a[..., :Hd])
    f = sigmoid(a[..., Hd:2 * Hd])
    g = np.tanh(a[..., 2 * Hd:3 * Hd])
    o = sigmoid(a[..., 3 * Hd:])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return (h, c), (x, h_prev, c_prev, i, f, g, o, tc, Wx, Wh)


def lstm_cell_backward(dstate, cache):
    """``dstate = (dh, dc)``; returns ``(dx, (dh_prev, dc_prev), dWx, dWh, dbx, dbh)``."""
    dh, dc = dstate
    x, h_prev, c_prev, i, f, g, o, tc, Wx, Wh = cache
    do = dh * tc
    dc = dc + dh * o * (1.0 - tc**2)
    di = dc * g
    df = dc * c_prev
    dg = dc * i
    dc_prev = dc * f
    da = np.concatenate([di * i * (1 - i), df * f * (1 - f), dg * (1 - g**2), do * o * (1 - o)], axis=-1)
    dx, dWx, dbx = affine_backward(x, Wx, da)
    dhp, dWh, dbh = affine_backward(h_prev, Wh, da)
    return dx, (dhp, dc_prev), dWx, dWh, dbx, dbh

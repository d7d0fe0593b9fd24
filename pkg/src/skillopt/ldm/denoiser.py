"""Transformer denoiser predicting clean skill trajectories (x0-prediction).

Per position: input projection plus a learned positional embedding plus a
diffusion-step embedding (sinusoidal features through a small GELU MLP).
Then ``L`` pre-norm blocks of self-attention and a 4x GELU MLP, a final
layer norm, and a projection back to the latent width.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numerics import (
    ParamStore,
    affine_backward,
    affine_forward,
    attention_backward,
    attention_forward,
    gelu_backward,
    gelu_forward,
    layer_norm_backward,
    layer_norm_forward,
    make_rng,
)


@dataclass(frozen=True)
class DenoiserConfig:
    latent_dim: int = 16
    length: int = 15        # T_skill
    width: int = 64
    layers: int = 3
    heads: int = 4
    mlp_ratio: int = 4


def step_features(i: np.ndarray, width: int) -> np.ndarray:
    """Sinusoidal features of integer steps (B,) -> (B, width)."""
    half = width // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    ang = np.asarray(i, dtype=np.float64)[:, None] * freqs
    out = np.zeros((ang.shape[0], width))
    out[:, :half] = np.sin(ang)
    out[:, half:2 * half] = np.cos(ang)
    return out


class Denoiser:
    def __init__(self, cfg: DenoiserConfig = DenoiserConfig(), seed: int = 0, store: ParamStore | None = None):
        if cfg.width % cfg.heads:
            raise ValueError(f"width {cfg.width} not divisible by {cfg.heads} heads")
        self.cfg = cfg
        if store is not None:
            self.store = store
            return
        self.store = s = ParamStore()
        rng = make_rng(seed, "denoiser-init")
        D, E, K, M = cfg.latent_dim, cfg.width, cfg.length, cfg.mlp_ratio * cfg.width
        lin = lambda fan_in, shape: rng.standard_normal(shape) / np.sqrt(fan_in)
        s.add("in.W", lin(D, (D, E)))
        s.add("in.b", np.zeros(E))
        s.add("pos", 0.1 * rng.standard_normal((K, E)))
        s.add("t.W1", lin(E, (E, E)))
        s.add("t.b1", np.zeros(E))
        s.add("t.W2", lin(E, (E, E)))
        s.add("t.b2", np.zeros(E))
        for l in range(cfg.layers):
            p = f"blk{l}"
            s.add(f"{p}.ln1.g", np.ones(E))
            s.add(f"{p}.ln1.b", np.zeros(E))
            s.add(f"{p}.attn.Wqkv", lin(E, (E, 3 * E)))
            s.add(f"{p}.attn.bqkv", np.zeros(3 * E))
            # residual branches start small so the stack begins near identity
            s.add(f"{p}.attn.Wo", lin(E, (E, E)) / np.sqrt(2 * cfg.layers))
            s.add(f"{p}.attn.bo", np.zeros(E))
            s.add(f"{p}.ln2.g", np.ones(E))
            s.add(f"{p}.ln2.b", np.zeros(E))
            s.add(f"{p}.mlp.W1", lin(E, (E, M)))
            s.add(f"{p}.mlp.b1", np.zeros(M))
            s.add(f"{p}.mlp.W2", lin(M, (M, E)) / np.sqrt(2 * cfg.layers))
            s.add(f"{p}.mlp.b2", np.zeros(E))
        s.add("lnf.g", np.ones(E))
        s.add("lnf.b", np.zeros(E))
        s.add("out.W", lin(E, (E, D)))
        s.add("out.b", np.zeros(D))

    def forward(self, x: np.ndarray, i):
        """x (B, K, D), steps i (B,) or scalar -> (x0_hat, cache)."""
        s, cfg = self.store, self.cfg
        x = np.asarray(x, dtype=np.float64)
        B, K, D = x.shape
        if K > cfg.length or D != cfg.latent_dim:
            raise ValueError(f"input {x.shape[1:]} does not fit denoiser ({cfg.length}, {cfg.latent_dim})")
        i = np.broadcast_to(np.asarray(i), (B,))
        feat = step_features(i, cfg.width)
        t1 = affine_forward(feat, s["t.W1"], s["t.b1"])
        t1a, c_tg = gelu_forward(t1)
        temb = affine_forward(t1a, s["t.W2"], s["t.b2"])
        h = affine_forward(x, s["in.W"], s["in.b"]) + s["pos"][:K] + temb[:, None, :]
        blocks = []
        for l in range(cfg.layers):
            p = f"blk{l}"
            a_in, c_ln1 = layer_norm_forward(h, s[f"{p}.ln1.g"], s[f"{p}.ln1.b"])
            a_out, c_att = attention_forward(a_in, s[f"{p}.attn.Wqkv"], s[f"{p}.attn.bqkv"],
                                             s[f"{p}.attn.Wo"], s[f"{p}.attn.bo"], cfg.heads)
            h = h + a_out
            m_in, c_ln2 = layer_norm_forward(h, s[f"{p}.ln2.g"], s[f"{p}.ln2.b"])
            m1 = affine_forward(m_in, s[f"{p}.mlp.W1"], s[f"{p}.mlp.b1"])
            m1a, c_g = gelu_forward(m1)
            h = h + affine_forward(m1a, s[f"{p}.mlp.W2"], s[f"{p}.mlp.b2"])
            blocks.append((c_ln1, c_att, c_ln2, m_in, m1a, c_g))
        hf, c_lnf = layer_norm_forward(h, s["lnf.g"], s["lnf.b"])
        y = affine_forward(hf, s["out.W"], s["out.b"])
        return y, (x, feat, t1a, c_tg, blocks, hf, c_lnf)

    def __call__(self, x: np.ndarray, i) -> np.ndarray:
        return self.forward(x, i)[0]

    def backward(self, dy: np.ndarray, cache) -> None:
        """Accumulate parameter gradients for d(loss)/d(x0_hat) = ``dy``."""
        s, cfg = self.store, self.cfg
        x, feat, t1a, c_tg, blocks, hf, c_lnf = cache
        K = x.shape[1]
        acc = s.accumulate
        dhf, dW, db = affine_backward(hf, s["out.W"], dy)
        acc("out.W", dW)
        acc("out.b", db)
        dh, dg, db = layer_norm_backward(dhf, c_lnf)
        acc("lnf.g", dg)
        acc("lnf.b", db)
        for l in reversed(range(cfg.layers)):
            p = f"blk{l}"
            c_ln1, c_att, c_ln2, m_in, m1a, c_g = blocks[l]
            dm1a, dW, db = affine_backward(m1a, s[f"{p}.mlp.W2"], dh)
            acc(f"{p}.mlp.W2", dW)
            acc(f"{p}.mlp.b2", db)
            dm1 = gelu_backward(dm1a, c_g)
            dm_in, dW, db = affine_backward(m_in, s[f"{p}.mlp.W1"], dm1)
            acc(f"{p}.mlp.W1", dW)
            acc(f"{p}.mlp.b1", db)
            d, dg, db = layer_norm_backward(dm_in, c_ln2)
            acc(f"{p}.ln2.g", dg)
            acc(f"{p}.ln2.b", db)
            dh = dh + d
            da_in, dWqkv, dbqkv, dWo, dbo = attention_backward(dh, c_att)
            acc(f"{p}.attn.Wqkv", dWqkv)
            acc(f"{p}.attn.bqkv", dbqkv)
            acc(f"{p}.attn.Wo", dWo)
            acc(f"{p}.attn.bo", dbo)
            d, dg, db = layer_norm_backward(da_in, c_ln1)
            acc(f"{p}.ln1.g", dg)
            acc(f"{p}.ln1.b", db)
            dh = dh + d
        dpos = np.zeros_like(s["pos"])
        dpos[:K] = dh.sum(axis=0)
        acc("pos", dpos)
        _, dW, db = affine_backward(x, s["in.W"], dh)
        acc("in.W", dW)
        acc("in.b", db)
        dtemb = dh.sum(axis=1)
        dt1a, dW, db = affine_backward(t1a, s["t.W2"], dtemb)
        acc("t.W2", dW)
        acc("t.b2", db)
        dt1 = gelu_backward(dt1a, c_tg)
        _, dW, db = affine_backward(feat, s["t.W1"], dt1)
        acc("t.W1", dW)
        acc("t.b1", db)

"""Skill VAE: H-step action windows <-> D_z-dimensional skill latents.

The encoder runs a recurrent stack over the window and reads (mu, logvar)
from its last hidden state.  The decoder feeds z at every step into its own
recurrent stack and squashes a linear readout with tanh, so decoded actions
always lie in [-1, 1].
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .numerics import (
    ParamStore,
    RecurrentStack,
    adam_step,
    affine_backward,
    affine_forward,
    load_checkpoint,
    make_rng,
    save_checkpoint,
)

LOGVAR_MIN, LOGVAR_MAX = -10.0, 2.0


class ModelFault(FloatingPointError):
    pass


class TrainingFault(FloatingPointError):
    def __init__(self, what: str, step: int):
        super().__init__(f"{what} diverged at step {step}")
        self.step = step


@dataclass(frozen=True)
class VaeConfig:
    action_dim: int = 9
    H: int = 10
    latent_dim: int = 16
    hidden: int = 64
    layers: int = 2
    cell: str = "gru"
    beta_kl: float = 1e-3
    logvar_bias: float = -2.0


@dataclass
class VaeTrainConfig:
    steps: int = 3000
    batch: int = 64
    lr: float = 1e-3
    clip_norm: float | None = 1.0
    eval_every: int = 250
    heldout: int = 256


@dataclass
class TrainCurve:
    steps: list[int] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    heldout_mse: list[float] = field(default_factory=list)


class VaeModel:
    def __init__(self, cfg: VaeConfig = VaeConfig(), seed: int = 0, store: ParamStore | None = None):
        self.cfg = cfg
        fresh = store is None
        self.store = ParamStore() if fresh else store
        rng = make_rng(seed, "vae-init")
        tmp = self.store if fresh else ParamStore()
        # building the stacks registers parameters; for a loaded store they are
        # created in a throwaway store and the loaded arrays are used instead
        self.enc = RecurrentStack(tmp, "enc", cfg.action_dim, cfg.hidden, cfg.layers, cfg.cell, rng)
        self.dec = RecurrentStack(tmp, "dec", cfg.latent_dim, cfg.hidden, cfg.layers, cfg.cell, rng)
        if fresh:
            s = 1.0 / np.sqrt(cfg.hidden)
            self.store.add("enc.mu.W", rng.uniform(-s, s, (cfg.hidden, cfg.latent_dim)))
            self.store.add("enc.mu.b", np.zeros(cfg.latent_dim))
            self.store.add("enc.lv.W", rng.uniform(-s, s, (cfg.hidden, cfg.latent_dim)) * 0.1)
            self.store.add("enc.lv.b", np.full(cfg.latent_dim, cfg.logvar_bias))
            self.store.add("dec.out.W", rng.uniform(-s, s, (cfg.hidden, cfg.action_dim)))
            self.store.add("dec.out.b", np.zeros(cfg.action_dim))
        else:
            missing = set(tmp.params) - set(self.store.params)
            if missing:
                raise KeyError(f"checkpoint lacks parameters {sorted(missing)[:3]}")
        self.enc.store = self.store
        self.dec.store = self.store

    # -- forward pieces -----------------------------------------------------

    def _encode(self, w: np.ndarray):
        hs, c_rnn = self.enc.forward(w)
        h = hs[:, -1]
        s = self.store
        mu = affine_forward(h, s["enc.mu.W"], s["enc.mu.b"])
        raw = affine_forward(h, s["enc.lv.W"], s["enc.lv.b"])
        lv = np.clip(raw, LOGVAR_MIN, LOGVAR_MAX)
        return mu, lv, (hs, c_rnn, h, raw)

    def _decode(self, z: np.ndarray):
        zs = np.repeat(z[:, None, :], self.cfg.H, axis=1)
        hs, c_rnn = self.dec.forward(zs)
        s = self.store
        y = np.tanh(affine_forward(hs, s["dec.out.W"], s["dec.out.b"]))
        return y, (hs, c_rnn, y)

    def encode(self, window: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Posterior parameters ``(mu, logvar)`` for one (H, A) window or a (B, H, A) batch."""
        w = np.asarray(window, dtype=np.float64)
        single = w.ndim == 2
        w = w[None] if single else w
        if w.shape[1:] != (self.cfg.H, self.cfg.action_dim):
            raise ValueError(f"window shape {w.shape[1:]} != {(self.cfg.H, self.cfg.action_dim)}")
        mu, lv, _ = self._encode(w)
        if not (np.isfinite(mu).all() and np.isfinite(lv).all()):
            raise ModelFault("encoder produced non-finite output")
        return (mu[0], lv[0]) if single else (mu, lv)

    def decode(self, z: np.ndarray) -> np.ndarray:
        """(D_z,) -> (H, A), or (..., D_z) -> (..., H, A)."""
        z = np.asarray(z, dtype=np.float64)
        lead = z.shape[:-1]
        if z.shape[-1] != self.cfg.latent_dim:
            raise ValueError(f"latent width {z.shape[-1]} != {self.cfg.latent_dim}")
        if not np.isfinite(z).all():
            raise ModelFault("non-finite latent")
        y, _ = self._decode(z.reshape(-1, self.cfg.latent_dim))
        if not np.isfinite(y).all():
            raise ModelFault("decoder produced non-finite output")
        return y.reshape(*lead, self.cfg.H, self.cfg.action_dim)

    def decode_sequence(self, zs: np.ndarray) -> np.ndarray:
        """Skill trajectories (..., K, D_z) -> action trajectories (..., K*H, A)."""
        y = self.decode(zs)
        return y.reshape(*zs.shape[:-2], zs.shape[-2] * self.cfg.H, self.cfg.action_dim)

    # -- loss -----------------------------------------------------------------

    def elbo_loss(self, window: np.ndarray, rng: np.random.Generator | None = None,
                  eps: np.ndarray | None = None, backward: bool = False):
        """``(loss, recon, kl)`` averaged over the batch.

        recon is the mean squared error over all window entries; kl is
        0.5 * sum(exp(lv) + mu^2 - 1 - lv) averaged over the batch.  Noise
        comes from ``eps`` if given, else from ``rng``.  With ``backward``
        the gradients are accumulated into the store.
        """
        w = np.asarray(window, dtype=np.float64)
        w = w[None] if w.ndim == 2 else w
        B = w.shape[0]
        mu, lv, ce = self._encode(w)
        if eps is None:
            eps = rng.standard_normal(mu.shape)
        std = np.exp(0.5 * lv)
        z = mu + std * eps
        y, cd = self._decode(z)
        diff = y - w
        recon = float(np.mean(diff * diff))
        kl = float(0.5 * np.sum(np.expm1(lv) - lv + mu * mu) / B)
        loss = recon + self.cfg.beta_kl * kl
        if backward:
            self._backward(w, mu, lv, eps, std, z, diff, ce, cd)
        return loss, recon, kl

    def _backward(self, w, mu, lv, eps, std, z, diff, ce, cd):
        s, cfg = self.store, self.cfg
        B = w.shape[0]
        hs_d, crnn_d, y = cd
        dy = 2.0 * diff / diff.size
        dpre = dy * (1.0 - y * y)
        dhs_d, dW, db = affine_backward(hs_d, s["dec.out.W"], dpre)
        s.accumulate("dec.out.W", dW)
        s.accumulate("dec.out.b", db)
        dzs = self.dec.backward(dhs_d, crnn_d)
        dz = dzs.sum(axis=1)
        b = cfg.beta_kl / B
        dmu = dz + b * mu
        dlv = dz * eps * 0.5 * std + b * 0.5 * (np.exp(lv) - 1.0)
        hs_e, crnn_e, h, raw = ce
        dlv = dlv * ((raw >= LOGVAR_MIN) & (raw <= LOGVAR_MAX))
        dh1, dW, db = affine_backward(h, s["enc.mu.W"], dmu)
        s.accumulate("enc.mu.W", dW)
        s.accumulate("enc.mu.b", db)
        dh2, dW, db = affine_backward(h, s["enc.lv.W"], dlv)
        s.accumulate("enc.lv.W", dW)
        s.accumulate("enc.lv.b", db)
        dhs = np.zeros_like(hs_e)
        dhs[:, -1] = dh1 + dh2
        self.enc.backward(dhs, crnn_e)


def reparameterize(mu: np.ndarray, logvar: np.ndarray, rng: np.random.Generator | None = None,
                   eps: np.ndarray | None = None) -> np.ndarray:
    """z = mu + exp(logvar / 2) * eps with eps ~ N(0, I) (or injected).

    ``logvar = -inf`` gives sigma = 0 and returns ``mu`` exactly.
    """
    mu = np.asarray(mu, dtype=np.float64)
    if eps is None:
        eps = rng.standard_normal(mu.shape)
    return mu + np.exp(0.5 * np.asarray(logvar, dtype=np.float64)) * eps


def kl_divergence(mu: np.ndarray, logvar: np.ndarray) -> float:
    """KL(N(mu, exp(logvar)) || N(0, I)) summed over the last axis, averaged over the rest."""
    mu, lv = np.atleast_2d(mu), np.atleast_2d(logvar)
    # expm1 keeps exp(lv) - 1 - lv non-negative for tiny lv
    return float(0.5 * np.sum(np.expm1(lv) - lv + mu * mu) / mu.shape[0])


def roundtrip_mse(model: VaeModel, windows: np.ndarray) -> float:
    """Mean squared error of decode(posterior mean of encode(w))."""
    mu, _ = model.encode(windows)
    return float(np.mean((model.decode(mu) - windows) ** 2))


def train_vae(ds, cfg: VaeConfig | None = None, hyper: VaeTrainConfig | None = None, seed: int = 0):
    """Adam on the ELBO over unaligned play windows; returns ``(model, curve)``.

    A fixed held-out set of windows (its own RNG stream) is scored by
    round-trip MSE every ``hyper.eval_every`` steps.
    """
    from .play import sample_windows

    hyper = hyper or VaeTrainConfig()
    if cfg is None:
        cfg = VaeConfig(action_dim=ds.action_dim, H=ds.H)
    if len(ds) == 0:
        raise ValueError("empty play dataset")
    model = VaeModel(cfg, seed)
    data_rng = make_rng(seed, "vae-batches")
    noise_rng = make_rng(seed, "vae-noise")
    held = sample_windows(ds, make_rng(seed, "vae-heldout"), hyper.heldout)
    curve = TrainCurve()

    def evaluate(step, loss):
        curve.steps.append(step)
        curve.train_loss.append(loss)
        try:
            curve.heldout_mse.append(roundtrip_mse(model, held))
        except ModelFault as exc:
            raise TrainingFault(f"VAE held-out evaluation ({exc})", step) from exc

    loss = float("nan")
    for step in range(hyper.steps):
        if step % hyper.eval_every == 0:
            evaluate(step, loss)
        w = sample_windows(ds, data_rng, hyper.batch)
        loss, _, _ = model.elbo_loss(w, noise_rng, backward=True)
        if not np.isfinite(loss):
            raise TrainingFault("VAE loss", step)
        try:
            adam_step(model.store, hyper.lr, clip_norm=hyper.clip_norm)
        except FloatingPointError as exc:
            raise TrainingFault(f"VAE gradient ({exc})", step) from exc
    evaluate(hyper.steps, loss)
    return model, curve


def save_vae(path, model: VaeModel, extra: dict | None = None) -> None:
    save_checkpoint(path, model.store, {"kind": "vae", "config": asdict(model.cfg), **(extra or {})})


def load_vae(path) -> VaeModel:
    store, meta = load_checkpoint(path)
    if meta.get("kind") != "vae":
        raise ValueError(f"{path} is not a VAE checkpoint")
    return VaeModel(VaeConfig(**meta["config"]), store=store)

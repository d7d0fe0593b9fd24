"""The individual reproduction stages, shared by the CLI and the pipeline.

Every stage is a pure function of its config section, seed and input
files, so rerunning it writes byte-identical outputs.
"""

from __future__ import annotations

import logging
from dataclasses import asdict
from pathlib import Path

import numpy as np

from ..config import build
from ..ldm import DenoiserConfig, LdmTrainConfig, load_ldm, save_ldm, train_ldm
from ..optimize import OptResult
from ..play import PlayConfig, aligned_windows, encode_dataset, generate_play, load_dataset, save_dataset
from ..vae import VaeConfig, VaeTrainConfig, load_vae, save_vae, train_vae
from .harness import BenchConfig, Models, run_benchmark, run_method
from .report import BenchReport, emit_report

log = logging.getLogger("skillopt.bench")


def _parent(path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def play_gen(cfg: dict, out) -> Path:
    ds = generate_play(build(PlayConfig, cfg["play"]), seed=int(cfg["seed"]))
    log.info("play-gen: %d episodes, census %s", len(ds), ds.census())
    save_dataset(ds, _parent(out))
    return Path(out)


def train_vae_stage(cfg: dict, data, out) -> Path:
    ds = load_dataset(data)
    model, curve = train_vae(ds, build(VaeConfig, cfg["vae_net"]), build(VaeTrainConfig, cfg["vae_train"]),
                             seed=int(cfg["seed"]))
    log.info("train-vae: held-out reconstruction MSE %s", curve.heldout_mse[-1] if curve.heldout_mse else None)
    save_vae(_parent(out), model, {"curve": asdict(curve)})
    return Path(out)


def encode_stage(cfg: dict, data, vae, out) -> Path:
    """Skill latents (E, K, D_z) as ``.npy``; with ``vae=None`` the raw action windows (E, K, H*A)."""
    ds = load_dataset(data)
    if vae is None:
        w = aligned_windows(ds)
        lat = w.reshape(w.shape[0], w.shape[1], -1)
    else:
        lat = encode_dataset(ds, load_vae(vae))
    with open(_parent(out), "wb") as fh:
        np.save(fh, np.ascontiguousarray(lat, dtype=np.float64))
    log.info("encode: latents %s", lat.shape)
    return Path(out)


def train_ldm_stage(cfg: dict, latents, out, raw: bool = False) -> Path:
    lat = np.load(latents)
    if lat.ndim != 3:
        raise ValueError(f"{latents}: expected (E, K, D) latents, got shape {lat.shape}")
    hyper = cfg["raw_ldm_train"] if raw and cfg.get("raw_ldm_train") else cfg["ldm_train"]
    den = build(DenoiserConfig, cfg["denoiser"], latent_dim=lat.shape[2], length=lat.shape[1])
    model, curve = train_ldm(lat, den, build(LdmTrainConfig, hyper), seed=int(cfg["seed"]))
    log.info("train-ldm: final loss %s", curve.loss[-1] if curve.loss else None)
    save_ldm(_parent(out), model, {"curve": asdict(curve)})
    return Path(out)


def load_models(vae=None, ldm=None, raw_ldm=None) -> Models:
    return Models(load_vae(vae) if vae else None, load_ldm(ldm) if ldm else None,
                  load_ldm(raw_ldm) if raw_ldm else None)


def optimize_stage(cfg: dict, task: str, method: str, models: Models, out) -> OptResult:
    bench = BenchConfig.from_dict({"methods": cfg["methods"], "no_skill_H": cfg["bench"]["no_skill_H"]})
    r = run_method(task, method, int(cfg["seed"]), models, bench)
    r.save(_parent(out), include_wall_time=False)
    log.info("optimize: %s on %s improvement %.4f (%d evaluations)", method, r.task, r.improvement, r.evaluations)
    return r


def bench_stage(cfg: dict, models: Models, out) -> BenchReport:
    """Every run group of ``cfg['bench']`` over seeds ``seed .. seed + seeds - 1``; one report under ``out``."""
    b = cfg["bench"]
    bench = BenchConfig.from_dict({"methods": cfg["methods"], "no_skill_H": b["no_skill_H"]})
    seeds = list(range(int(cfg["seed"]), int(cfg["seed"]) + int(b["seeds"])))
    report = BenchReport()
    for group in b["runs"]:
        part = run_benchmark(group["tasks"], group["methods"], seeds, bench, models)
        report.cells.extend(part.cells)
    emit_report(report, out, include_wall_time=bool(b["record_wall_time"]))
    return report

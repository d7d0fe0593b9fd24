"""One-command reproduction with per-stage caching.

Stages run in dependency order.  A stage is skipped when the manifest
records the same key (a hash of its config sections and of its input
files) and every recorded output still exists with the recorded hash.
A stage whose dependency ran in this invocation always runs too, so
deleting an artifact re-runs exactly that stage and everything below it.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .. import __version__
from . import stages
from .report import BenchReport, read_csv

log = logging.getLogger("skillopt.bench")

MANIFEST = "manifest.json"


class PipelineError(RuntimeError):
    def __init__(self, stage: str, exc: BaseException, log_path: Path | None = None):
        where = f" (log: {log_path})" if log_path else ""
        super().__init__(f"stage {stage} failed: {type(exc).__name__}: {exc}{where}")
        self.stage = stage


@dataclass
class Stage:
    name: str
    deps: list[str]
    sections: list[str]   # config sections that feed the stage key
    run: Callable[[dict, Path], list[Path]]


@dataclass
class PipelineResult:
    out_dir: Path
    ran: list[str] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)
    seconds: dict[str, float] = field(default_factory=dict)   # recorded wall time of every stage's last run

    @property
    def report_dir(self) -> Path:
        return self.out_dir / "report"

    def report(self) -> BenchReport:
        return read_csv(self.report_dir / "report.csv")

    def artifact(self, name: str) -> Path:
        return self.out_dir / name


def file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def needs_raw_model(cfg: dict) -> bool:
    return any(m.split(":")[0].strip() == "no-skill" for g in cfg["bench"]["runs"] for m in g["methods"])


def build_stages(cfg: dict) -> list[Stage]:
    raw = needs_raw_model(cfg)

    def bench(c, out):
        models = stages.load_models(out / "vae.ckpt", out / "ldm.ckpt", out / "raw_ldm.ckpt" if raw else None)
        stages.bench_stage(c, models, out / "report")
        return sorted(p for p in (out / "report").rglob("*") if p.is_file())

    st = [
        Stage("play-gen", [], ["seed", "play"], lambda c, out: [stages.play_gen(c, out / "play.bin")]),
        Stage("train-vae", ["play-gen"], ["seed", "vae_net", "vae_train"],
              lambda c, out: [stages.train_vae_stage(c, out / "play.bin", out / "vae.ckpt")]),
        Stage("encode", ["play-gen", "train-vae"], [],
              lambda c, out: [stages.encode_stage(c, out / "play.bin", out / "vae.ckpt", out / "latents.npy")]),
        Stage("train-ldm", ["encode"], ["seed", "denoiser", "ldm_train"],
              lambda c, out: [stages.train_ldm_stage(c, out / "latents.npy", out / "ldm.ckpt")]),
    ]
    if raw:
        st += [
            Stage("encode-raw", ["play-gen"], [],
                  lambda c, out: [stages.encode_stage(c, out / "play.bin", None, out / "raw_windows.npy")]),
            Stage("train-raw-ldm", ["encode-raw"], ["seed", "denoiser", "ldm_train", "raw_ldm_train"],
                  lambda c, out: [stages.train_ldm_stage(c, out / "raw_windows.npy", out / "raw_ldm.ckpt",
                                                         raw=True)]),
        ]
    st.append(Stage("bench", ["train-vae", "train-ldm"] + (["train-raw-ldm"] if raw else []),
                    ["seed", "methods", "bench"], bench))
    return st


def _key(stage: Stage, cfg: dict, manifest: dict) -> str:
    inputs = {d: manifest[d]["outputs"] for d in stage.deps}
    blob = json.dumps({"stage": stage.name, "version": __version__,
                       "config": {s: cfg.get(s) for s in stage.sections}, "inputs": inputs}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


def _fresh(entry: dict | None, key: str, out: Path) -> bool:
    if not entry or entry.get("key") != key:
        return False
    for rel, h in entry["outputs"].items():
        p = out / rel
        if not p.is_file() or file_hash(p) != h:
            return False
    return True


def run_pipeline(cfg: dict, out_dir, force: bool = False) -> PipelineResult:
    """play-gen -> train-vae -> encode -> train-ldm (-> raw-action model) -> bench + report."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    mpath = out / MANIFEST
    manifest = json.loads(mpath.read_text()) if mpath.exists() else {}
    log_path = out / "pipeline.log"
    handler = logging.FileHandler(log_path)
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    root = logging.getLogger("skillopt")
    root.addHandler(handler)
    prev_level = root.level
    if root.level == logging.NOTSET or root.level > logging.INFO:
        root.setLevel(logging.INFO)
    result = PipelineResult(out)
    try:
        ran: set[str] = set()
        for stage in build_stages(cfg):
            key = _key(stage, cfg, manifest)
            if not force and not (set(stage.deps) & ran) and _fresh(manifest.get(stage.name), key, out):
                log.info("stage %s: cached, skipped", stage.name)
                result.skipped.append(stage.name)
                result.seconds[stage.name] = manifest[stage.name].get("seconds", 0.0)
                continue
            log.info("stage %s: running", stage.name)
            t0 = time.perf_counter()
            try:
                outputs = stage.run(cfg, out)
            except Exception as exc:
                log.error("stage %s failed: %s", stage.name, exc)
                manifest.pop(stage.name, None)
                mpath.write_text(json.dumps(manifest, indent=1, sort_keys=True))
                raise PipelineError(stage.name, exc, log_path) from exc
            secs = time.perf_counter() - t0
            manifest[stage.name] = {"key": key, "seconds": secs,
                                    "outputs": {str(p.relative_to(out)): file_hash(p) for p in outputs}}
            mpath.write_text(json.dumps(manifest, indent=1, sort_keys=True))
            ran.add(stage.name)
            result.ran.append(stage.name)
            result.seconds[stage.name] = secs
            log.info("stage %s: done in %.1f s", stage.name, secs)
    finally:
        root.removeHandler(handler)
        handler.close()
        root.setLevel(prev_level)
    return result

"""Smallest end-to-end run: train tiny models, then search one task with them.

Uses ``configs/smoke.yaml`` (minutes on a laptop core) and writes every
artifact to ``demo-run/``.  Rerunning reuses the cached stages.

    python demos/quickstart.py
"""

from pathlib import Path

from skillopt.bench import run_pipeline
from skillopt.bench.stages import load_models
from skillopt.config import load_config
from skillopt.optimize import DCubedConfig, d_cubed_optimize
from skillopt.sim import get_task

ROOT = Path(__file__).resolve().parents[1]


def main() -> None:
    cfg = load_config(ROOT / "configs" / "smoke.yaml")
    res = run_pipeline(cfg, ROOT / "demo-run")
    print(f"stages run: {res.ran or 'none (cached)'}")

    models = load_models(res.artifact("vae.ckpt"), res.artifact("ldm.ckpt"))
    task = get_task("fold-line")
    r = d_cubed_optimize(task, models.vae, models.ldm, DCubedConfig(B=4, seed=0))
    print(f"diffusion CEM on {task.name}: {r.evaluations} rollouts, cost {task.d0:.5f} -> {r.c_best:.5f}, "
          f"improvement {r.improvement:.3f}")
    print(f"best cost after each reverse step: {[round(c, 5) for c in r.trace]}")
    print("(tiny models barely move the cloud; `skillopt pipeline` trains the full-size ones)")


if __name__ == "__main__":
    main()

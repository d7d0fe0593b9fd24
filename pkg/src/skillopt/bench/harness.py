"""Run every (task, method, seed) cell of a benchmark and collect a report."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields, replace
from typing import Callable

import yaml

from ..ldm import LatentDiffusion
from ..optimize import (
    DCubedConfig,
    DiffusionEsConfig,
    GuidanceConfig,
    MppiConfig,
    OptResult,
    SkillMppiConfig,
    ablation_no_skill,
    classifier_guided_sample,
    d_cubed_optimize,
    diffusion_es_optimize,
    mppi_optimize,
    skill_mppi_optimize,
)
from ..sim import Task, get_task, load_task_file
from .report import BenchReport, Cell

log = logging.getLogger("skillopt.bench")


@dataclass
class Models:
    """Trained artifacts the model-based methods draw on."""

    vae: object | None = None
    ldm: LatentDiffusion | None = None
    raw_ldm: LatentDiffusion | None = None   # diffusion over raw action windows, for the no-skill ablation


@dataclass
class BenchConfig:
    """Per-method settings keyed by method name (``d-cubed``, ``mppi``, ...)."""

    methods: dict[str, dict] = field(default_factory=dict)
    no_skill_H: int = 10

    @classmethod
    def from_dict(cls, d: dict | None) -> "BenchConfig":
        d = dict(d or {})
        return cls(methods={k: dict(v or {}) for k, v in (d.get("methods") or {}).items()},
                   no_skill_H=int(d.get("no_skill_H", 10)))


def _need(models: Models | None, *names: str) -> list:
    out = []
    for n in names:
        v = getattr(models, n, None) if models is not None else None
        if v is None:
            raise ValueError(f"method needs a trained {n.replace('_', ' ')}")
        out.append(v)
    return out


def _dcubed(task, seed, cfg, models, bench):
    vae, ldm = _need(models, "vae", "ldm")
    return d_cubed_optimize(task, vae, ldm, replace(DCubedConfig(**cfg), seed=seed))


def _no_skill(task, seed, cfg, models, bench):
    (raw,) = _need(models, "raw_ldm")
    return ablation_no_skill(task, raw, replace(DCubedConfig(**cfg), seed=seed), H=bench.no_skill_H)


def _mppi(task, seed, cfg, models, bench):
    return mppi_optimize(task, replace(MppiConfig(**cfg), seed=seed))


def _skill_mppi(task, seed, cfg, models, bench):
    vae, ldm = _need(models, "vae", "ldm")
    return skill_mppi_optimize(task, vae, replace(SkillMppiConfig(**cfg), seed=seed), ldm.mean, ldm.std,
                               K=ldm.shape[0])


def _classifier(task, seed, cfg, models, bench):
    vae, ldm = _need(models, "vae", "ldm")
    return classifier_guided_sample(task, vae, ldm, replace(GuidanceConfig(**cfg), seed=seed))


def _des(task, seed, cfg, models, bench):
    vae, ldm = _need(models, "vae", "ldm")
    return diffusion_es_optimize(task, vae, ldm, replace(DiffusionEsConfig(**cfg), seed=seed))


METHODS: dict[str, Callable[..., OptResult]] = {
    "d-cubed": _dcubed,
    "mppi": _mppi,
    "skill-mppi": _skill_mppi,
    "classifier": _classifier,
    "diffusion-es": _des,
    "no-skill": _no_skill,
}

CONFIG_TYPES = {"d-cubed": DCubedConfig, "no-skill": DCubedConfig, "mppi": MppiConfig,
                "skill-mppi": SkillMppiConfig, "classifier": GuidanceConfig, "diffusion-es": DiffusionEsConfig}


def parse_method(spec: str) -> tuple[str, dict]:
    """``"d-cubed:B=8,seed=1"`` -> ``("d-cubed", {"B": 8, "seed": 1})``; values are parsed as YAML scalars."""
    name, _, rest = spec.partition(":")
    name = name.strip()
    if name not in METHODS:
        raise ValueError(f"unknown method {name!r}; known: {sorted(METHODS)}")
    overrides = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        k, eq, v = item.partition("=")
        if not eq:
            raise ValueError(f"method option {item!r} is not key=value")
        overrides[k.strip()] = yaml.safe_load(v)
    allowed = {f.name for f in fields(CONFIG_TYPES[name])}
    bad = set(overrides) - allowed
    if bad:
        raise ValueError(f"{name}: unknown options {sorted(bad)}")
    return name, overrides


def resolve_task(task: str | Task) -> Task:
    """A built-in task name or a path to a task config file."""
    if isinstance(task, Task):
        return task
    if task.endswith((".yaml", ".yml")):
        return load_task_file(task)
    return get_task(task)


def run_method(task: str | Task, method: str, seed: int, models: Models | None = None,
               cfg: BenchConfig | None = None) -> OptResult:
    """One optimizer run; ``method`` may carry ``:key=value`` overrides."""
    cfg = cfg or BenchConfig()
    name, overrides = parse_method(method)
    params = {**cfg.methods.get(name, {}), **overrides}
    params.pop("seed", None)
    return METHODS[name](resolve_task(task), seed, params, models, cfg)


def run_benchmark(tasks, methods, seeds, cfg: BenchConfig | None = None, models: Models | None = None,
                  on_cell: Callable[[Cell], None] | None = None) -> BenchReport:
    """Run the full task x method x seed grid in a fixed order.

    A cell that raises is recorded as failed with its error message and
    the suite moves on.  Cells run one after another; their order in the
    report is the loop order, so the report is deterministic.
    """
    report = BenchReport()
    for t in tasks:
        try:
            task = resolve_task(t)
        except Exception as exc:  # every cell of an unloadable task fails
            log.warning("task %s could not be loaded: %s", t, exc)
            for m in methods:
                for s in seeds:
                    report.cells.append(Cell(str(t), m, int(s), "failed", error=f"{type(exc).__name__}: {exc}"))
            continue
        for m in methods:
            for s in seeds:
                try:
                    r = run_method(task, m, int(s), models, cfg)
                    cell = Cell(task.name, m, int(s), "ok", r.improvement, r.c_best, r.d0, r.evaluations,
                                r.wall_time, list(r.trace))
                except Exception as exc:  # recorded, not fatal
                    log.warning("cell %s / %s / seed %s failed: %s", task.name, m, s, exc)
                    cell = Cell(task.name, m, int(s), "failed", d0=task.d0, error=f"{type(exc).__name__}: {exc}")
                report.cells.append(cell)
                log.info("%s / %s / seed %d: %s improvement %.4f", cell.task, cell.method, cell.seed,
                         cell.status, cell.improvement)
                if on_cell:
                    on_cell(cell)
    return report

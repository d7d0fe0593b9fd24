"""Command-line entry point: ``skillopt <stage> [--config FILE] [--seed N] [--out PATH] ...``.

Every flag has a config-file key of the same name (``--raw-ldm`` is
``raw_ldm``); flags win over the file, the file over built-in defaults.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, load_config

log = logging.getLogger("skillopt")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML config file")
    p.add_argument("--seed", type=int, help="base seed (default 0)")
    p.add_argument("--out", help="output path")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="skillopt", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("play-gen", help="generate the scripted play dataset")
    _common(p)

    p = sub.add_parser("train-vae", help="train the skill VAE on a play dataset")
    _common(p)
    p.add_argument("--data", help="play dataset file")

    p = sub.add_parser("encode", help="encode a play dataset into skill-latent sequences (.npy)")
    _common(p)
    p.add_argument("--data", help="play dataset file")
    p.add_argument("--vae", help="VAE checkpoint")
    p.add_argument("--raw", action="store_true", default=None,
                   help="emit flattened raw action windows instead (no VAE)")

    p = sub.add_parser("train-ldm", help="train the latent diffusion model")
    _common(p)
    p.add_argument("--latents", help=".npy latents from `encode`")
    p.add_argument("--raw", action="store_true", default=None, help="use the raw_ldm_train settings")

    p = sub.add_parser("optimize", help="optimise one task with one method")
    _common(p)
    p.add_argument("--task", help="built-in task name or task YAML file")
    p.add_argument("--method", help="d-cubed | mppi | skill-mppi | classifier | diffusion-es | no-skill"
                                    " (options as method:key=value,...)")
    p.add_argument("--vae", help="VAE checkpoint")
    p.add_argument("--ldm", help="LDM checkpoint (the raw-action model for no-skill)")

    p = sub.add_parser("bench", help="run the benchmark grid and write the report directory")
    _common(p)
    p.add_argument("--vae", help="VAE checkpoint")
    p.add_argument("--ldm", help="LDM checkpoint")
    p.add_argument("--raw-ldm", dest="raw_ldm", help="raw-action LDM checkpoint (no-skill)")
    p.add_argument("--tasks", nargs="+", help="replace the configured runs by one tasks x methods grid")
    p.add_argument("--methods", nargs="+")
    p.add_argument("--seeds", type=int, help="number of seeds, starting at --seed")

    p = sub.add_parser("pipeline", help="play-gen -> train-vae -> encode -> train-ldm -> bench, cached")
    _common(p)
    p.add_argument("--force", action="store_true", help="ignore the cache and rerun every stage")
    return ap


def _need(cfg: dict, key: str) -> str:
    v = cfg["paths"].get(key)
    if v in (None, ""):
        raise ConfigError(f"missing --{key.replace('_', '-')} (or `{key}:` in the config file)")
    return v


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    flags = {k: getattr(args, k, None) for k in ("seed", "out", "data", "vae", "ldm", "raw_ldm", "latents",
                                                 "task", "method", "raw")}
    try:
        cfg = load_config(args.config, flags)
        if args.command == "bench":
            if args.tasks or args.methods:
                if not (args.tasks and args.methods):
                    raise ConfigError("--tasks and --methods go together")
                cfg["bench"]["runs"] = [{"tasks": args.tasks, "methods": args.methods}]
            if args.seeds is not None:
                cfg["bench"]["seeds"] = args.seeds
        return _dispatch(args.command, cfg, args)
    except ConfigError as exc:
        print(f"skillopt: config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"skillopt {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def _dispatch(cmd: str, cfg: dict, args) -> int:
    from .bench import stages
    from .bench.pipeline import run_pipeline

    out = _need(cfg, "out")
    if cmd == "play-gen":
        stages.play_gen(cfg, out)
    elif cmd == "train-vae":
        stages.train_vae_stage(cfg, _need(cfg, "data"), out)
    elif cmd == "encode":
        raw = bool(cfg["paths"].get("raw"))
        stages.encode_stage(cfg, _need(cfg, "data"), None if raw else _need(cfg, "vae"), out)
    elif cmd == "train-ldm":
        stages.train_ldm_stage(cfg, _need(cfg, "latents"), out, raw=bool(cfg["paths"].get("raw")))
    elif cmd == "optimize":
        method = _need(cfg, "method")
        raw = method.split(":")[0].strip() == "no-skill"
        models = stages.load_models(None if raw else cfg["paths"].get("vae"),
                                    None if raw else cfg["paths"].get("ldm"),
                                    cfg["paths"].get("ldm") if raw else None)
        r = stages.optimize_stage(cfg, _need(cfg, "task"), method, models, out)
        print(f"{r.method} on {r.task}: improvement {r.improvement:.4f}, C_best {r.c_best:.6g}, "
              f"{r.evaluations} evaluations")
    elif cmd == "bench":
        p = cfg["paths"]
        models = stages.load_models(p.get("vae"), p.get("ldm"), p.get("raw_ldm"))
        report = stages.bench_stage(cfg, models, out)
        failed = [c for c in report.cells if not c.ok]
        for a in report.aggregates():
            print(f"{a.task:16s} {a.method:16s} {a.mean:.4f} ± {a.std:.4f} (n={a.n})")
        if failed:
            print(f"{len(failed)} of {len(report.cells)} cells failed", file=sys.stderr)
            return 1
    elif cmd == "pipeline":
        res = run_pipeline(cfg, out, force=args.force)
        print(f"ran: {', '.join(res.ran) or 'nothing'}; cached: {', '.join(res.skipped) or 'nothing'}")
        report = res.report()
        for a in report.aggregates():
            print(f"{a.task:16s} {a.method:16s} {a.mean:.4f} ± {a.std:.4f} (n={a.n})")
        if not report.ok:
            print("some benchmark cells failed", file=sys.stderr)
            return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

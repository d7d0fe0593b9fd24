"""Benchmark cells, seed aggregates and their CSV / markdown / trace emission."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CELL_FIELDS = ["kind", "task", "method", "seed", "status", "improvement", "c_best", "d0", "evaluations",
               "wall_time", "n", "mean", "std", "error"]


@dataclass
class Cell:
    """One (task, method, seed) run.  ``improvement`` is NaN for a failed cell."""

    task: str
    method: str
    seed: int
    status: str = "ok"
    improvement: float = math.nan
    c_best: float = math.nan
    d0: float = math.nan
    evaluations: int = 0
    wall_time: float = math.nan
    trace: list[float] = field(default_factory=list)
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass
class Aggregate:
    """Mean and population std of improvement over the successful seeds of one (task, method)."""

    task: str
    method: str
    n: int
    failed: int
    mean: float
    std: float


@dataclass
class BenchReport:
    cells: list[Cell] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.cells)

    def tasks(self) -> list[str]:
        return list(dict.fromkeys(c.task for c in self.cells))

    def methods(self) -> list[str]:
        return list(dict.fromkeys(c.method for c in self.cells))

    def select(self, task: str, method: str) -> list[Cell]:
        return [c for c in self.cells if c.task == task and c.method == method]

    def aggregates(self) -> list[Aggregate]:
        out = []
        for t in self.tasks():
            for m in self.methods():
                cells = self.select(t, m)
                if not cells:
                    continue
                vals = np.array([c.improvement for c in cells if c.ok])
                mean = float(vals.mean()) if len(vals) else math.nan
                std = float(vals.std()) if len(vals) else math.nan
                out.append(Aggregate(t, m, len(vals), len(cells) - len(vals), mean, std))
        return out

    def aggregate(self, task: str, method: str) -> Aggregate:
        for a in self.aggregates():
            if a.task == task and a.method == method:
                return a
        raise KeyError((task, method))


def _fmt(x: float) -> str:
    return "" if isinstance(x, float) and math.isnan(x) else repr(float(x))


def trace_name(c: Cell) -> str:
    safe = lambda s: "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in s)
    return f"{safe(c.task)}__{safe(c.method)}__seed{c.seed}.csv"


def write_csv(report: BenchReport, path, include_wall_time: bool = False) -> Path:
    """One row per cell, then one aggregate row per (task, method).  Floats use repr so they round-trip."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CELL_FIELDS)
        for c in report.cells:
            w.writerow(["cell", c.task, c.method, c.seed, c.status, _fmt(c.improvement), _fmt(c.c_best),
                        _fmt(c.d0), c.evaluations, _fmt(c.wall_time) if include_wall_time else "", "", "", "",
                        c.error])
        for a in report.aggregates():
            status = "ok" if a.failed == 0 else f"{a.failed} failed"
            w.writerow(["aggregate", a.task, a.method, "", status, "", "", "", "", "", a.n, _fmt(a.mean),
                        _fmt(a.std), ""])
    return path


def read_csv(path) -> BenchReport:
    """Rebuild the cells of a report CSV (traces and omitted wall times come back empty / NaN)."""
    num = lambda s: float(s) if s != "" else math.nan
    cells = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["kind"] != "cell":
                continue
            cells.append(Cell(row["task"], row["method"], int(row["seed"]), row["status"], num(row["improvement"]),
                              num(row["c_best"]), num(row["d0"]), int(row["evaluations"]), num(row["wall_time"]),
                              [], row["error"]))
    return BenchReport(cells)


def write_markdown(report: BenchReport, path) -> Path:
    """Rows are tasks, columns are methods; entries are mean ± std over seeds."""
    methods = report.methods()
    lines = ["| task | " + " | ".join(methods) + " |", "|---" * (len(methods) + 1) + "|"]
    aggs = {(a.task, a.method): a for a in report.aggregates()}
    for t in report.tasks():
        row = []
        for m in methods:
            a = aggs.get((t, m))
            if a is None:
                row.append("n/a")
            elif a.n == 0:
                row.append("failed")
            else:
                row.append(f"{a.mean:.3f} ± {a.std:.3f}" + (f" ({a.failed} failed)" if a.failed else ""))
        lines.append(f"| {t} | " + " | ".join(row) + " |")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return Path(path)


def write_traces(report: BenchReport, directory) -> list[Path]:
    """One CSV per successful cell: ``iteration, cost, improvement`` (one row per trace point)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for c in report.cells:
        if not c.ok:
            continue
        p = directory / trace_name(c)
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "cost", "improvement"])
            for k, cost in enumerate(c.trace):
                w.writerow([k, repr(float(cost)), repr(max(0.0, (c.d0 - cost) / c.d0))])
        paths.append(p)
    return paths


def read_trace(path) -> np.ndarray:
    """(rows, 3) array of iteration, cost, improvement."""
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def emit_report(report: BenchReport, out_dir, formats=("csv", "md", "traces"),
                include_wall_time: bool = False) -> dict[str, Path | list[Path]]:
    """Write ``report.csv``, ``report.md`` and ``traces/*.csv`` under ``out_dir``.

    Wall times are left out unless asked for, so the files are a pure
    function of seeds and checkpoints.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create report directory {out}: {exc}") from exc
    unknown = set(formats) - {"csv", "md", "traces"}
    if unknown:
        raise ValueError(f"unknown report formats {sorted(unknown)}")
    written: dict[str, Path | list[Path]] = {}
    if "csv" in formats:
        written["csv"] = write_csv(report, out / "report.csv", include_wall_time)
    if "md" in formats:
        written["md"] = write_markdown(report, out / "report.md")
    if "traces" in formats:
        written["traces"] = write_traces(report, out / "traces")
    return written

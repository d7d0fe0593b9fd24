"""Summarise a finished benchmark: the table plus how fast each method improves.

    python demos/inspect_report.py [RUN_DIR]

``RUN_DIR`` is a pipeline output directory (default ``.acceptance-run``).
"""

import sys
from pathlib import Path

import numpy as np

from skillopt.bench import read_csv, read_trace, trace_name


def main(run_dir: Path) -> None:
    rep_dir = run_dir / "report"
    print((rep_dir / "report.md").read_text())
    rep = read_csv(rep_dir / "report.csv")
    for task in rep.tasks():
        for method in rep.methods():
            cells = [c for c in rep.select(task, method) if c.ok]
            if not cells:
                continue
            curves = [read_trace(rep_dir / "traces" / trace_name(c))[:, 2] for c in cells]
            n = min(len(c) for c in curves)
            mean = np.mean([c[:n] for c in curves], axis=0)
            marks = [mean[min(n - 1, int(f * n))] for f in (0.1, 0.33, 0.66)] + [mean[-1]]
            print(f"{task:16s} {method:14s} improvement at 10/33/66/100% of iterations: "
                  + " ".join(f"{v:.3f}" for v in marks))


if __name__ == "__main__":
    main(Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parents[1] / ".acceptance-run")

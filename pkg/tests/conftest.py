import os
import textwrap
from pathlib import Path

import pytest

TINY_CONFIG = textwrap.dedent("""\
    seed: 0
    play: {episodes: 6}
    vae_net: {latent_dim: 4, hidden: 8, layers: 1}
    vae_train: {steps: 5, batch: 4, eval_every: 5, heldout: 8}
    denoiser: {width: 8, layers: 1, heads: 2, mlp_ratio: 2}
    ldm_train: {steps: 5, batch: 4, N: 4, eval_every: 5}
    methods:
      d-cubed: {B: 2}
      no-skill: {B: 2}
      mppi: {population: 4, horizon: 10, execute: 50, budget: 20}
      diffusion-es: {population: 4, elites: 2, budget: 8}
      skill-mppi: {population: 4, budget: 8}
      classifier: {max_coords: 2, budget: 8}
    bench:
      seeds: 2
      runs:
        - {tasks: [fold-line], methods: [d-cubed, mppi]}
        - {tasks: [fold-line], methods: [no-skill]}
    """)


@pytest.fixture
def tiny_config(tmp_path):
    p = tmp_path / "tiny.yaml"
    p.write_text(TINY_CONFIG)
    return p


# --------------------------------------------------------------------------
# acceptance suite support

ACCEPTANCE: dict[int, str] = {}
N_CRITERIA = 10


@pytest.fixture(scope="session")
def default_pipeline():
    """The default pipeline, cached across sessions in ``$SKILLOPT_ACCEPTANCE_DIR``."""
    from skillopt.bench import run_pipeline
    from skillopt.config import load_config

    out = Path(os.environ.get("SKILLOPT_ACCEPTANCE_DIR", Path(__file__).resolve().parents[1] / ".acceptance-run"))
    return run_pipeline(load_config(None), out)


def record(n: int, ok: bool, detail: str) -> None:
    """Log one criterion line and fail the calling test when it did not pass."""
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[n] = line
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, N_CRITERIA + 1):
        terminalreporter.write_line(ACCEPTANCE.get(n, f"criterion {n:2d}: FAIL  (not evaluated or errored)"))

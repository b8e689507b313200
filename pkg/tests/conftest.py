from pathlib import Path

import numpy as np
import pytest

from circmode import CircularSample
from circmode.models import get_model


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def draw(model, n, seed):
    """A reproducible sample from a built-in model."""
    return get_model(model).sample(n, np.random.default_rng(seed))


def two_clusters(n=60, seed=0, centers=(1.0, 4.0), kappa=20.0):
    r = np.random.default_rng(seed)
    half = n // 2
    x = np.concatenate([r.vonmises(centers[0], kappa, half),
                        r.vonmises(centers[1], kappa, n - half)])
    return CircularSample(x)


FIXTURE_DIR = Path(__file__).resolve().parents[1] / "fixtures" / "planted"


@pytest.fixture(scope="session")
def bundled_run(tmp_path_factory):
    """The bundled planted-patch fixture run once with its own config."""
    from circmode.pipeline import PipelineConfig, run_pipeline

    out = tmp_path_factory.mktemp("bundled") / "w1"
    cfg = PipelineConfig.from_file(FIXTURE_DIR / "config.json", output=str(out), workers=1)
    return cfg, run_pipeline(cfg), out


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

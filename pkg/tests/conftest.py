from importlib import resources
from pathlib import Path

import numpy as np
import pytest

from fedaq.datasets import synth_generate
from fedaq.engine import FLConfig, TrainSettings
from fedaq.models import ModelSpec


@pytest.fixture(scope="session")
def config_dir() -> Path:
    return Path(str(resources.files("fedaq") / "configs"))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def small_fl_config(policy, *, n=4, K=3, tau=2, eta=0.1, batch_size=8, momentum=0.0,
                    seed=3, kind="logistic", samples=80, F=3, C=2):
    train = synth_generate(samples, F, C, 1.0, seed=11)
    test = synth_generate(40, F, C, 1.0, seed=12)
    spec = ModelSpec(kind, F, C, 5 if kind == "mlp" else 0)
    settings = TrainSettings(tau=tau, eta=eta, batch_size=batch_size, momentum=momentum, run_seed=seed)
    return FLConfig(spec, train, test, n, K, settings, policy)


# one line per acceptance criterion, filled in by tests/test_acceptance.py
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])

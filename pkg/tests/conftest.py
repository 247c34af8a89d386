import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from basinprobe.data import mnist_bundle

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

DATA_DIR = Path(os.environ.get("BASINPROBE_DATA_DIR", Path(__file__).resolve().parents[1] / "data" / "mnist5k"))


@pytest.fixture(scope="session")
def data_dir():
    if not (DATA_DIR / "train-images-idx3-ubyte.gz").exists() and not (DATA_DIR / "train-images-idx3-ubyte").exists():
        pytest.skip(f"MNIST subset not found under {DATA_DIR}")
    return DATA_DIR


@pytest.fixture(scope="session")
def bundle(data_dir):
    return mnist_bundle(data_dir, 512, pool=4)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])

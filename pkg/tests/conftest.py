import os
from pathlib import Path

import numpy as np
import pytest

from unlearnkit.data import synth_blobs
from unlearnkit.nn import build_model, init_random

FIXTURES = Path(__file__).parent / "fixtures"
MNIST_FIXTURE = FIXTURES / "mnist5k"


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_net():
    """Scaled-down reference architecture: 2 conv channels per block, 4x4 input."""
    return init_random(build_model((1, 4, 4), 3, channels=(2, 2)), 7)


@pytest.fixture(scope="session")
def blobs_small():
    return synth_blobs(4, 10, 8, seed=3)


def full_mnist_root():
    root = os.environ.get("UNLEARN_DATA_DIR")
    if root and (Path(root) / "train-images-idx3-ubyte").exists() or (
        root and (Path(root) / "train-images-idx3-ubyte.gz").exists()
    ):
        return Path(root)
    return None


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])

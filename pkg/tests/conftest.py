import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gaitlab.mocap import GaitSample  # noqa: E402
from gaitlab.skeleton import N_JOINTS  # noqa: E402
from gaitlab.synth import synthesize_dataset  # noqa: E402

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def small_dataset():
    return synthesize_dataset(6, 5, seed=3)


@pytest.fixture(scope="session")
def walker(small_dataset):
    return small_dataset.samples[0]


def make_sample(label="a", n_frames=4, root_path=None, seed=0):
    """Random joints around a root moving along ``root_path`` (default: +x)."""
    rng = np.random.default_rng(seed)
    frames = rng.normal(scale=0.3, size=(n_frames, N_JOINTS, 3))
    if root_path is None:
        root_path = np.stack([np.linspace(0, 1, n_frames), np.ones(n_frames),
                              0.1 * np.sin(np.arange(n_frames))], axis=1)
    frames += root_path[:, None, :]
    frames[:, 0] = root_path
    return GaitSample(label, frames)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

import numpy as np
import pytest

from techzsky.imagecore import GrayImage, RgbImage
from techzsky.synth import synth_generate


def pytest_addoption(parser):
    parser.addoption(
        "--runslow", action="store_true", default=False, help="run desk-scale acceptance runs"
    )


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: desk-scale end-to-end run, needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def horizontal_ramp(height: int, width: int) -> np.ndarray:
    """I(row, col) = col / (width - 1)."""
    return np.tile(np.linspace(0.0, 1.0, width), (height, 1))


def gray_rgb(plane: np.ndarray) -> RgbImage:
    return RgbImage(np.repeat(np.asarray(plane, dtype=np.float64)[:, :, None], 3, axis=2))


def step_scene(height: int, width: int, rows) -> RgbImage:
    """Bright sky above `rows[col]`, dark ground from it downwards."""
    grid = np.arange(height)[:, None]
    plane = np.where(grid < np.asarray(rows)[None, :], 0.9, 0.2)
    return gray_rgb(plane)


@pytest.fixture
def ramp_gray():
    return GrayImage(horizontal_ramp(12, 12))


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """Six 64x64 synthetic scenes: four in train/, two in test/."""
    root = tmp_path_factory.mktemp("tiny")
    synth_generate(6, 64, 64, seed=3, out_dir=root, split=4)
    return root

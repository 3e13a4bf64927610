import numpy as np
import pytest

from landseg.dataset import generate_synthetic_area
from landseg.taxonomy import default_taxonomy

PALETTE = (112, 211, 223, 242, 312, 323, 333, 411, 521)


@pytest.fixture(scope="session")
def taxonomy():
    return default_taxonomy()


@pytest.fixture(scope="session")
def small_areas():
    """Four 128×128 synthetic areas drawn from a small class palette."""
    return {f"s{i}": generate_synthetic_area(f"s{i}", 128, 128, seed=40 + i, classes=PALETTE) for i in range(4)}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

# tests/conftest.py

import numpy as np
import pytest

from app.schemas.model import EndmemberMatrix
from app.services.spectra import reference_library


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def reference() -> EndmemberMatrix:
    return reference_library()


@pytest.fixture
def blocky() -> EndmemberMatrix:
    """Well-conditioned 20 x 3 matrix: each column dominates its own 5 bands."""
    gen = np.random.default_rng(7)
    data = gen.uniform(0.0, 0.2, size=(20, 3))
    for r in range(3):
        data[5 * r:5 * (r + 1), r] += 1.0
    return EndmemberMatrix(data)

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from demopt.dct import BasisCache


@pytest.fixture(scope="session")
def cache():
    return BasisCache()


@pytest.fixture
def rng():
    return np.random.default_rng(0)

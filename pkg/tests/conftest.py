import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ppbkws.lattice import PhoneSet


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


@pytest.fixture
def abc_phones():
    return PhoneSet(("SIL", "a", "b", "c"), 0)

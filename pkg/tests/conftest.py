import sys
import warnings
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from chiller.models import make_baths  # noqa: E402
from oracles import GAMMA, T_C, T_H, T_W  # noqa: E402


@pytest.fixture
def baths():
    return make_baths(T_W, T_H, T_C, GAMMA)


@pytest.fixture(autouse=True)
def _quiet_coupling_warnings():
    # large-g models warn by design; tests that care use pytest.warns
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="g=.*not small")
        yield

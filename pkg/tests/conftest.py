import sys

import numpy as np
import pytest

from instances import make_spec
from trilat.model import Mode


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def ref_spec():
    """Stations (0,0), (4,0), z0 = 0 and L = (5, 13): exact minima (1, +-2)."""
    return make_spec([(0, 0, 0), (4, 0, 0)], [5.0, 13.0], Mode.PLANAR2, 0.0)


@pytest.fixture
def sym_spec():
    """Stations (-1,0), (1,0), L = (2, 2): d = f = 0 in the user frame."""
    return make_spec([(-1, 0, 0), (1, 0, 0)], [2.0, 2.0], Mode.PLANAR2, 0.0)


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    results = getattr(acceptance, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(results):
        ok, detail = results[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")

import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from macsp.macchannel import Mac

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE_RESULTS = {}


def adder_mac() -> Mac:
    W = np.zeros((2, 2, 3))
    for x in range(2):
        for y in range(2):
            W[x, y, x + y] = 1.0
    return Mac((0, 1), (0, 1), (0, 1, 2), W)


def useless_mac(nz=2) -> Mac:
    W = np.full((2, 2, nz), 1.0 / nz)
    return Mac((0, 1), (0, 1), tuple(range(nz)), W)


def random_mac(rng, nx=2, ny=2, nz=2, alpha=1.0) -> Mac:
    W = rng.dirichlet(np.full(nz, alpha), size=(nx, ny))
    return Mac(tuple(range(nx)), tuple(range(ny)), tuple(range(nz)), W)


@pytest.fixture
def adder():
    return adder_mac()


@pytest.fixture
def useless():
    return useless_mac()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[k]
        terminalreporter.write_line(f"ACCEPTANCE {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")

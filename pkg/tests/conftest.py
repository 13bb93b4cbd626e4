import numpy as np
import pytest

from cae.numerics import make_rng
from cae.verify import random_net

_CRITERIA: dict = {}


@pytest.fixture
def rng():
    return make_rng(12345)


@pytest.fixture
def net(rng):
    return random_net(rng, 6, 4)


@pytest.fixture
def criterion():
    """Record a one-line pass/fail verdict for an acceptance criterion."""
    def record(number, passed, detail=""):
        _CRITERIA[number] = (bool(passed), detail)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        passed, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")


def assert_close(a, b, rtol=0.0, atol=0.0):
    np.testing.assert_allclose(a, b, rtol=rtol, atol=atol)

import numpy as np
import pytest

from wdstfuse.features import random_network


@pytest.fixture(scope="session")
def small_net():
    """The reduced seeded random feature network used throughout the tests."""
    return random_network(0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def smooth_plane(rng, shape, sigma=2.0):
    from scipy.ndimage import gaussian_filter

    p = gaussian_filter(rng.random(shape), sigma, mode="wrap")
    p -= p.min()
    return p / p.max()


_CRITERIA = {}


@pytest.fixture
def criterion():
    """Record and print one PASS/FAIL line for an acceptance criterion."""

    def record(number, ok, detail):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _CRITERIA[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[number])

import sys

import numpy as np
import pytest

from tiltmax.grid import Grid
from tiltmax.spectral import fbm


@pytest.fixture(params=["numba", "numpy"])
def backend(request, monkeypatch):
    """Run a test under each kernel backend."""
    monkeypatch.setenv("TILTMAX_BACKEND", request.param)
    return request.param


@pytest.fixture
def numpy_backend(monkeypatch):
    monkeypatch.setenv("TILTMAX_BACKEND", "numpy")


@pytest.fixture
def bm():
    return fbm(1.0)


@pytest.fixture
def pair_grid():
    return Grid.from_values([0.0, 1.0])


def hr_prob(gamma: float) -> float:
    """P(zeta(0) <= 0, zeta(t) <= 0) for incremental variance gamma."""
    from scipy.special import ndtr

    return float(np.exp(-2.0 * ndtr(np.sqrt(gamma) / 2.0)))


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance verdict lines after the run."""
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])

import numpy as np
import pytest

from mhd_carleman.fields import CoefficientSet, SourceModel
from mhd_carleman.geometry import build_box_domain
from mhd_carleman.verification import reference_coefficients

CRITERIA_LINES = []


@pytest.fixture
def dom8():
    return build_box_domain((1.0, 1.0, 1.0), (8, 8, 8), 1.0, 32)


@pytest.fixture
def toy():
    """4^3 cells, 4 steps: small enough for brute-force loops."""
    return build_box_domain((1.0, 1.0, 1.0), (4, 4, 4), 1.0, 4)


@pytest.fixture(scope="session")
def coeffs():
    return reference_coefficients()


@pytest.fixture
def heat_coeffs():
    return CoefficientSet(nu=1.0, kappa=1.0)


@pytest.fixture
def source():
    return SourceModel(t0=0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA_LINES:
            terminalreporter.write_line(line)

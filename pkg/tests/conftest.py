import numpy as np
import pytest

from gorient.sampler import make_rng
from gorient.symgroup import build_cubic_group, build_sign_group, build_trivial_group


@pytest.fixture(scope="session")
def cubic():
    return build_cubic_group()


@pytest.fixture(scope="session")
def sign():
    return build_sign_group()


@pytest.fixture(scope="session")
def trivial():
    return build_trivial_group()


@pytest.fixture
def rng():
    return make_rng(20240611)


def random_unit(rng, n=None):
    z = rng.standard_normal(4 if n is None else (n, 4))
    return z / np.linalg.norm(z, axis=-1, keepdims=True)


# one line per acceptance criterion, printed again at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def orbit_gap(a, b, g):
    """Chordal distance from ``a`` to the nearest image of ``b``; unlike arccos it resolves gaps below 1e-8."""
    from gorient.symgroup import group_orbit
    return float(np.linalg.norm(group_orbit(np.asarray(b, float), g) - a, axis=-1).min())

import numpy as np
import pytest
from hypothesis import settings

from vdwe.thermo import derive_constants

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def make_gas(gamma0, b, c_v=1.0):
    return derive_constants(b, (gamma0 - 1.0) * c_v, c_v)


@pytest.fixture
def gas3():
    """gamma0 = 3, b = 0.5: the reference gas (nu = 2)."""
    return derive_constants(0.5, 1.0, 0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance(request):
    """Collects ``(criterion, passed, detail)`` rows for the terminal summary."""
    return request.config.stash.setdefault(ACCEPTANCE, [])


def pytest_terminal_summary(terminalreporter, config):
    rows = config.stash.get(ACCEPTANCE, [])
    if not rows:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n, ok, detail in sorted(rows, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")

import numpy as np
import pytest

from gscsim import apply_load_step, find_equilibrium, load_bundled, simulate
from gscsim.tds import initialize


@pytest.fixture(scope="session")
def wscc():
    return load_bundled("wscc9_vsm")


@pytest.fixture(scope="session")
def wscc_init(wscc):
    return initialize(wscc)


@pytest.fixture(scope="session")
def wscc_step(wscc):
    return apply_load_step(wscc, 5, 0.5, 0.5, 1.0)


@pytest.fixture(scope="session")
def wscc_traj(wscc, wscc_init, wscc_step):
    model, w0, _ = wscc_init
    return simulate(wscc, event=wscc_step, init=(model, w0))


@pytest.fixture(scope="session")
def wscc_eq(wscc, wscc_init, wscc_step):
    model, w0, _ = wscc_init
    return find_equilibrium(wscc, event=wscc_step, init=(model, w0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":ab"))):
            terminalreporter.write_line(line)

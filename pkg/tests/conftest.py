import numpy as np
import pytest

from hsliouville.distribution import BumpDatum, make_chaotic_datum
from hsliouville.verify import head_on_datum


@pytest.fixture(scope="session")
def phi0():
    return head_on_datum()


@pytest.fixture(scope="session")
def F0(phi0):
    return make_chaotic_datum(phi0)


@pytest.fixture(scope="session")
def contact_datum():
    """Bump straddling the boundary with velocities of both signs, so all cone regions carry mass."""
    return BumpDatum([-0.6, 0, 0, 0.6, 0, 0, 0, 0, 0, 0, 0, 0], 0.5, 0.8)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = next((m for n, m in list(sys.modules.items()) if n.rsplit(".", 1)[-1] == "test_acceptance"), None)
    if mod is not None and mod.LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)

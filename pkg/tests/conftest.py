import numpy as np
import pytest

from residue_vfl import paillier
from residue_vfl.numeric import RngStream


@pytest.fixture(scope="session")
def key512():
    return paillier.keygen(512, RngStream(1234))


@pytest.fixture(scope="session")
def toy_key():
    return paillier.keypair_from_primes(11, 13)


@pytest.fixture
def rng():
    return RngStream(7)


@pytest.fixture
def np_rng():
    return np.random.default_rng(0)


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def criterion(request):
    """Callable ``(number, title, ok, detail)`` that logs one acceptance line."""
    lines = request.config.stash[_ACCEPTANCE]

    def record(number, title, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} ({detail})"
        lines.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)

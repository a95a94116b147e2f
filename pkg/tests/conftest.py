from __future__ import annotations

import random

import pytest

from aerisai import cpabe, paillier
from aerisai.pairing import default_group

# acceptance lines collected by test_acceptance and echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def keys_c():
    return paillier.paillier_setup(1024, random.Random(1001))


@pytest.fixture(scope="session")
def keys_o():
    return paillier.paillier_setup(1024, random.Random(2002))


@pytest.fixture(scope="session")
def toy_keys():
    return paillier.keypair_from_primes(5, 7)


@pytest.fixture(scope="session")
def group():
    return default_group()


@pytest.fixture(scope="session")
def abe():
    """(public params, master key) for the default curve."""
    return cpabe.cpabe_setup(random.Random(77))


@pytest.fixture
def rng():
    return random.Random(12345)

import random

import pytest

from ppls import paillier
from ppls.asym import asym_keygen

# criterion number -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}")


@pytest.fixture
def rng():
    return random.Random(1234)


@pytest.fixture(scope="session")
def tiny_paillier():
    """The p=11, q=13 key (n=143) with g = n+1."""
    return paillier.keypair_from_primes(11, 13)


@pytest.fixture(scope="session")
def paillier_256():
    return paillier.keygen(256, random.Random(256))


@pytest.fixture(scope="session")
def paillier_512():
    return paillier.keygen(512, random.Random(512))


@pytest.fixture(scope="session")
def rsa_a():
    return asym_keygen(512, random.Random("rsa-a"))


@pytest.fixture(scope="session")
def rsa_b():
    return asym_keygen(512, random.Random("rsa-b"))

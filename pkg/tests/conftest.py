import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hyperdecode import codes
from hyperdecode.hypergraph import Hypergraph

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def code13():
    return codes.hgp_construct(codes.bundled("rep3"), codes.bundled("rep3"))


@pytest.fixture(scope="session")
def code129():
    return codes.hgp_construct(codes.bundled("hamming7"), codes.bundled("bch15"))


@pytest.fixture(scope="session")
def graph13(code13):
    return Hypergraph.from_css(code13)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import acceptance_support
    if acceptance_support.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_support.RESULTS:
            terminalreporter.write_line(line)

import numpy as np
import pytest

from hyperdiff.lattice import LatticeGeometry, assemble_hamiltonian, harper_potential, zero_potential


@pytest.fixture
def small_harper():
    geo = LatticeGeometry(6, 8)
    H = assemble_hamiltonian(geo, harper_potential(6, 1.5))
    return geo, H


@pytest.fixture
def free_chain():
    def make(lead):
        geo = LatticeGeometry(0, lead)
        return geo, assemble_hamiltonian(geo, zero_potential(0))
    return make


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import REPORT
    except ImportError:
        return
    if REPORT:
        terminalreporter.section("acceptance criteria")
        for line in REPORT:
            terminalreporter.write_line(line)

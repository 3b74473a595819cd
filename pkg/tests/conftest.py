import numpy as np
import pytest

from mfcsim.design import path_hb
from mfcsim.states import SystemModel


def rand_state(rng, n, rank=None):
    rank = rank or n
    g = rng.normal(size=(n, rank)) + 1j * rng.normal(size=(n, rank))
    r = g @ g.conj().T
    return r / np.trace(r).real


def rand_herm(rng, n):
    g = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return (g + g.conj().T) / 2


def rand_op(rng, n):
    return rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def qubit_model():
    return SystemModel(np.diag([0.0, 1.0]), path_hb(2, [1.0]), np.diag([1.0, -1.0]))


@pytest.fixture
def sigmax_model():
    return SystemModel(np.diag([0.0, 1.0]), path_hb(2, [1.0]), np.array([[0, 1], [1, 0]]), eta=0.5)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)

import numpy as np
import pytest

from shadowbench import linops, quench


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def _pure(psi):
    psi = np.asarray(psi, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    return np.outer(psi, psi.conj())


@pytest.fixture
def bell_state():
    psi = np.zeros(4)
    psi[0] = psi[3] = 1.0
    return _pure(psi)


@pytest.fixture
def ghz4_state():
    psi = np.zeros(16)
    psi[0] = psi[15] = 1.0
    return _pure(psi)


@pytest.fixture
def three_qubit_state():
    """|psi> = a|100> + b|010> + c|001> at the worked parameter point."""
    a, b, c = np.sqrt(5 / 12), 0.5, 1 / np.sqrt(3)
    psi = np.zeros(8, dtype=complex)
    psi[0b100] = a
    psi[0b010] = b
    psi[0b001] = c
    return _pure(psi)


@pytest.fixture
def three_qubit_rho_ab(three_qubit_state):
    reg = linops.QubitRegister(3, {"A": (0,), "B": (1,), "C": (2,)})
    return linops.partial_trace(three_qubit_state, reg, {"A", "B"})


def random_symmetric_state(n_a, n_b, rng, charge_diag):
    """Random mixed state commuting with a diagonal additive charge.

    Pinching a random density matrix to the charge's eigenblocks keeps it
    PSD and unit trace, and enforces the commutation exactly.
    """
    rho = linops.random_density_matrix(n_a + n_b, rng)
    q = np.asarray(charge_diag)
    mask = q[:, None] == q[None, :]
    rho = rho * mask
    return rho / np.trace(rho).real


def ghz_quench_state(n):
    psi = np.zeros(2**n)
    psi[0] = psi[-1] = 1.0
    return quench.QuenchState(_pure(psi))

"""Exact small-register quench dynamics and randomized-measurement sampling.

Ion-chain style long-range model with open boundaries,

    H = sum_{i<j} J0/|i-j|^p  sx_i sx_j  +  B sum_i sz_i ,

evolved by exact Hermitian diagonalization (dense, <= 12 qubits), plus the
magnetization-conserving flip-flop part alone for reference dynamics, a
one-shot depolarizing channel, and Born-rule bitstring sampling under
per-qubit rotations.  Times are in units of 1/J0 with hbar = 1.

Randomness contract: every sampling stream is keyed by (seed, unitary
index), so records are reproducible and independent of evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .linops import QubitRegister, kron, partial_trace

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
ID2 = np.eye(2, dtype=complex)

MAX_QUBITS = 12


@dataclass(frozen=True)
class HamiltonianSpec:
    """Long-range ion-chain couplings J_ij = j0 / |i-j|^alpha_pow, field b."""

    n_qubits: int
    j0: float = 1.0
    alpha_pow: float = 1.24
    field_b: float = 22.0

    def __post_init__(self):
        if self.alpha_pow <= 0:
            raise ValueError("alpha_pow must be positive")
        if self.n_qubits > MAX_QUBITS:
            raise ValueError(f"dense evolution capped at {MAX_QUBITS} qubits")

    def coupling_matrix(self) -> np.ndarray:
        n = self.n_qubits
        j = np.zeros((n, n))
        for i in range(n):
            for k in range(i + 1, n):
                j[i, k] = j[k, i] = self.j0 / abs(i - k) ** self.alpha_pow
        return j


def _site_op(op: np.ndarray, site: int, n: int) -> np.ndarray:
    return kron(*[op if k == site else ID2 for k in range(n)])


def hamiltonian_matrix(spec: HamiltonianSpec) -> np.ndarray:
    """Full dense Hamiltonian: sx-sx couplings plus transverse field."""
    n = spec.n_qubits
    j = spec.coupling_matrix()
    h = np.zeros((2**n, 2**n), dtype=complex)
    for i in range(n):
        for k in range(i + 1, n):
            h += j[i, k] * _site_op(SX, i, n) @ _site_op(SX, k, n)
    for i in range(n):
        h += spec.j0 * spec.field_b * _site_op(SZ, i, n)
    return h


def flipflop_hamiltonian_matrix(spec: HamiltonianSpec) -> np.ndarray:
    """Magnetization-conserving part only: sum J_ij (s+_i s-_j + h.c.)."""
    n = spec.n_qubits
    j = spec.coupling_matrix()
    sp = np.array([[0, 1], [0, 0]], dtype=complex)
    sm = sp.T.conj()
    h = np.zeros((2**n, 2**n), dtype=complex)
    for i in range(n):
        for k in range(i + 1, n):
            h += j[i, k] * (
                _site_op(sp, i, n) @ _site_op(sm, k, n)
                + _site_op(sm, i, n) @ _site_op(sp, k, n)
            )
    return h


@dataclass
class QuenchState:
    """Density matrix with its evolution time (units of 1/j0)."""

    rho: np.ndarray
    time: float = 0.0

    @property
    def n_qubits(self) -> int:
        return int(np.log2(self.rho.shape[0]))

    def check(self, atol: float = 1e-9) -> None:
        rho = self.rho
        if not np.allclose(rho, rho.conj().T, atol=atol):
            raise ValueError("state is not Hermitian")
        if abs(np.trace(rho).real - 1.0) > atol:
            raise ValueError("state is not unit trace")
        if np.linalg.eigvalsh(rho).min() < -atol:
            raise ValueError("state is not positive semidefinite")


def neel_state(n_qubits: int) -> QuenchState:
    """Pure alternating product state with bitstring 0101... (qubit 0 = 0)."""
    bits = "".join("01"[k % 2] for k in range(n_qubits))
    psi = np.zeros(2**n_qubits, dtype=complex)
    psi[int(bits, 2)] = 1.0
    return QuenchState(np.outer(psi, psi.conj()), 0.0)


def mixed_product_state(one_probs) -> QuenchState:
    """Product state with per-qubit probability ``p_i`` of bit 1.

    A slightly imperfect alternating initial state is
    ``mixed_product_state([0.005, 0.996, 0.005, ...])``.
    """
    facs = [np.diag([1 - p, p]).astype(complex) for p in one_probs]
    return QuenchState(kron(*facs), 0.0)


class _EigCache:
    def __init__(self):
        self._data: dict[tuple, tuple[np.ndarray, np.ndarray]] = {}

    def get(self, spec: HamiltonianSpec, conserving: bool):
        key = (spec, conserving)
        if key not in self._data:
            h = flipflop_hamiltonian_matrix(spec) if conserving else hamiltonian_matrix(spec)
            self._data[key] = np.linalg.eigh(h)
        return self._data[key]


_EIGS = _EigCache()


def evolve(
    spec: HamiltonianSpec, state: QuenchState, t: float, conserving_only: bool = False
) -> QuenchState:
    """Evolve ``state`` forward by ``t`` under the (cached) exact propagator.

    ``conserving_only`` switches to the flip-flop Hamiltonian, useful to
    quantify how strongly the transverse field suppresses
    magnetization-breaking terms.
    """
    vals, vecs = _EIGS.get(spec, conserving_only)
    phases = np.exp(-1j * vals * t)
    u = (vecs * phases[None, :]) @ vecs.conj().T
    return QuenchState(u @ state.rho @ u.conj().T, state.time + t)


def apply_depolarizing(state: QuenchState, p_dp: float) -> QuenchState:
    """Single application of local depolarizing noise on every qubit.

    rho -> (1 - p N) rho + p sum_i Tr_i[rho] x I_i/2, valid for p N <= 1.
    """
    n = state.n_qubits
    if p_dp * n > 1 + 1e-12:
        raise ValueError("p_dp * n_qubits must not exceed 1")
    if p_dp == 0:
        return replace(state)
    rho = state.rho
    out = (1 - p_dp * n) * rho
    for i in range(n):
        blocks = {"rest": tuple(q for q in range(n) if q != i), "i": (i,)}
        reg = QubitRegister(n, blocks)
        reduced = partial_trace(rho, reg, "rest")
        t = reduced.reshape((2,) * (2 * (n - 1)))
        # re-insert I/2 at qubit slot i (row axis i, col axis n-1+i of reduced)
        expanded = np.tensordot(t, ID2 / 2, axes=0)  # adds two trailing axes
        order = list(range(2 * (n - 1)))
        order.insert(i, 2 * (n - 1))
        order.insert(n + i, 2 * (n - 1) + 1)
        out += p_dp * expanded.transpose(order).reshape(2**n, 2**n)
    return QuenchState(out, state.time)


PAULI_ROTATIONS = {
    "X": np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2),
    "Y": np.array([[1, -1j], [1, 1j]], dtype=complex) / np.sqrt(2),
    "Z": ID2.copy(),
}
"""Rotation u per basis label, such that measuring u rho u^dag in the z
basis realizes the labeled Pauli measurement; u^dag|s> are the basis kets."""


def record_rng(seed: int, record_index: int) -> np.random.Generator:
    """Counter-based stream for one record: keyed, order independent."""
    return np.random.default_rng([seed, record_index])


def random_local_unitaries(n_qubits: int, rng: np.random.Generator) -> np.ndarray:
    """Stack of n independent 2x2 CUE unitaries (QR of complex Ginibre)."""
    z = rng.standard_normal((n_qubits, 2, 2)) + 1j * rng.standard_normal((n_qubits, 2, 2))
    us = np.empty_like(z)
    for i in range(n_qubits):
        q, r = np.linalg.qr(z[i])
        us[i] = q * (np.diagonal(r) / np.abs(np.diagonal(r)))[None, :]
    return us


def born_probabilities(rho: np.ndarray, unitaries) -> np.ndarray:
    """Outcome distribution over bitstrings after applying ``x u_i``.

    The rotation is applied one qubit at a time on the matrix reshaped as a
    rank-2n tensor, so the cost stays O(n 4^n) instead of the O(8^n) of a
    full tensor-product unitary.
    """
    n = len(unitaries)
    d = 2**n
    t = np.asarray(rho).reshape((2,) * (2 * n))
    for q, u in enumerate(unitaries):
        u = np.asarray(u)
        if not np.allclose(u @ u.conj().T, ID2, atol=1e-10):
            raise ValueError("measurement basis is not unitary")
        t = np.moveaxis(np.tensordot(u, t, axes=([1], [q])), 0, q)
        t = np.moveaxis(np.tensordot(u.conj(), t, axes=([1], [n + q])), 0, n + q)
    p = np.diagonal(t.reshape(d, d)).real
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def sample_bitstring(state: QuenchState, unitaries, rng: np.random.Generator) -> str:
    """One Born-rule z-basis outcome after rotating each qubit by u_i."""
    return sample_bitstrings(state, unitaries, 1, rng)[0]


def sample_bitstrings(state: QuenchState, unitaries, shots: int, rng: np.random.Generator) -> list[str]:
    """``shots`` i.i.d. outcomes for one fixed rotation setting."""
    p = born_probabilities(state.rho, unitaries)
    n = state.n_qubits
    outcomes = rng.choice(p.size, size=shots, p=p)
    return [format(int(s), f"0{n}b") for s in outcomes]

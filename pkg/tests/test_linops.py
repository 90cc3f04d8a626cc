import numpy as np
import pytest

from shadowbench import linops as L

SZ = np.diag([1.0, -1.0])


def test_kron_identity():
    assert np.array_equal(L.kron(np.eye(2), np.eye(2)), np.eye(4))


def test_kron_computational_basis():
    p0 = np.diag([1.0, 0.0])
    p1 = np.diag([0.0, 1.0])
    # |0><0| x |1><1| occupies the |01> slot (qubit 0 most significant)
    assert np.array_equal(L.kron(p0, p1), np.diag([0.0, 1.0, 0.0, 0.0]))


def test_kron_pauli_zz():
    assert np.allclose(L.kron(SZ, SZ), np.diag([1.0, -1.0, -1.0, 1.0]))


def test_kron_mixed_product_property(rng):
    a, c = rng.standard_normal((2, 4, 3)) + 1j * rng.standard_normal((2, 4, 3))
    b, d = rng.standard_normal((2, 2, 5)) + 1j * rng.standard_normal((2, 2, 5))
    lhs = L.kron(a, b) @ L.kron(c.conj().T, d.conj().T)
    rhs = L.kron(a @ c.conj().T, b @ d.conj().T)
    assert np.allclose(lhs, rhs, atol=1e-10)


def test_register_validation():
    with pytest.raises(ValueError):
        L.QubitRegister(2, {"A": (0,), "B": (0, 1)})
    with pytest.raises(ValueError):
        L.QubitRegister(3, {"A": (0,), "B": (1,)})  # does not cover qubit 2
    reg = L.bipartite_register(2, 1)
    assert reg.block_dim("A") == 4 and reg.block_dim("B") == 2


class TestPartialTrace:
    def test_product_state(self, rng):
        rho_a = L.random_density_matrix(2, rng)
        rho_b = L.random_density_matrix(1, rng)
        reg = L.bipartite_register(2, 1)
        assert np.allclose(L.partial_trace(L.kron(rho_a, rho_b), reg, "A"), rho_a, atol=1e-12)
        assert np.allclose(L.partial_trace(L.kron(rho_a, rho_b), reg, "B"), rho_b, atol=1e-12)

    def test_bell_marginal(self, bell_state):
        reg = L.bipartite_register(1, 1)
        assert np.allclose(L.partial_trace(bell_state, reg, "A"), np.eye(2) / 2, atol=1e-12)

    def test_trace_preserving_and_positive(self, rng):
        reg = L.QubitRegister(3, {"A": (0, 2), "B": (1,)})
        m = L.random_density_matrix(3, rng)
        red = L.partial_trace(m, reg, "A")
        assert abs(np.trace(red) - np.trace(m)) < 1e-12
        assert np.linalg.eigvalsh(red).min() > -1e-12

    def test_dimension_mismatch(self, rng):
        reg = L.bipartite_register(2, 2)
        with pytest.raises(L.DimensionError):
            L.partial_trace(np.eye(8), reg, "A")


class TestVectorize:
    def test_identity_to_bell(self):
        v = L.vectorize(np.eye(2) / np.sqrt(2))
        assert np.allclose(v, np.array([1, 0, 0, 1]) / np.sqrt(2))

    def test_round_trip(self, rng):
        m = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        assert np.array_equal(L.devectorize(L.vectorize(m), 4, 4), m)

    def test_inner_product_is_trace(self, rng):
        # oracle: direct Tr(a^dag b)
        for _ in range(5):
            a = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
            b = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
            lhs = np.vdot(L.vectorize(a), L.vectorize(b))
            assert abs(lhs - np.trace(a.conj().T @ b)) < 1e-10

    def test_size_mismatch(self):
        with pytest.raises(L.DimensionError):
            L.devectorize(np.zeros(5), 2, 2)


class TestSwapOperator:
    def test_two_copy_swap_gate(self):
        reg = L.QubitRegister(1, {"A": (0,)})
        s = L.swap_operator(reg, 2, [("A", 0, 1)])
        expect = np.eye(4)[[0, 2, 1, 3]]
        assert np.array_equal(s.real, expect)

    def test_purity_contraction(self, rng):
        # oracle: direct Tr(rho^2)
        reg = L.bipartite_register(1, 1)
        rho = L.random_density_matrix(2, rng)
        s = L.swap_operator(reg, 2, [("A", 0, 1), ("B", 0, 1)])
        val = np.trace(s @ np.kron(rho, rho))
        assert abs(val - np.trace(rho @ rho)) < 1e-10

    def test_unitary_hermitian_involutive(self, rng):
        reg = L.bipartite_register(1, 1)
        s = L.swap_operator(reg, 3, [("A", 0, 2), ("B", 1, 2)])
        assert np.allclose(s, s.conj().T, atol=1e-12)
        assert np.allclose(s @ s, np.eye(s.shape[0]), atol=1e-12)

    def test_fourth_moment_identity_single_qubit_blocks(self, rng):
        # oracle: SVD of the realigned matrix
        reg = L.bipartite_register(1, 1)
        rho = L.random_density_matrix(2, rng)
        s1 = L.swap_operator(reg, 4, [("A", 0, 3), ("B", 0, 1)])
        s2 = L.swap_operator(reg, 4, [("A", 1, 2), ("B", 2, 3)])
        rho4 = L.kron(rho, rho, rho, rho)
        lhs = np.trace(s1 @ s2 @ rho4).real
        purity = np.trace(rho @ rho).real
        lam = L.singular_values(L.realign(rho, 2, 2)) / np.sqrt(purity)
        assert abs(lhs / purity**2 - (lam**4).sum()) < 1e-9

    def test_bad_copy_index(self):
        reg = L.QubitRegister(1, {"A": (0,)})
        with pytest.raises(ValueError):
            L.swap_operator(reg, 2, [("A", 0, 2)])
        with pytest.raises(ValueError):
            L.swap_operator(reg, 2, [("A", 0, 1), ("A", 0, 1)])


def test_multicopy_swap_trace_matches_dense(rng):
    reg = L.bipartite_register(1, 1)
    mats = [rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4)) for _ in range(4)]
    s1 = L.swap_operator(reg, 4, [("A", 0, 3), ("B", 0, 1)])
    s2 = L.swap_operator(reg, 4, [("A", 1, 2), ("B", 2, 3)])
    dense = np.trace(s1 @ s2 @ L.kron(*mats))
    fast = L.multicopy_swap_trace(mats, reg, [("A", 0, 3), ("A", 1, 2), ("B", 0, 1), ("B", 2, 3)])
    assert abs(dense - fast) < 1e-9 * max(1.0, abs(dense))


def test_eigh_reconstruction_and_svd_order(rng):
    m = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
    h = (m + m.conj().T) / 2
    vals, vecs = L.eigh_sorted(h)
    assert np.all(np.diff(vals) <= 0)
    assert np.linalg.norm((vecs * vals) @ vecs.conj().T - h) < 1e-10
    sv = L.singular_values(m)
    assert np.all(sv >= 0) and np.all(np.diff(sv) <= 0)


def test_permute_qubits(rng):
    a = L.random_density_matrix(1, rng)
    b = L.random_density_matrix(1, rng)
    c = L.random_density_matrix(1, rng)
    out = L.permute_qubits(L.kron(a, b, c), [2, 0, 1])
    assert np.allclose(out, L.kron(c, a, b), atol=1e-14)


def test_realign_gram_is_super_rdm(rng):
    """R R^dag equals the doubled-space partial trace of |rho><rho|."""
    rho = L.random_density_matrix(2, rng)
    r = L.realign(rho, 2, 2)
    v = L.vectorize(rho)
    outer = np.outer(v, v.conj())
    reg4 = L.QubitRegister(4, {"AA": (0, 2), "BB": (1, 3)})
    direct = L.partial_trace(outer, reg4, "AA")
    assert np.allclose(r @ r.conj().T, direct, atol=1e-12)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rusqnn import dm
from rusqnn.dm import KrausChannel, QuantumState, UnitaryOp
from rusqnn.noise import QubitNoiseParams, idle_channel

X = dm.PAULI_X
Z = dm.PAULI_Z
I2 = np.eye(2)
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


def random_state(n, seed):
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(2**n, 2**n)) + 1j * rng.normal(size=(2**n, 2**n))
    rho = g @ g.conj().T
    return QuantumState(n, rho / np.trace(rho))


def random_unitary(dim, seed):
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


class TestQuantumState:
    def test_zero_state(self):
        s = QuantumState.zero(3)
        assert s.dim == 8
        assert s.matrix[0, 0] == 1
        np.testing.assert_allclose(s.trace, 1.0)

    def test_qubit_zero_is_most_significant(self):
        one = np.diag([0, 1]).astype(complex)
        zero = np.diag([1, 0]).astype(complex)
        s = QuantumState.product([one, zero, zero])
        assert s.matrix[4, 4] == 1

    def test_from_vector(self):
        s = QuantumState.from_vector([1, 1j])
        np.testing.assert_allclose(s.matrix, [[1, -1j], [1j, 1]])

    def test_register_size_bounds(self):
        with pytest.raises(ValueError):
            QuantumState.zero(dm.MAX_QUBITS + 1)
        with pytest.raises(ValueError):
            QuantumState(2, np.eye(2))

    def test_normalized_rejects_empty(self):
        with pytest.raises(ValueError):
            QuantumState(1, np.zeros((2, 2), dtype=complex)).normalized()

    def test_scaled_and_sum(self):
        s = QuantumState.zero(1)
        np.testing.assert_allclose((s.scaled(0.25) + s.scaled(0.5)).trace, 0.75)


class TestOperators:
    def test_unitary_check(self):
        with pytest.raises(ValueError):
            UnitaryOp((0,), np.array([[1, 0], [0, 2]], dtype=complex))

    def test_duplicate_targets(self):
        with pytest.raises(ValueError):
            UnitaryOp((1, 1), np.eye(4))

    def test_dagger(self):
        u = random_unitary(2, 1)
        np.testing.assert_allclose(UnitaryOp((0,), u).dagger().matrix @ u, np.eye(2), atol=1e-12)

    def test_kraus_trace_preservation_check(self):
        with pytest.raises(ValueError):
            KrausChannel((0,), (np.eye(2) * 0.9,))

    def test_superop_matches_row_major_vectorization(self):
        ch = idle_channel(QubitNoiseParams(20.0, 15.0), 3.0)
        rho = random_state(1, 3).matrix
        expected = sum(k @ rho @ k.conj().T for k in ch.operators)
        got = np.einsum("ijkl,kl->ij", ch.superop(), rho)
        np.testing.assert_allclose(got, expected, atol=1e-14)
        # row-major vec(K rho K^dagger) = (K kron K*) vec(rho)
        big = sum(np.kron(k, k.conj()) for k in ch.operators)
        np.testing.assert_allclose(ch.superop().reshape(4, 4), big, atol=1e-14)

    def test_compose_order(self):
        a = KrausChannel((0,), (X,))
        b = KrausChannel((0,), (H,))
        (k,) = a.compose(b).operators
        np.testing.assert_allclose(k, H @ X)


class TestKernels:
    def test_embed_against_kron(self):
        np.testing.assert_allclose(dm.embed(X, (0,), 3), np.kron(X, np.eye(4)))
        np.testing.assert_allclose(dm.embed(X, (2,), 3), np.kron(np.eye(4), X))

    def test_embed_target_order(self):
        cnot = np.eye(4)[[0, 1, 3, 2]].astype(complex)
        # control on qubit 2, target on qubit 0
        full = dm.embed(cnot, (2, 0), 3)
        for idx in range(8):
            q0, q1, q2 = (idx >> 2) & 1, (idx >> 1) & 1, idx & 1
            out = ((q0 ^ q2) << 2) | (q1 << 1) | q2
            assert full[out, idx] == 1

    def test_embed_range_check(self):
        with pytest.raises(IndexError):
            dm.embed(X, (3,), 3)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000), t=st.permutations([0, 1, 2]))
    def test_apply_unitary_matches_dense(self, seed, t):
        s = random_state(3, seed)
        u = random_unitary(4, seed + 1)
        targets = tuple(t[:2])
        out = dm.apply_unitary(s, UnitaryOp(targets, u))
        full = dm.embed(u, targets, 3)
        np.testing.assert_allclose(out.matrix, full @ s.matrix @ full.conj().T, atol=1e-12)

    def test_apply_kraus_matches_dense(self):
        s = random_state(2, 7)
        ch = idle_channel(QubitNoiseParams(10.0, 12.0), 2.0)
        chan = KrausChannel((1,), ch.operators)
        out = dm.apply_kraus(s, chan)
        expected = sum(dm.embed(k, (1,), 2) @ s.matrix @ dm.embed(k, (1,), 2).conj().T for k in ch.operators)
        np.testing.assert_allclose(out.matrix, expected, atol=1e-14)

    def test_channel_local_matches_apply_kraus(self):
        s = random_state(3, 11)
        ch = idle_channel(QubitNoiseParams(5.0, 4.0), 1.0)
        got = dm._channel_local(s.matrix, ch.superop(), 1, 3)
        expected = dm.apply_kraus(s, KrausChannel((1,), ch.operators)).matrix
        np.testing.assert_allclose(got, expected, atol=1e-14)

    def test_stack_unitary(self):
        rng = np.random.default_rng(0)
        stack = rng.normal(size=(4, 5, 4)) + 1j * rng.normal(size=(4, 5, 4))
        u = random_unitary(4, 2)
        out = dm._stack_unitary(stack, u)
        for b in range(5):
            np.testing.assert_allclose(out[:, b, :], u @ stack[:, b, :] @ u.conj().T, atol=1e-12)

    @settings(max_examples=20, deadline=None)
    @given(t1=st.floats(1.0, 100.0), ratio=st.floats(0.1, 2.0), dur=st.floats(0.01, 10.0),
           seed=st.integers(0, 1000))
    def test_stack_channels_fold_matches_sequential(self, t1, ratio, dur, seed):
        n = 3
        rng = np.random.default_rng(seed)
        stack = rng.normal(size=(8, 6, 8)) + 1j * rng.normal(size=(8, 6, 8))
        damp = idle_channel(QubitNoiseParams(t1, t1 * ratio), dur).superop()
        # depolarizing is not of damping form and takes the generic path
        p = 0.1
        depol = dm.superop_from_kraus([np.sqrt(1 - 3 * p / 4) * I2] + [np.sqrt(p / 4) * m
                                                                      for m in (X, dm.PAULI_Y, Z)])
        chans = [(0, damp), (1, depol), (2, damp)]
        folded = dm._stack_channels(stack, chans, n)
        seq = stack
        for q, sop in chans:
            seq = dm._stack_channel(seq, sop, q, n)
        np.testing.assert_allclose(folded, seq, atol=1e-12)

    def test_damping_form_detection(self):
        assert dm._is_damping_form(idle_channel(QubitNoiseParams(3.0, 2.0), 1.0).superop())
        assert not dm._is_damping_form(dm.superop_from_kraus([X]))


class TestMeasurementAndTrace:
    def test_measure_split_probabilities(self):
        psi = np.array([np.sqrt(0.2), 0, 0, np.sqrt(0.8)], dtype=complex)
        split = dm.measure_split(QuantumState.from_vector(psi), 0)
        np.testing.assert_allclose([split.p0, split.p1], [0.2, 0.8])
        np.testing.assert_allclose(split.outcome1.matrix[3, 3], 0.8)

    def test_projectors(self):
        m0, m1 = dm.projectors(1, 2)
        np.testing.assert_array_equal(m1, [False, True, False, True])
        np.testing.assert_array_equal(m0, ~m1)

    def test_partial_trace_of_product(self):
        a = random_state(1, 1).matrix
        b = random_state(1, 2).matrix
        c = random_state(1, 3).matrix
        s = QuantumState(3, np.kron(np.kron(a, b), c))
        np.testing.assert_allclose(dm.partial_trace(s, [1]).matrix, b, atol=1e-14)
        np.testing.assert_allclose(dm.partial_trace(s, [0, 2]).matrix, np.kron(a, c), atol=1e-14)

    def test_partial_trace_against_einsum(self):
        s = random_state(3, 5)
        t = s.matrix.reshape([2] * 6)
        np.testing.assert_allclose(dm.partial_trace(s, [0]).matrix, np.einsum("abcdbc->ad", t), atol=1e-14)
        np.testing.assert_allclose(dm.partial_trace(s, [2]).matrix, np.einsum("abcabf->cf", t), atol=1e-14)

    def test_bell_state_reduced_is_mixed(self):
        bell = QuantumState.from_vector(np.array([1, 0, 0, 1]) / np.sqrt(2))
        x, y, z, purity = dm.pauli_and_purity(bell, 0)
        np.testing.assert_allclose([x, y, z, purity], [0, 0, 0, 0.5], atol=1e-14)

    def test_pauli_and_purity_normalizes(self):
        plus = QuantumState.from_vector(np.array([1, 1]) / np.sqrt(2)).scaled(0.3)
        np.testing.assert_allclose(dm.pauli_and_purity(plus, 0), (1, 0, 0, 1), atol=1e-14)

    def test_pauli_and_purity_empty_branch(self):
        with pytest.raises(ValueError):
            dm.pauli_and_purity(QuantumState(1, np.zeros((2, 2), dtype=complex)), 0)


class TestValidate:
    def test_accepts_physical_states(self):
        dm.validate(random_state(2, 9))

    def test_rejects_non_psd(self):
        with pytest.raises(AssertionError):
            dm.validate(QuantumState(1, np.diag([1.5, -0.5]).astype(complex)))

    def test_rejects_non_hermitian(self):
        with pytest.raises(AssertionError):
            dm.validate(QuantumState(1, np.array([[1, 0.1], [0, 0]], dtype=complex)))

    def test_rejects_trace_above_one(self):
        with pytest.raises(AssertionError):
            dm.validate(QuantumState(1, np.eye(2, dtype=complex)))

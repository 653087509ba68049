"""Kernel tests: Pauli action, rotations, exponentials, traces, metrics."""

import numpy as np
import pytest

from gibbsprep import (
    DensityMatrix,
    HermitianOperator,
    PauliString,
    StateVector,
    apply_hermitian_exponential,
    apply_pauli,
    fidelity,
    ising_hamiltonian,
    partial_trace_ancilla,
    pauli_rotation,
    purity,
    von_neumann_entropy,
)
from gibbsprep.simcore import apply_cnot

from conftest import dense_pauli, random_state


def random_pauli(n_qubits, rng, max_weight=2):
    weight = int(rng.integers(1, max_weight + 1))
    support = tuple(sorted(rng.choice(n_qubits, size=weight, replace=False)))
    letters = "".join(rng.choice(list("XYZ")) for _ in support)
    return PauliString(support, letters)


class TestPauliString:
    def test_validation(self):
        with pytest.raises(ValueError):
            PauliString((), "")
        with pytest.raises(ValueError):
            PauliString((1, 0), "XX")
        with pytest.raises(ValueError):
            PauliString((0, 0), "XX")
        with pytest.raises(ValueError):
            PauliString((0,), "A")
        with pytest.raises(ValueError):
            PauliString((0, 1), "X")

    def test_ordering_is_lexicographic(self):
        a = PauliString((0,), "X")
        b = PauliString((0,), "Z")
        c = PauliString((0, 1), "XX")
        d = PauliString((1,), "X")
        assert a < b < c < d
        assert sorted([d, c, b, a]) == [a, b, c, d]

    def test_label_roundtrip(self):
        p = PauliString((0, 3, 7), "XYZ")
        assert p.label == "X0Y3Z7"
        assert PauliString.from_label("X0Y3Z7") == p
        assert PauliString.from_label("Z3X1") == PauliString((1, 3), "XZ")

    def test_commutes_with(self):
        zz = PauliString((0, 1), "ZZ")
        xx = PauliString((0, 1), "XX")
        xi = PauliString((0,), "X")
        assert zz.commutes_with(xx)  # two clashes
        assert not zz.commutes_with(xi)  # one clash
        assert xi.commutes_with(PauliString((1,), "Z"))  # disjoint


class TestApplyPauli:
    def test_z_on_zero(self):
        state = StateVector.computational_basis(1, 1)
        out = apply_pauli(state, PauliString((0,), "Z"))
        assert np.allclose(out.amplitudes, state.amplitudes)

    def test_x_flips(self):
        state = StateVector.computational_basis(1, 1)
        out = apply_pauli(state, PauliString((0,), "X"))
        expected = np.zeros(4, dtype=complex)
        expected[1] = 1.0
        assert np.allclose(out.amplitudes, expected)

    def test_xy_on_00(self):
        state = StateVector.computational_basis(2, 0)
        out = apply_pauli(state, PauliString((0, 1), "XY"))
        expected = np.zeros(4, dtype=complex)
        expected[3] = 1j  # X|0> = |1>, Y|0> = i|1>
        assert np.allclose(out.amplitudes, expected)

    def test_out_of_range(self):
        state = StateVector.computational_basis(1, 1)
        with pytest.raises(IndexError):
            apply_pauli(state, PauliString((2,), "X"))

    def test_matches_dense_oracle(self, rng):
        for _ in range(30):
            state = random_state(2, 2, rng)
            p = random_pauli(4, rng)
            out = apply_pauli(state, p)
            expected = dense_pauli(4, p.support, p.letters) @ state.amplitudes
            assert np.allclose(out.amplitudes, expected, atol=1e-13)

    def test_involution(self, rng):
        state = random_state(2, 1, rng)
        p = random_pauli(3, rng)
        back = apply_pauli(apply_pauli(state, p), p)
        assert np.allclose(back.amplitudes, state.amplitudes, atol=1e-14)


class TestPauliRotation:
    def test_theta_zero_is_identity(self, rng):
        state = random_state(2, 1, rng)
        out = pauli_rotation(state, PauliString((0, 2), "XY"), 0.0)
        assert np.array_equal(out.amplitudes, state.amplitudes)

    def test_half_pi_gives_i_pauli(self, rng):
        state = random_state(2, 1, rng)
        p = PauliString((1, 2), "YZ")
        out = pauli_rotation(state, p, np.pi / 2)
        expected = 1j * apply_pauli(state, p).amplitudes
        assert np.allclose(out.amplitudes, expected, atol=1e-14)

    def test_pi_gives_global_minus(self, rng):
        state = random_state(2, 1, rng)
        out = pauli_rotation(state, PauliString((0,), "X"), np.pi)
        assert np.allclose(out.amplitudes, -state.amplitudes, atol=1e-14)
        before = partial_trace_ancilla(state).entries
        after = partial_trace_ancilla(out).entries
        assert np.allclose(before, after, atol=1e-14)

    def test_jit_kernel_matches_numpy_reference(self, rng):
        from gibbsprep.simcore import _rotate_numpy, pauli_action_tables, pauli_rotate_raw

        src, ph = pauli_action_tables(4, (0, 2), "XY")
        theta = 0.613
        vec = rng.normal(size=16) + 1j * rng.normal(size=16)
        assert np.array_equal(
            pauli_rotate_raw(vec, src, ph, theta), _rotate_numpy(vec, src, ph, theta)
        )
        mat = rng.normal(size=(16, 5)) + 1j * rng.normal(size=(16, 5))
        assert np.allclose(
            pauli_rotate_raw(mat, src, ph, theta),
            _rotate_numpy(mat, src, ph, theta),
            atol=1e-15,
            rtol=0,
        )

    def test_matches_hermitian_exponential(self, rng):
        # cos/sin closed form vs eigendecomposition route, 100 random pairs
        for _ in range(100):
            state = random_state(2, 2, rng)
            p = random_pauli(4, rng)
            theta = rng.uniform(-np.pi, np.pi)
            op = HermitianOperator(4, ((1.0, p),))
            a = pauli_rotation(state, p, theta)
            b = apply_hermitian_exponential(state, op, theta)
            assert np.abs(a.amplitudes - b.amplitudes).max() < 1e-12


class TestHermitianExponential:
    def test_t_zero_identity(self, rng):
        state = random_state(2, 2, rng)
        op = HermitianOperator(4, ((0.7, PauliString((0, 3), "XZ")),))
        out = apply_hermitian_exponential(state, op, 0.0)
        assert np.allclose(out.amplitudes, state.amplitudes, atol=1e-14)

    def test_diagonal_phase_action(self, rng):
        h = ising_hamiltonian(3)
        state = random_state(3, 0, rng)
        t = 0.37
        out = apply_hermitian_exponential(state, h, t)
        # independent diagonal: energies from spin enumeration
        energies = np.empty(8)
        for z in range(8):
            s = [1 - 2 * ((z >> q) & 1) for q in range(3)]
            energies[z] = -sum(s[i] * s[(i + 1) % 3] for i in range(3))
        expected = np.exp(1j * t * energies) * state.amplitudes
        assert np.allclose(out.amplitudes, expected, atol=1e-13)

    def test_dimension_mismatch(self, rng):
        state = random_state(1, 1, rng)
        op = HermitianOperator(3, ((1.0, PauliString((0,), "X")),))
        with pytest.raises(ValueError):
            apply_hermitian_exponential(state, op, 0.1)

    def test_norm_preserved(self, rng):
        op = HermitianOperator(
            4,
            tuple((float(rng.normal()), random_pauli(4, rng)) for _ in range(5)),
        )
        state = random_state(2, 2, rng)
        out = apply_hermitian_exponential(state, op, 1.3)
        assert abs(np.linalg.norm(out.amplitudes) - 1.0) < 1e-10


class TestPartialTrace:
    def test_product_state_is_pure(self, rng):
        phi = rng.normal(size=4) + 1j * rng.normal(size=4)
        phi /= np.linalg.norm(phi)
        chi = rng.normal(size=2) + 1j * rng.normal(size=2)
        chi /= np.linalg.norm(chi)
        amps = np.kron(chi, phi)  # ancilla bits are the high bits
        state = StateVector(2, 1, amps)
        rho = partial_trace_ancilla(state)
        assert abs(purity(rho) - 1.0) < 1e-12
        assert np.allclose(rho.entries, np.outer(phi, phi.conj()), atol=1e-12)

    def test_bell_pair_gives_maximally_mixed(self):
        amps = np.zeros(4, dtype=complex)
        amps[0b00] = 1 / np.sqrt(2)
        amps[0b11] = 1 / np.sqrt(2)
        rho = partial_trace_ancilla(StateVector(1, 1, amps))
        assert np.allclose(rho.entries, np.eye(2) / 2, atol=1e-14)

    def test_matches_dense_kron_oracle(self, rng):
        state = random_state(2, 2, rng)
        rho = partial_trace_ancilla(state).entries
        full = np.outer(state.amplitudes, state.amplitudes.conj())
        expected = np.zeros((4, 4), dtype=complex)
        for a in range(4):
            expected += full[4 * a : 4 * a + 4, 4 * a : 4 * a + 4]
        assert np.allclose(rho, expected, atol=1e-13)

    def test_trace_is_one(self, rng):
        for _ in range(20):
            state = random_state(3, 2, rng)
            assert abs(partial_trace_ancilla(state).entries.trace() - 1.0) < 1e-12


class TestMetrics:
    def test_purity_examples(self, rng):
        state = random_state(2, 0, rng)
        rho = partial_trace_ancilla(state)
        assert abs(purity(rho) - 1.0) < 1e-12
        assert abs(purity(DensityMatrix(np.eye(8) / 8)) - 0.125) < 1e-14
        assert abs(purity(DensityMatrix(np.diag([0.75, 0.25]))) - 0.625) < 1e-14

    def test_fidelity_self_is_one(self, rng):
        from conftest import random_density

        rho = random_density(4, rng)
        assert abs(fidelity(rho, rho) - 1.0) < 1e-9

    def test_fidelity_pure_states_overlap(self, rng):
        a = random_state(2, 0, rng)
        b = random_state(2, 0, rng)
        rho = partial_trace_ancilla(a)
        sigma = partial_trace_ancilla(b)
        overlap = abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2
        assert abs(fidelity(rho, sigma) - overlap) < 1e-8

    def test_fidelity_commuting_case(self):
        rho = DensityMatrix(np.diag([0.5, 0.5]))
        sigma = DensityMatrix(np.diag([0.9, 0.1]))
        expected = (np.sqrt(0.45) + np.sqrt(0.05)) ** 2  # exactly 0.8
        assert abs(fidelity(rho, sigma) - expected) < 1e-12
        assert abs(expected - 0.8) < 1e-15

    def test_fidelity_symmetric(self, rng):
        from conftest import random_density

        for _ in range(20):
            rho = random_density(4, rng)
            sigma = random_density(4, rng)
            assert abs(fidelity(rho, sigma) - fidelity(sigma, rho)) < 1e-9

    def test_fidelity_rejects_negative_spectrum(self):
        bad = DensityMatrix(np.diag([0.6, 0.3, 0.2, -0.1]))
        good = DensityMatrix(np.eye(4) / 4)
        with pytest.raises(ValueError):
            fidelity(bad, good)
        with pytest.raises(ValueError):
            fidelity(good, bad)

    def test_fidelity_dimension_mismatch(self):
        with pytest.raises(ValueError):
            fidelity(DensityMatrix(np.eye(2) / 2), DensityMatrix(np.eye(4) / 4))

    def test_entropy_examples(self, rng):
        pure = partial_trace_ancilla(random_state(2, 0, rng))
        assert abs(von_neumann_entropy(pure)) < 1e-9
        mixed = DensityMatrix(np.eye(8) / 8)
        assert abs(von_neumann_entropy(mixed) - 3 * np.log(2)) < 1e-12
        half = DensityMatrix(np.diag([0.5, 0.5]))
        assert abs(von_neumann_entropy(half) - np.log(2)) < 1e-12


class TestInvariants:
    def test_norm_conserved_over_random_compositions(self, rng):
        state = random_state(2, 2, rng)
        for _ in range(1000):
            kind = rng.integers(3)
            if kind == 0:
                state = apply_pauli(state, random_pauli(4, rng))
            elif kind == 1:
                state = pauli_rotation(
                    state, random_pauli(4, rng), rng.uniform(-np.pi, np.pi)
                )
            else:
                q = rng.choice(4, size=2, replace=False)
                state = apply_cnot(state, int(q[0]), int(q[1]))
            assert abs(np.linalg.norm(state.amplitudes) - 1.0) < 1e-10

    def test_state_validation(self):
        with pytest.raises(ValueError):
            StateVector(1, 1, np.ones(4))
        with pytest.raises(ValueError):
            StateVector(1, 1, np.ones(8) / np.sqrt(8))

    def test_density_validation(self):
        with pytest.raises(ValueError):
            DensityMatrix(np.diag([0.5, 0.6]))
        with pytest.raises(ValueError):
            DensityMatrix(np.array([[0.5, 0.5], [0.0, 0.5]]))

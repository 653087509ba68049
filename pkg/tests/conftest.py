"""Shared fixtures and independent dense oracles.

The kron-based builders here deliberately avoid the package's own
permutation-table machinery so that tests cross-check two implementations.
Little-endian convention: qubit 0 is the least-significant bit, so the
highest qubit is the first factor in the Kronecker product.
"""

import numpy as np
import pytest

from gibbsprep import DensityMatrix, StateVector

PAULI_MATS = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def dense_pauli(n_qubits, support, letters):
    """Dense matrix of a Pauli word via explicit Kronecker products."""
    by_qubit = dict(zip(support, letters))
    out = np.eye(1, dtype=complex)
    for q in reversed(range(n_qubits)):
        out = np.kron(out, PAULI_MATS[by_qubit.get(q, "I")])
    return out


def dense_operator(op):
    """Dense matrix of a HermitianOperator, built independently."""
    total = np.zeros((op.dim, op.dim), dtype=complex)
    for c, p in op.terms:
        total += c * dense_pauli(op.n_qubits, p.support, p.letters)
    return total


def random_state(n_data, n_ancilla, rng):
    dim = 1 << (n_data + n_ancilla)
    amps = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return StateVector(n_data, n_ancilla, amps / np.linalg.norm(amps))


def random_density(dim, rng):
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    a = g @ g.conj().T
    return DensityMatrix(a / a.trace())


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)

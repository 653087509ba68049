"""Exact linear-algebra kernel for joint data/ancilla qubit registers.

Register convention, used consistently across the package:

* qubits ``0 .. n_data - 1`` form the data register D,
* qubits ``n_data .. n_data + n_ancilla - 1`` form the ancilla register A,
* data qubit ``k`` is paired with ancilla qubit ``k`` (i.e. global index
  ``n_data + k``),
* basis-state indexing is little-endian: qubit ``k`` holds bit ``k`` of the
  basis index, so qubit 0 is the least-significant bit.

All operations are pure functions over immutable values and are safe to call
concurrently.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:  # pragma: no cover - import cycle guard, typing only
    from .models import HermitianOperator

NORM_ATOL = 1e-10
HERMITICITY_ATOL = 1e-10
TRACE_ATOL = 1e-10
EIGENVALUE_FLOOR = -1e-9
ENTROPY_EIGENVALUE_CUTOFF = 1e-14

_LABEL_TOKEN = re.compile(r"([XYZ])(\d+)")


@dataclass(frozen=True, order=True)
class PauliString:
    """A multi-qubit Pauli word: one letter of X/Y/Z per supported qubit.

    ``support`` lists the qubit indices the word acts on, strictly
    increasing; ``letters[k]`` is the Pauli letter on ``support[k]``.
    Instances compare lexicographically on ``(support, letters)``, which
    gives every pool a well-defined deterministic order for tie-breaking.
    """

    support: tuple[int, ...]
    letters: str

    def __post_init__(self):
        support = tuple(int(q) for q in self.support)
        object.__setattr__(self, "support", support)
        if len(support) != len(self.letters):
            raise ValueError("support and letters must have equal length")
        if len(support) == 0:
            raise ValueError("identity string is not allowed (weight >= 1)")
        if any(q < 0 for q in support):
            raise ValueError("qubit indices must be non-negative")
        if any(a >= b for a, b in zip(support, support[1:])):
            raise ValueError("support indices must be strictly increasing")
        if any(c not in "XYZ" for c in self.letters):
            raise ValueError(f"invalid Pauli letters {self.letters!r}")

    @property
    def weight(self) -> int:
        return len(self.support)

    @property
    def label(self) -> str:
        """Compact text form, e.g. ``X0Z3``; parseable by :meth:`from_label`."""
        return "".join(f"{c}{q}" for q, c in zip(self.support, self.letters))

    @classmethod
    def from_label(cls, label: str) -> "PauliString":
        tokens = _LABEL_TOKEN.findall(label)
        if "".join(c + q for c, q in tokens) != label:
            raise ValueError(f"cannot parse Pauli label {label!r}")
        pairs = sorted((int(q), c) for c, q in tokens)
        return cls(tuple(q for q, _ in pairs), "".join(c for _, c in pairs))

    def commutes_with(self, other: "PauliString") -> bool:
        """True iff the two words commute (even number of clashing letters)."""
        clashes = 0
        letters = dict(zip(self.support, self.letters))
        for q, c in zip(other.support, other.letters):
            if q in letters and letters[q] != c:
                clashes += 1
        return clashes % 2 == 0


@lru_cache(maxsize=None)
def pauli_action_tables(n_qubits: int, support: tuple[int, ...], letters: str):
    """Precomputed action of a Pauli word on the computational basis.

    Returns ``(source, phase)`` such that ``(P psi)[j] = phase[j] * psi[source[j]]``.
    Cached per (register size, word); the arrays are read-only.
    """
    if support and support[-1] >= n_qubits:
        raise IndexError(
            f"Pauli support {support} out of range for {n_qubits} qubits"
        )
    dim = 1 << n_qubits
    flip_mask = 0
    phase_mask = 0  # qubits whose bit flips the sign (Y and Z letters)
    n_y = 0
    for q, c in zip(support, letters):
        if c == "X":
            flip_mask |= 1 << q
        elif c == "Y":
            flip_mask |= 1 << q
            phase_mask |= 1 << q
            n_y += 1
        else:
            phase_mask |= 1 << q
    index = np.arange(dim, dtype=np.intp)
    source = index ^ flip_mask
    parity = np.bitwise_count((source & phase_mask).astype(np.uint64)) & 1
    phase = (1j**n_y) * np.where(parity, -1.0, 1.0).astype(np.complex128)
    source.setflags(write=False)
    phase.setflags(write=False)
    return source, phase


def pauli_apply_raw(amplitudes: np.ndarray, source: np.ndarray, phase: np.ndarray) -> np.ndarray:
    """P @ amplitudes for raw arrays; last tabled axis may carry extra columns."""
    if amplitudes.ndim == 1:
        return phase * amplitudes[source]
    return phase[:, None] * amplitudes[source, :]


def _rotate_numpy(amplitudes, source, phase, theta):
    return np.cos(theta) * amplitudes + (1j * np.sin(theta)) * pauli_apply_raw(
        amplitudes, source, phase
    )


try:  # fused kernels: one gather pass instead of several temporaries
    import numba

    @numba.njit(cache=True, fastmath=False)
    def _rotate_jit_1d(amplitudes, source, phase, cos_t, i_sin_t):
        out = np.empty_like(amplitudes)
        for i in range(amplitudes.shape[0]):
            out[i] = cos_t * amplitudes[i] + i_sin_t * (
                phase[i] * amplitudes[source[i]]
            )
        return out

    @numba.njit(cache=True, fastmath=False)
    def _rotate_jit_2d(amplitudes, source, phase, cos_t, i_sin_t):
        out = np.empty_like(amplitudes)
        for i in range(amplitudes.shape[0]):
            s = source[i]
            p = i_sin_t * phase[i]
            for j in range(amplitudes.shape[1]):
                out[i, j] = cos_t * amplitudes[i, j] + p * amplitudes[s, j]
        return out

    def pauli_rotate_raw(amplitudes, source, phase, theta):
        """exp(i theta P) @ amplitudes = cos(theta)*psi + i sin(theta)*(P psi)."""
        cos_t = complex(np.cos(theta))
        i_sin_t = 1j * np.sin(theta)
        if amplitudes.ndim == 1:
            return _rotate_jit_1d(amplitudes, source, phase, cos_t, i_sin_t)
        return _rotate_jit_2d(amplitudes, source, phase, cos_t, i_sin_t)

except ImportError:  # pragma: no cover - numba is an optional accelerator
    pauli_rotate_raw = _rotate_numpy


@dataclass(frozen=True)
class StateVector:
    """Normalized pure state on the joint data (x) ancilla register."""

    n_data: int
    n_ancilla: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        if amps.shape != (1 << self.n_total,):
            raise ValueError(
                f"expected {1 << self.n_total} amplitudes, got shape {amps.shape}"
            )
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > NORM_ATOL:
            raise ValueError(f"state norm {norm!r} deviates from 1 beyond {NORM_ATOL}")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def n_total(self) -> int:
        return self.n_data + self.n_ancilla

    @property
    def dim(self) -> int:
        return 1 << self.n_total

    def with_amplitudes(self, amplitudes: np.ndarray) -> "StateVector":
        return StateVector(self.n_data, self.n_ancilla, amplitudes)

    @classmethod
    def computational_basis(
        cls, n_data: int, n_ancilla: int, index: int = 0
    ) -> "StateVector":
        amps = np.zeros(1 << (n_data + n_ancilla), dtype=np.complex128)
        amps[index] = 1.0
        return cls(n_data, n_ancilla, amps)


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, unit-trace matrix on the data register."""

    entries: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=np.complex128)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValueError(f"density matrix must be square, got {entries.shape}")
        if np.abs(entries - entries.conj().T).max() > HERMITICITY_ATOL:
            raise ValueError("density matrix is not Hermitian")
        trace = entries.trace()
        if abs(trace - 1.0) > TRACE_ATOL:
            raise ValueError(f"density matrix trace {trace!r} deviates from 1")
        p = np.vdot(entries, entries).real
        if not (1.0 / entries.shape[0] - 1e-9 <= p <= 1.0 + 1e-9):
            raise ValueError(f"purity {p!r} outside [1/dim, 1]")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


def apply_pauli(state: StateVector, p: PauliString) -> StateVector:
    """Return ``P |psi>``. Involution: applying twice recovers the input."""
    source, phase = pauli_action_tables(state.n_total, p.support, p.letters)
    return state.with_amplitudes(pauli_apply_raw(state.amplitudes, source, phase))


def pauli_rotation(state: StateVector, p: PauliString, theta: float) -> StateVector:
    """Return ``exp(i theta P) |psi>`` using cos/sin closed form (P^2 = 1)."""
    source, phase = pauli_action_tables(state.n_total, p.support, p.letters)
    return state.with_amplitudes(
        pauli_rotate_raw(state.amplitudes, source, phase, theta)
    )


@lru_cache(maxsize=None)
def _cnot_table(n_qubits: int, control: int, target: int):
    if control == target:
        raise ValueError("CNOT control and target must differ")
    if not (0 <= control < n_qubits and 0 <= target < n_qubits):
        raise IndexError("CNOT qubits out of range")
    index = np.arange(1 << n_qubits, dtype=np.intp)
    source = index ^ (((index >> control) & 1) << target)
    source.setflags(write=False)
    return source


def apply_cnot(state: StateVector, control: int, target: int) -> StateVector:
    """CNOT with the given control/target (a self-inverse basis permutation)."""
    source = _cnot_table(state.n_total, control, target)
    return state.with_amplitudes(state.amplitudes[source])


def apply_hermitian_exponential(
    state: StateVector, operator: "HermitianOperator", t: float
) -> StateVector:
    """Return ``exp(i t H) |psi>`` exactly.

    Diagonal operators (all-Z terms) short-circuit to a direct phase
    multiplication; otherwise the operator's cached eigendecomposition is
    used as basis change + phase + inverse basis change.
    """
    if operator.n_qubits != state.n_total:
        raise ValueError(
            f"operator acts on {operator.n_qubits} qubits, state has {state.n_total}"
        )
    diag = operator.diagonal()
    if diag is not None:
        return state.with_amplitudes(np.exp(1j * t * diag) * state.amplitudes)
    eigenvalues, eigenvectors = operator.eigensystem()
    rotated = eigenvectors.conj().T @ state.amplitudes
    rotated *= np.exp(1j * t * eigenvalues)
    return state.with_amplitudes(eigenvectors @ rotated)


def partial_trace_ancilla_raw(
    amplitudes: np.ndarray, n_data: int, n_ancilla: int
) -> np.ndarray:
    """Tr_A |psi><psi| as a raw (2^n_data, 2^n_data) array."""
    block = amplitudes.reshape(1 << n_ancilla, 1 << n_data)
    return block.T @ block.conj()


def partial_trace_ancilla(state: StateVector) -> DensityMatrix:
    """Reduced state of the data register, ``Tr_A |psi><psi|``."""
    return DensityMatrix(
        partial_trace_ancilla_raw(state.amplitudes, state.n_data, state.n_ancilla)
    )


def purity(rho: DensityMatrix) -> float:
    """Tr(rho^2); equals the squared Frobenius norm for Hermitian input."""
    return float(np.vdot(rho.entries, rho.entries).real)


def _checked_eigvalsh(matrix: np.ndarray, what: str) -> np.ndarray:
    values = np.linalg.eigvalsh(matrix)
    if values[0] < EIGENVALUE_FLOOR:
        raise ValueError(
            f"{what} has eigenvalue {values[0]} below {EIGENVALUE_FLOOR}; "
            "invalid state upstream"
        )
    return np.clip(values, 0.0, None)


def fidelity(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """Uhlmann fidelity ``(Tr sqrt(sqrt(sigma) rho sqrt(sigma)))^2``.

    Eigenvalues of either argument in ``[-1e-9, 0)`` are clamped to zero;
    anything below that raises, since it signals a bug upstream rather than
    partial-trace rounding.
    """
    if rho.dim != sigma.dim:
        raise ValueError(f"dimension mismatch: {rho.dim} vs {sigma.dim}")
    _checked_eigvalsh(rho.entries, "rho")
    sig_values, sig_vectors = np.linalg.eigh(sigma.entries)
    if sig_values[0] < EIGENVALUE_FLOOR:
        raise ValueError(
            f"sigma has eigenvalue {sig_values[0]} below {EIGENVALUE_FLOOR}"
        )
    sqrt_sigma = (sig_vectors * np.sqrt(np.clip(sig_values, 0.0, None))) @ (
        sig_vectors.conj().T
    )
    inner = sqrt_sigma @ rho.entries @ sqrt_sigma
    roots = np.sqrt(np.clip(np.linalg.eigvalsh(inner), 0.0, None))
    return float(roots.sum() ** 2)


def von_neumann_entropy(rho: DensityMatrix) -> float:
    """S(rho) = -Tr(rho ln rho) in nats; eigenvalues below 1e-14 contribute 0."""
    values = _checked_eigvalsh(rho.entries, "rho")
    values = values[values > ENTROPY_EIGENVALUE_CUTOFF]
    return float(-(values * np.log(values)).sum())

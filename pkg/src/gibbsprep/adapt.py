"""Operator pools, reference states, adaptive ansatz growth, gate accounting.

Two ansatz families are grown here:

* ``vqe`` flavor: the state is a product of Pauli rotations
  ``exp(i theta_n P_n) ... exp(i theta_1 P_1) |ref>`` grown one generator at a
  time from a pool of all weight-1/2 Pauli words, selected by largest
  objective gradient, until the pool-gradient norm drops below a threshold.
* ``qaoa``/``baseline`` flavor: layered
  ``exp(i alpha_k M_k) exp(i gamma_k (H_A + H_D)/2)`` blocks on top of the
  singlet reference, with the mixer ``M_k`` either chosen adaptively from a
  pool of data-ancilla Pauli words plus the pair entangler (``qaoa``) or
  fixed to the pair entangler (``baseline``). Layer k = 1 is applied first.

Within one growth loop everything is deterministic given the seed; restarts
and postselection provide the only randomness at the protocol level.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize

from .models import GibbsTarget, HermitianOperator
from .objective import (
    ObjectiveContext,
    candidate_gradient,
    objective,
    sum_generator_gradient,
)
from .simcore import (
    DensityMatrix,
    PauliString,
    StateVector,
    apply_cnot,
    fidelity,
    partial_trace_ancilla,
    partial_trace_ancilla_raw,
    pauli_action_tables,
    pauli_rotate_raw,
    pauli_rotation,
)

GRADIENT_TOLERANCE = 1e-8
MAX_OPTIMIZER_ITERATIONS = 1000
TIE_TOLERANCE = 1e-12
STALL_IMPROVEMENT = 1e-12
STALL_LIMIT = 3
MAX_VQE_ITERATIONS = 200
MAX_QAOA_LAYERS = 6
DEFAULT_VQE_RESTARTS = 5
DEFAULT_QAOA_RESTARTS = 8

ENTANGLER_LABEL = "ENTANGLER"

CNOT_CONVENTION = {
    "vqe_reference": "n_data * n_ancilla",
    "vqe_two_qubit_generator": 2,
    "vqe_single_qubit_generator": 0,
    "layered_reference": "n_data (one CNOT per singlet pair)",
    "layered_cost": "2 per two-qubit term of the data-register Hamiltonian",
    "layered_pauli_mixer": 2,
    "layered_entangler_mixer": "3 per data/ancilla pair",
}


class NumericalFailure(RuntimeError):
    """Raised when a run hits non-finite values or loses state validity."""


@dataclass(frozen=True)
class PoolOperator:
    """One selectable generator: a Pauli word or the full pair entangler."""

    kind: str  # "pauli" | "sum_entangler"
    pauli: PauliString | None
    operator: HermitianOperator | None
    cnot_cost: int
    label: str

    @classmethod
    def from_pauli(cls, p: PauliString) -> "PoolOperator":
        return cls(
            kind="pauli",
            pauli=p,
            operator=None,
            cnot_cost=2 if p.weight == 2 else 0,
            label=p.label,
        )

    @classmethod
    def from_entangler(cls, operator: HermitianOperator, n_data: int) -> "PoolOperator":
        if not operator.terms_commute():
            raise ValueError("entangler terms must mutually commute")
        return cls(
            kind="sum_entangler",
            pauli=None,
            operator=operator,
            cnot_cost=3 * n_data,
            label=ENTANGLER_LABEL,
        )


def build_vqe_pool(n_total_qubits: int) -> tuple[PoolOperator, ...]:
    """All weight-1 and weight-2 Pauli words on the joint register, sorted.

    Size is ``3n + 9 n(n-1)/2``; the lexicographic (support, letters) order
    makes argmax tie-breaking deterministic.
    """
    if n_total_qubits < 2:
        raise ValueError("pool needs at least 2 qubits")
    words = [
        PauliString((q,), c) for q in range(n_total_qubits) for c in "XYZ"
    ]
    words += [
        PauliString((a, b), c1 + c2)
        for a in range(n_total_qubits)
        for b in range(a + 1, n_total_qubits)
        for c1 in "XYZ"
        for c2 in "XYZ"
    ]
    return tuple(PoolOperator.from_pauli(p) for p in sorted(words))


def build_qaoa_pool(
    n_data: int, entangler: HermitianOperator
) -> tuple[PoolOperator, ...]:
    """Weight-2 words coupling one data with one ancilla qubit, plus the entangler.

    Size is ``9 n_data^2 + 1``; Pauli words come first in lexicographic
    order and the entangler is appended last.
    """
    words = [
        PauliString((d, n_data + a), c1 + c2)
        for d in range(n_data)
        for a in range(n_data)
        for c1 in "XYZ"
        for c2 in "XYZ"
    ]
    pool = [PoolOperator.from_pauli(p) for p in sorted(words)]
    pool.append(PoolOperator.from_entangler(entangler, n_data))
    return tuple(pool)


def reference_from_angles(
    n_data: int, n_ancilla: int, angles: np.ndarray
) -> StateVector:
    """One y-rotation per qubit, then a CNOT from each ancilla to each data qubit.

    ``angles[q]`` drives ``exp(-i angles[q] Y_q)``; the CNOTs (ancilla
    control, data target) all commute, so their order is irrelevant.
    """
    angles = np.asarray(angles, dtype=np.float64)
    if angles.shape != (n_data + n_ancilla,):
        raise ValueError("need one angle per qubit")
    state = StateVector.computational_basis(n_data, n_ancilla)
    for q, alpha in enumerate(angles):
        state = pauli_rotation(state, PauliString((q,), "Y"), -float(alpha))
    for a in range(n_ancilla):
        for d in range(n_data):
            state = apply_cnot(state, control=n_data + a, target=d)
    return state


def vqe_reference_state(
    n_data: int, n_ancilla: int, rng: np.random.Generator
) -> tuple[StateVector, np.ndarray]:
    """Seeded partially-entangled reference; returns (state, drawn angles).

    Angles are uniform on [0, 2*pi). Draws whose reduced state is within
    1e-6 of being pure or maximally mixed are rejected and redrawn: at those
    extremes the pool gradients degenerate and the growth loop stalls before
    reaching a thermal state.
    """
    if n_ancilla < 1:
        raise ValueError("need at least one ancilla qubit")
    lo = 2.0 ** (-n_data) + 1e-6
    hi = 1.0 - 1e-6
    for _ in range(100):
        angles = rng.uniform(0.0, 2.0 * np.pi, size=n_data + n_ancilla)
        state = reference_from_angles(n_data, n_ancilla, angles)
        rho = partial_trace_ancilla(state).entries
        p = float(np.vdot(rho, rho).real)
        if lo < p < hi:
            return state, angles
    raise NumericalFailure("could not draw a usable reference state")


def singlet_reference_state(n_data: int) -> StateVector:
    """Product of singlets ``(|0_D 1_A> - |1_D 0_A>)/sqrt(2)`` across all pairs.

    This is the unique ground state of the pair entangler and reduces to the
    maximally mixed data state.
    """
    dim_data = 1 << n_data
    amps = np.zeros(dim_data * dim_data, dtype=np.complex128)
    indices = np.arange(dim_data)
    signs = np.where(np.bitwise_count(indices.astype(np.uint64)) & 1, -1.0, 1.0)
    complement = (dim_data - 1) ^ indices
    amps[indices + dim_data * complement] = signs / np.sqrt(dim_data)
    return StateVector(n_data, n_data, amps)


@dataclass
class Ansatz:
    """A reference state plus an ordered list of parameterized layers.

    ``vqe`` flavor stores one rotation angle per generator. ``qaoa`` and
    ``baseline`` flavors interleave parameters as
    ``[gamma_1, alpha_1, ..., gamma_n, alpha_n]`` and require
    ``cost_operator`` (the problem Hamiltonian mirrored onto both
    registers). The reference is applied first, then layer 1, layer 2, ...
    """

    flavor: str
    n_data: int
    n_ancilla: int
    reference: StateVector
    reference_spec: dict
    generators: list[PoolOperator] = field(default_factory=list)
    parameters: np.ndarray = field(default_factory=lambda: np.zeros(0))
    cost_operator: HermitianOperator | None = None

    def __post_init__(self):
        if self.flavor not in ("vqe", "qaoa", "baseline"):
            raise ValueError(f"unknown flavor {self.flavor!r}")
        if self.flavor in ("qaoa", "baseline"):
            if self.cost_operator is None:
                raise ValueError(f"{self.flavor} ansatz needs a cost operator")
            # Shift-rule gradients decompose the cost exponential term by
            # term, which is only exact for mutually commuting terms.
            if not self.cost_operator.terms_commute():
                raise ValueError(
                    "cost operator terms must mutually commute for layered ansatz"
                )
        self.parameters = np.asarray(self.parameters, dtype=np.float64)

    @property
    def n_layers(self) -> int:
        return len(self.generators)

    @property
    def parameter_count(self) -> int:
        return (2 if self.flavor != "vqe" else 1) * self.n_layers

    def prepare(self, params: np.ndarray | None = None) -> StateVector:
        """Build the full state for the given (or stored) parameters."""
        params = self.parameters if params is None else np.asarray(params, float)
        if params.shape != (self.parameter_count,):
            raise ValueError(
                f"expected {self.parameter_count} parameters, got {params.shape}"
            )
        return self.reference.with_amplitudes(self._build_raw(params))

    # -- raw-amplitude pipelines (hot path) --------------------------------

    def _tables(self, p: PauliString):
        return pauli_action_tables(
            self.n_data + self.n_ancilla, p.support, p.letters
        )

    def _apply_cost_raw(self, amps: np.ndarray, gamma: float) -> np.ndarray:
        """exp(i (gamma/2) (H_A + H_D)) with diagonal fast path."""
        op = self.cost_operator
        diag = op.diagonal()
        t = gamma / 2.0
        if diag is not None:
            phases = np.exp(1j * t * diag)
            return phases * amps if amps.ndim == 1 else phases[:, None] * amps
        values, vectors = op.eigensystem()
        rotated = vectors.conj().T @ amps
        phases = np.exp(1j * t * values)
        rotated = phases * rotated if amps.ndim == 1 else phases[:, None] * rotated
        return vectors @ rotated

    def _apply_mixer_raw(
        self, amps: np.ndarray, op: PoolOperator, alpha: float
    ) -> np.ndarray:
        if op.kind == "pauli":
            src, ph = self._tables(op.pauli)
            return pauli_rotate_raw(amps, src, ph, alpha)
        # Commuting sum: the exponential factorizes into per-term rotations.
        for c, p in op.operator.terms:
            src, ph = self._tables(p)
            amps = pauli_rotate_raw(amps, src, ph, alpha * c)
        return amps

    def _apply_layers_raw(
        self, amps: np.ndarray, params: np.ndarray, start: int
    ) -> np.ndarray:
        if self.flavor == "vqe":
            for k in range(start, self.n_layers):
                src, ph = self._tables(self.generators[k].pauli)
                amps = pauli_rotate_raw(amps, src, ph, params[k])
            return amps
        for k in range(start, self.n_layers):
            amps = self._apply_cost_raw(amps, params[2 * k])
            amps = self._apply_mixer_raw(amps, self.generators[k], params[2 * k + 1])
        return amps

    def _build_raw(self, params: np.ndarray) -> np.ndarray:
        return self._apply_layers_raw(self.reference.amplitudes, params, 0)


def _data_expectation(amps: np.ndarray, w: np.ndarray, n_data: int) -> float:
    """<psi| (W x 1_A) |psi> for a Hermitian data-register matrix W."""
    block = amps.reshape(-1, 1 << n_data)
    return float(((block @ w.T) * block.conj()).sum().real)


def _data_expectations(batch: np.ndarray, w: np.ndarray, n_data: int) -> np.ndarray:
    """Column-wise <psi|(W x 1_A)|psi> for a (dim, cols) batch of states."""
    d_data = 1 << n_data
    block = batch.reshape(-1, d_data, batch.shape[1])  # (ancilla, data, cols)
    tw = np.tensordot(w, block, axes=([1], [1]))  # (data, ancilla, cols)
    return np.einsum("aic,iac->c", block.conj(), tw).real


def ansatz_objective(ansatz: Ansatz, params: np.ndarray, ctx: ObjectiveContext) -> float:
    rho = partial_trace_ancilla_raw(
        ansatz._build_raw(np.asarray(params, float)), ansatz.n_data, ansatz.n_ancilla
    )
    cross = np.einsum("ij,ji->", ctx.target.matrix, rho).real
    return float(-cross + 0.5 * np.vdot(rho, rho).real)


def ansatz_value_and_gradient(
    ansatz: Ansatz, params: np.ndarray, ctx: ObjectiveContext
) -> tuple[float, np.ndarray]:
    """Objective and its full shift-rule gradient at ``params``.

    Every partial derivative is the exact two-point shift
    ``aux(theta + pi/4 e, theta) - aux(theta - pi/4 e, theta)``; parameters
    whose generator is a commuting Pauli sum (cost layers, the entangler
    mixer) are decomposed term by term, with the extra +-pi/4 rotation
    commuted to just after the layer it shifts. All shifted states are
    carried through one batched sweep over the remaining layers, so the
    full gradient costs one pass per layer instead of one per parameter.
    """
    params = np.asarray(params, dtype=np.float64)
    n_data = ansatz.n_data
    dim = ansatz.reference.dim
    if ansatz.flavor == "vqe":
        n = ansatz.n_layers
        tables = [ansatz._tables(op.pauli) for op in ansatz.generators]
        amps = ansatz.reference.amplitudes
        shifted = np.empty((dim, 2 * n), dtype=np.complex128)
        filled = 0
        for k in range(n):
            src, ph = tables[k]
            if filled:
                shifted[:, :filled] = pauli_rotate_raw(
                    shifted[:, :filled], src, ph, params[k]
                )
            amps = pauli_rotate_raw(amps, src, ph, params[k])
            shifted[:, filled] = pauli_rotate_raw(amps, src, ph, np.pi / 4)
            shifted[:, filled + 1] = pauli_rotate_raw(amps, src, ph, -np.pi / 4)
            filled += 2
        rho = partial_trace_ancilla_raw(amps, n_data, ansatz.n_ancilla)
        value = float(
            -np.einsum("ij,ji->", ctx.target.matrix, rho).real
            + 0.5 * np.vdot(rho, rho).real
        )
        if n == 0:
            return value, np.zeros(0)
        w = rho - ctx.target.matrix
        expectations = _data_expectations(shifted, w, n_data)
        return value, expectations[0::2] - expectations[1::2]

    # qaoa / baseline: columns are per-term shifts; bookkeeping maps the
    # expectation differences back onto the gamma/alpha parameters.
    n = ansatz.n_layers
    cost_terms = ansatz.cost_operator.terms
    mixer_terms = [
        ((1.0, op.pauli),) if op.kind == "pauli" else op.operator.terms
        for op in ansatz.generators
    ]
    total_cols = sum(
        2 * (len(cost_terms) + len(terms)) for terms in mixer_terms
    )
    shifted = np.empty((dim, total_cols), dtype=np.complex128)
    weights: list[tuple[int, float]] = []  # (parameter index, coefficient)
    amps = ansatz.reference.amplitudes
    filled = 0
    for k in range(n):
        gamma, alpha = params[2 * k], params[2 * k + 1]
        if filled:
            shifted[:, :filled] = ansatz._apply_cost_raw(
                shifted[:, :filled], gamma
            )
        amps = ansatz._apply_cost_raw(amps, gamma)
        for c, p in cost_terms:
            src, ph = ansatz._tables(p)
            shifted[:, filled] = pauli_rotate_raw(amps, src, ph, np.pi / 4)
            shifted[:, filled + 1] = pauli_rotate_raw(amps, src, ph, -np.pi / 4)
            weights.append((2 * k, c / 2.0))
            filled += 2
        mixer = ansatz.generators[k]
        if filled:
            shifted[:, :filled] = ansatz._apply_mixer_raw(
                shifted[:, :filled], mixer, alpha
            )
        amps = ansatz._apply_mixer_raw(amps, mixer, alpha)
        for c, p in mixer_terms[k]:
            src, ph = ansatz._tables(p)
            shifted[:, filled] = pauli_rotate_raw(amps, src, ph, np.pi / 4)
            shifted[:, filled + 1] = pauli_rotate_raw(amps, src, ph, -np.pi / 4)
            weights.append((2 * k + 1, c))
            filled += 2
    rho = partial_trace_ancilla_raw(amps, n_data, ansatz.n_ancilla)
    value = float(
        -np.einsum("ij,ji->", ctx.target.matrix, rho).real
        + 0.5 * np.vdot(rho, rho).real
    )
    grad = np.zeros(2 * n)
    if n == 0:
        return value, grad
    w = rho - ctx.target.matrix
    expectations = _data_expectations(shifted, w, n_data)
    differences = expectations[0::2] - expectations[1::2]
    for (index, coefficient), diff in zip(weights, differences):
        grad[index] += coefficient * diff
    return value, grad


@dataclass
class FixedAnsatzResult:
    parameters: np.ndarray
    objective: float
    gradient_norm: float  # infinity norm at the returned parameters
    iterations: int
    converged: bool


def optimize_fixed_ansatz(
    ansatz: Ansatz, ctx: ObjectiveContext, init: np.ndarray
) -> FixedAnsatzResult:
    """BFGS on exact shift-rule gradients; deterministic given ``init``.

    Never returns a point worse than ``init``. Non-finite objective or
    gradient values abort the run with :class:`NumericalFailure`.
    """
    init = np.asarray(init, dtype=np.float64)
    if init.shape != (ansatz.parameter_count,):
        raise ValueError(
            f"init has {init.shape}, ansatz expects {ansatz.parameter_count}"
        )

    def fun(x: np.ndarray) -> float:
        value = ansatz_objective(ansatz, x, ctx)
        if not np.isfinite(value):
            raise NumericalFailure("non-finite objective during optimization")
        return value

    def jac(x: np.ndarray) -> np.ndarray:
        _, grad = ansatz_value_and_gradient(ansatz, x, ctx)
        if not np.all(np.isfinite(grad)):
            raise NumericalFailure("non-finite gradient during optimization")
        return grad

    f0, g0 = fun(init), jac(init)
    if init.size == 0:
        return FixedAnsatzResult(init, f0, 0.0, 0, True)
    result = minimize(
        fun,
        init,
        jac=jac,
        method="BFGS",
        options={"gtol": GRADIENT_TOLERANCE, "maxiter": MAX_OPTIMIZER_ITERATIONS},
    )
    if result.fun > f0:
        return FixedAnsatzResult(
            init, f0, float(np.abs(g0).max()), int(result.nit), False
        )
    grad_norm = float(np.abs(result.jac).max())
    return FixedAnsatzResult(
        np.asarray(result.x, dtype=np.float64),
        float(result.fun),
        grad_norm,
        int(result.nit),
        bool(result.success),
    )


@dataclass
class IterationRecord:
    """One growth step: what was chosen and where the optimizer landed."""

    index: int
    generator: str | None
    selection_gradient: float | None
    pool_gradient_norm: float | None
    objective: float
    fidelity: float
    cnot_count: int
    wall_ms: float


@dataclass
class AdaptTrace:
    flavor: str
    seed: int
    gamma0: float | None
    records: list[IterationRecord]
    termination: str  # "threshold" | "max_iters" | "stalled"
    generator_labels: list[str]
    final_parameters: list[float]
    final_objective: float
    final_fidelity: float
    final_pool_gradient_norm: float | None
    reference_spec: dict
    metadata: dict
    pool_gradient_history: list[list[float]] | None = None

    def to_dict(self) -> dict:
        return {
            "flavor": self.flavor,
            "seed": self.seed,
            "gamma0": self.gamma0,
            "termination": self.termination,
            "generator_labels": list(self.generator_labels),
            "final_parameters": list(self.final_parameters),
            "final_objective": self.final_objective,
            "final_fidelity": self.final_fidelity,
            "final_pool_gradient_norm": self.final_pool_gradient_norm,
            "reference_spec": self.reference_spec,
            "metadata": self.metadata,
            "records": [
                {
                    "index": r.index,
                    "generator": r.generator,
                    "selection_gradient": r.selection_gradient,
                    "pool_gradient_norm": r.pool_gradient_norm,
                    "objective": r.objective,
                    "fidelity": r.fidelity,
                    "cnot_count": r.cnot_count,
                    "wall_ms": r.wall_ms,
                }
                for r in self.records
            ],
            "pool_gradient_history": self.pool_gradient_history,
        }

    def comparable_dict(self) -> dict:
        """Trace content with wall-clock timing stripped (for determinism checks)."""
        d = self.to_dict()
        for r in d["records"]:
            r.pop("wall_ms")
        return d


def _cost_layer_cnots(ansatz: Ansatz) -> int:
    """Adopted convention: 2 CNOTs per weight-2 term of the data-register copy."""
    n_data = ansatz.n_data
    return 2 * sum(
        1
        for _, p in ansatz.cost_operator.terms
        if p.weight == 2 and p.support[-1] < n_data
    )


def cnot_count(ansatz: Ansatz) -> int:
    """Two-qubit gate count of the circuit under the documented convention.

    vqe: ``n_data * n_ancilla`` reference CNOTs plus 2 per weight-2
    generator (weight-1 generators are free). qaoa/baseline: one CNOT per
    singlet pair, then per layer the cost-layer CNOTs plus the mixer cost
    (2 for a Pauli word, ``3 n_data`` for the entangler).
    """
    if ansatz.flavor == "vqe":
        return ansatz.n_data * ansatz.n_ancilla + sum(
            op.cnot_cost for op in ansatz.generators
        )
    per_cost = _cost_layer_cnots(ansatz)
    return ansatz.n_data + sum(per_cost + op.cnot_cost for op in ansatz.generators)


@dataclass(frozen=True)
class VqeSettings:
    pool: tuple[PoolOperator, ...]
    epsilon: float
    max_iterations: int = MAX_VQE_ITERATIONS
    record_pool_gradients: bool = False

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


@dataclass(frozen=True)
class QaoaSettings:
    pool: tuple[PoolOperator, ...]
    cost_operator: HermitianOperator
    layer_budget: int
    record_pool_gradients: bool = False

    def __post_init__(self):
        if not 0 <= self.layer_budget <= MAX_QAOA_LAYERS:
            raise ValueError(f"layer budget must be in [0, {MAX_QAOA_LAYERS}]")


def _trace_metadata(ansatz: Ansatz) -> dict:
    return {
        "n_data": ansatz.n_data,
        "n_ancilla": ansatz.n_ancilla,
        "layer_order": "first listed layer applied first",
        "cnot_convention": CNOT_CONVENTION,
    }


def _pool_scan(
    state: StateVector, pool: tuple[PoolOperator, ...], ctx: ObjectiveContext
) -> np.ndarray:
    """Candidate gradient of every pool operator at ``state``.

    Batched evaluation of the same quantity :func:`candidate_gradient` /
    :func:`sum_generator_gradient` compute one at a time (their equality is
    pinned by tests): columns hold the +-pi/4 rotated states, and the
    expectation of ``rho(state) - T`` in each column gives the shifts.
    """
    base = state.amplitudes
    rho = partial_trace_ancilla_raw(base, state.n_data, state.n_ancilla)
    w = rho - ctx.target.matrix
    terms: list[tuple[int, float, PauliString]] = []
    for j, op in enumerate(pool):
        if op.kind == "pauli":
            terms.append((j, 1.0, op.pauli))
        else:
            terms.extend((j, c, p) for c, p in op.operator.terms)
    shifted = np.empty((state.dim, 2 * len(terms)), dtype=np.complex128)
    for col, (_, _, p) in enumerate(terms):
        src, ph = pauli_action_tables(state.n_total, p.support, p.letters)
        shifted[:, 2 * col] = pauli_rotate_raw(base, src, ph, np.pi / 4)
        shifted[:, 2 * col + 1] = pauli_rotate_raw(base, src, ph, -np.pi / 4)
    expectations = _data_expectations(shifted, w, state.n_data)
    differences = expectations[0::2] - expectations[1::2]
    gradients = np.zeros(len(pool))
    for (j, c, _), diff in zip(terms, differences):
        gradients[j] += c * diff
    return gradients


def _argmax_with_ties(gradients: np.ndarray) -> int:
    """Largest |gradient|; differences below 1e-12 count as ties, first wins."""
    magnitudes = np.abs(gradients)
    best = float(magnitudes.max())
    for j, m in enumerate(magnitudes):
        if best - m < TIE_TOLERANCE:
            return j
    raise AssertionError("unreachable")


def adapt_vqe_run(
    settings: VqeSettings,
    ctx: ObjectiveContext,
    fidelity_target: GibbsTarget,
    seed: int,
) -> tuple[Ansatz, AdaptTrace]:
    """Grow a Pauli-rotation ansatz until the pool-gradient norm drops below epsilon.

    Each iteration scans every pool candidate at the current optimized
    state, appends the largest-|gradient| generator with its new parameter
    at 0 (which reproduces the previous state exactly, so the objective can
    only improve), and re-optimizes all parameters.
    """
    rng = np.random.default_rng(seed)
    reference, angles = vqe_reference_state(ctx.n_data, ctx.n_ancilla, rng)
    ansatz = Ansatz(
        flavor="vqe",
        n_data=ctx.n_data,
        n_ancilla=ctx.n_ancilla,
        reference=reference,
        reference_spec={"kind": "random_y", "angles": [float(a) for a in angles]},
    )
    target_dm = fidelity_target.as_density_matrix()
    params = np.zeros(0)
    cnots = ctx.n_data * ctx.n_ancilla

    t0 = time.perf_counter()
    state = ansatz.prepare(params)
    obj = objective(partial_trace_ancilla(state), ctx)
    fid = fidelity(partial_trace_ancilla(state), target_dm)
    records = [
        IterationRecord(
            0, None, None, None, obj, fid, cnots, (time.perf_counter() - t0) * 1e3
        )
    ]
    history: list[list[float]] | None = (
        [] if settings.record_pool_gradients else None
    )

    termination = "max_iters"
    pool_norm = None
    stall_count = 0
    prev_objective = obj
    for iteration in range(1, settings.max_iterations + 1):
        t0 = time.perf_counter()
        state = ansatz.prepare(params)
        gradients = _pool_scan(state, settings.pool, ctx)
        if history is not None:
            history.append([float(g) for g in gradients])
        pool_norm = float(np.linalg.norm(gradients))
        if pool_norm < settings.epsilon:
            termination = "threshold"
            break
        chosen = _argmax_with_ties(gradients)
        ansatz.generators.append(settings.pool[chosen])
        cnots += settings.pool[chosen].cnot_cost
        init = np.append(params, 0.0)
        result = optimize_fixed_ansatz(ansatz, ctx, init)
        params = result.parameters
        ansatz.parameters = params
        state = ansatz.prepare(params)
        fid = fidelity(partial_trace_ancilla(state), target_dm)
        records.append(
            IterationRecord(
                iteration,
                settings.pool[chosen].label,
                float(gradients[chosen]),
                pool_norm,
                result.objective,
                fid,
                cnots,
                (time.perf_counter() - t0) * 1e3,
            )
        )
        if prev_objective - result.objective < STALL_IMPROVEMENT:
            stall_count += 1
            if stall_count >= STALL_LIMIT:
                termination = "stalled"
                break
        else:
            stall_count = 0
        prev_objective = result.objective

    ansatz.parameters = params
    trace = AdaptTrace(
        flavor="vqe",
        seed=seed,
        gamma0=None,
        records=records,
        termination=termination,
        generator_labels=[op.label for op in ansatz.generators],
        final_parameters=[float(p) for p in params],
        final_objective=records[-1].objective,
        final_fidelity=records[-1].fidelity,
        final_pool_gradient_norm=pool_norm,
        reference_spec=ansatz.reference_spec,
        metadata=_trace_metadata(ansatz),
        pool_gradient_history=history,
    )
    return ansatz, trace


def _grow_layered_ansatz(
    settings: QaoaSettings,
    ctx: ObjectiveContext,
    fidelity_target: GibbsTarget,
    gamma0: float,
    seed: int,
    flavor: str,
    select: bool,
) -> tuple[Ansatz, AdaptTrace]:
    if not 0.0 <= gamma0 <= np.pi / 2:
        raise ValueError("gamma0 must lie in [0, pi/2]")
    ansatz = Ansatz(
        flavor=flavor,
        n_data=ctx.n_data,
        n_ancilla=ctx.n_ancilla,
        reference=singlet_reference_state(ctx.n_data),
        reference_spec={"kind": "singlet"},
        cost_operator=settings.cost_operator,
    )
    target_dm = fidelity_target.as_density_matrix()
    entangler = settings.pool[-1]
    if not select and entangler.kind != "sum_entangler":
        raise ValueError("baseline runs need the entangler in the pool")
    params = np.zeros(0)
    per_cost = _cost_layer_cnots(ansatz)
    cnots = ctx.n_data

    t0 = time.perf_counter()
    state = ansatz.prepare(params)
    obj = objective(partial_trace_ancilla(state), ctx)
    fid = fidelity(partial_trace_ancilla(state), target_dm)
    records = [
        IterationRecord(
            0, None, None, None, obj, fid, cnots, (time.perf_counter() - t0) * 1e3
        )
    ]
    history: list[list[float]] | None = (
        [] if settings.record_pool_gradients else None
    )

    pool_norm = None
    for layer in range(1, settings.layer_budget + 1):
        t0 = time.perf_counter()
        selection_gradient = None
        if select:
            scan_raw = ansatz._apply_cost_raw(ansatz._build_raw(params), gamma0)
            scan_state = ansatz.reference.with_amplitudes(scan_raw)
            gradients = _pool_scan(scan_state, settings.pool, ctx)
            if history is not None:
                history.append([float(g) for g in gradients])
            pool_norm = float(np.linalg.norm(gradients))
            chosen_index = _argmax_with_ties(gradients)
            chosen = settings.pool[chosen_index]
            selection_gradient = float(gradients[chosen_index])
        else:
            chosen = entangler
        ansatz.generators.append(chosen)
        cnots += per_cost + chosen.cnot_cost
        init = np.concatenate([params, [gamma0, 0.0]])
        result = optimize_fixed_ansatz(ansatz, ctx, init)
        params = result.parameters
        ansatz.parameters = params
        state = ansatz.prepare(params)
        fid = fidelity(partial_trace_ancilla(state), target_dm)
        records.append(
            IterationRecord(
                layer,
                chosen.label,
                selection_gradient,
                pool_norm,
                result.objective,
                fid,
                cnots,
                (time.perf_counter() - t0) * 1e3,
            )
        )

    ansatz.parameters = params
    trace = AdaptTrace(
        flavor=flavor,
        seed=seed,
        gamma0=float(gamma0),
        records=records,
        termination="max_iters",
        generator_labels=[op.label for op in ansatz.generators],
        final_parameters=[float(p) for p in params],
        final_objective=records[-1].objective,
        final_fidelity=records[-1].fidelity,
        final_pool_gradient_norm=pool_norm,
        reference_spec=ansatz.reference_spec,
        metadata=_trace_metadata(ansatz),
        pool_gradient_history=history,
    )
    return ansatz, trace


def adapt_qaoa_run(
    settings: QaoaSettings,
    ctx: ObjectiveContext,
    fidelity_target: GibbsTarget,
    gamma0: float,
    seed: int,
) -> tuple[Ansatz, AdaptTrace]:
    """Grow the layered ansatz for a fixed layer budget, one mixer per layer.

    Candidate mixers are ranked by the magnitude of the alpha-gradient
    evaluated at (alpha = 0, gamma = gamma0) on top of the optimized
    previous layers; gamma0 stays constant throughout the run. The new layer
    is initialized at (gamma0, 0), which leaves the objective unchanged
    because the cost unitary commutes with the target, so the optimized
    objective is nonincreasing across layers.
    """
    return _grow_layered_ansatz(
        settings, ctx, fidelity_target, gamma0, seed, "qaoa", select=True
    )


def baseline_qaoa_run(
    settings: QaoaSettings,
    ctx: ObjectiveContext,
    fidelity_target: GibbsTarget,
    gamma0: float,
    seed: int,
) -> tuple[Ansatz, AdaptTrace]:
    """Fixed-mixer comparison ansatz: every layer uses the pair entangler."""
    return _grow_layered_ansatz(
        settings, ctx, fidelity_target, gamma0, seed, "baseline", select=False
    )


@dataclass
class RestartOutcome:
    ansatz: Ansatz
    trace: AdaptTrace
    restart_index: int
    traces: list[AdaptTrace]
    failures: list[tuple[int, str]]


def restart_postselect(
    run: Callable[[int], tuple[Ansatz, AdaptTrace]], n_restarts: int
) -> RestartOutcome:
    """Run ``run(restart_index)`` n times and keep the best final objective.

    Ties (exact equality) go to the smaller CNOT count, then the earlier
    restart. Individual failures are recorded; only all restarts failing is
    an error.
    """
    if n_restarts < 1:
        raise ValueError("need at least one restart")
    outcomes: list[tuple[int, Ansatz, AdaptTrace]] = []
    traces: list[AdaptTrace] = []
    failures: list[tuple[int, str]] = []
    for index in range(n_restarts):
        try:
            ansatz, trace = run(index)
        except NumericalFailure as exc:
            failures.append((index, str(exc)))
            continue
        outcomes.append((index, ansatz, trace))
        traces.append(trace)
    if not outcomes:
        raise NumericalFailure(
            f"all {n_restarts} restarts failed: {failures}"
        )
    best_index, best_ansatz, best_trace = min(
        outcomes,
        key=lambda item: (
            item[2].final_objective,
            item[2].records[-1].cnot_count,
            item[0],
        ),
    )
    return RestartOutcome(best_ansatz, best_trace, best_index, traces, failures)

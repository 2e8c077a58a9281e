"""Circuit intermediate representation and its two semantics.

A classifier is a circuit (gates interleaved with noise sites) plus a labeled
POVM.  States evolve forward through ``apply_circuit``; observables evolve
backward through ``adjoint_apply``.  The two are duals:

    tr(M . apply_circuit(c, rho)) == tr(adjoint_apply(c, M) . rho)

Gates are stored as their small 2**k-dim matrices and embedded into the full
space only at application time, so memory stays at one 2**n-by-2**n state.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Union

import numpy as np

from .errors import DimensionMismatch, ValidationError
from .linalg import (
    DensityMatrix,
    PureState,
    _density_trusted,
    as_complex_matrix,
    embed_operator,
    hermitize,
    is_hermitian,
    partial_trace,
    state_matrix,
)

if TYPE_CHECKING:
    from .noise import QuantumChannel

UNITARY_ATOL = 1e-9
COMPLETENESS_ATOL = 1e-8
PROB_CLIP_ATOL = 1e-9


@dataclass(frozen=True, eq=False)
class Gate:
    """A unitary on ``qubits`` (first listed qubit = most significant bit)."""

    name: str
    qubits: tuple[int, ...]
    params: tuple[float, ...] = ()
    matrix: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        m = as_complex_matrix(self.matrix, f"gate {self.name}")
        object.__setattr__(self, "matrix", m)
        k = len(self.qubits)
        if len(set(self.qubits)) != k:
            raise ValidationError(f"gate {self.name} repeats a qubit: {self.qubits}")
        if m.shape != (2**k, 2**k):
            raise DimensionMismatch(
                f"gate {self.name} matrix shape {m.shape} does not fit {k} qubit(s)"
            )
        err = np.max(np.abs(m.conj().T @ m - np.eye(2**k)))
        if err > 100 * UNITARY_ATOL:
            raise ValidationError(f"gate {self.name} is not unitary (residual {err:.2e})")


@dataclass(frozen=True, eq=False)
class NoiseSite:
    """A Kraus channel attached to ``qubits`` at instruction index ``position``."""

    channel: "QuantumChannel"
    qubits: tuple[int, ...]
    position: int = 0

    def __post_init__(self):
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        if len(set(self.qubits)) != len(self.qubits):
            raise ValidationError(f"noise site repeats a qubit: {self.qubits}")
        if self.channel.dim != 2 ** len(self.qubits):
            raise DimensionMismatch(
                f"channel dimension {self.channel.dim} does not fit qubits {self.qubits}"
            )


Instruction = Union[Gate, NoiseSite]


@dataclass(frozen=True, eq=False)
class Circuit:
    """An ordered instruction list over ``n_qubits`` wires.

    Noise-site ``position`` fields are renumbered to match list order, so the
    stored circuit always satisfies the position/order invariant.
    """

    n_qubits: int
    instructions: tuple[Instruction, ...] = ()

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValidationError("n_qubits must be positive")
        fixed = []
        for i, ins in enumerate(self.instructions):
            if not isinstance(ins, (Gate, NoiseSite)):
                raise ValidationError(f"unsupported instruction type {type(ins).__name__}")
            if any(q < 0 or q >= self.n_qubits for q in ins.qubits):
                raise DimensionMismatch(
                    f"instruction {i} targets qubits {ins.qubits}, "
                    f"circuit has {self.n_qubits}"
                )
            if isinstance(ins, NoiseSite) and ins.position != i:
                ins = dataclasses.replace(ins, position=i)
            fixed.append(ins)
        object.__setattr__(self, "instructions", tuple(fixed))

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    def gates_only(self) -> bool:
        return all(isinstance(ins, Gate) for ins in self.instructions)


@dataclass(frozen=True, eq=False)
class Measurement:
    """Labeled POVM {M_c}: PSD operators on the measured qubits, summing to I.

    Operators are stored on the measured-qubit subspace and embedded by
    identity elsewhere; ``measured_qubits`` defaults to all qubits.
    """

    n_qubits: int
    labels: tuple
    operators: tuple[np.ndarray, ...]
    measured_qubits: tuple[int, ...] = None

    def __post_init__(self):
        if self.measured_qubits is None:
            object.__setattr__(self, "measured_qubits", tuple(range(self.n_qubits)))
        else:
            object.__setattr__(
                self, "measured_qubits", tuple(int(q) for q in self.measured_qubits)
            )
        object.__setattr__(self, "labels", tuple(self.labels))
        ops = tuple(as_complex_matrix(op, "measurement operator") for op in self.operators)
        object.__setattr__(self, "operators", ops)

        mq = self.measured_qubits
        if len(set(mq)) != len(mq) or any(q < 0 or q >= self.n_qubits for q in mq):
            raise ValidationError(f"bad measured qubits {mq} for n={self.n_qubits}")
        if len(self.labels) != len(ops) or not ops:
            raise ValidationError("need one operator per label (at least one)")
        if len(set(self.labels)) != len(self.labels):
            raise ValidationError("measurement labels must be distinct")
        d = 2 ** len(mq)
        total = np.zeros((d, d), dtype=np.complex128)
        for lab, op in zip(self.labels, ops):
            if op.shape != (d, d):
                raise DimensionMismatch(
                    f"operator for label {lab!r} has shape {op.shape}, expected {(d, d)}"
                )
            if not is_hermitian(op):
                raise ValidationError(f"operator for label {lab!r} is not Hermitian")
            lo = float(np.linalg.eigvalsh(hermitize(op))[0])
            if lo < -10 * 1e-9:
                raise ValidationError(
                    f"operator for label {lab!r} is not PSD (min eigenvalue {lo:.2e})"
                )
            total += op
        if np.max(np.abs(total - np.eye(d))) > 10 * COMPLETENESS_ATOL:
            raise ValidationError("measurement operators do not sum to the identity")

    @property
    def n_labels(self) -> int:
        return len(self.labels)

    def full_operator(self, index: int) -> np.ndarray:
        """The 2**n-dim embedding of operator ``index``."""
        return embed_operator(self.operators[index], self.measured_qubits, self.n_qubits)

    def label_index(self, label) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ValidationError(f"label {label!r} not in {self.labels}") from None


@dataclass(frozen=True, eq=False)
class QmlModel:
    """A classifier: noisy circuit plus measurement."""

    circuit: Circuit
    measurement: Measurement

    def __post_init__(self):
        if self.circuit.n_qubits != self.measurement.n_qubits:
            raise DimensionMismatch(
                f"circuit has {self.circuit.n_qubits} qubits, "
                f"measurement expects {self.measurement.n_qubits}"
            )

    @property
    def n_qubits(self) -> int:
        return self.circuit.n_qubits


# ---------------------------------------------------------------------------
# semantics
# ---------------------------------------------------------------------------


def _tensorize(op: np.ndarray, k: int) -> np.ndarray:
    return op.reshape((2,) * (2 * k))


def _apply_rows(t: np.ndarray, op_t: np.ndarray, qubits, n: int) -> np.ndarray:
    """Contract op into the row axes ``qubits`` of a (2,)*2n tensor."""
    k = len(qubits)
    out = np.tensordot(op_t, t, axes=(list(range(k, 2 * k)), list(qubits)))
    current = list(qubits) + [ax for ax in range(2 * n) if ax not in qubits]
    return out.transpose([current.index(ax) for ax in range(2 * n)])


def _apply_cols(t: np.ndarray, op: np.ndarray, qubits, n: int) -> np.ndarray:
    """Right-multiply by op^dagger on the column axes ``qubits``."""
    k = len(qubits)
    cols = [n + q for q in qubits]
    conj_t = _tensorize(op.conj(), k)
    out = np.tensordot(conj_t, t, axes=(list(range(k, 2 * k)), cols))
    current = cols + [ax for ax in range(2 * n) if ax not in cols]
    return out.transpose([current.index(ax) for ax in range(2 * n)])


def _conjugate_by(t: np.ndarray, op: np.ndarray, qubits, n: int) -> np.ndarray:
    """rho -> op rho op^dagger on the given qubits (tensor in/out)."""
    k = len(qubits)
    return _apply_cols(_apply_rows(t, _tensorize(op, k), qubits, n), op, qubits, n)


def _kraus_map(t: np.ndarray, kraus, qubits, n: int) -> np.ndarray:
    acc = None
    for e in kraus:
        term = _conjugate_by(t, e, qubits, n)
        acc = term if acc is None else acc + term
    return acc


def _evolve_matrix(circuit: Circuit, matrix: np.ndarray, adjoint: bool) -> np.ndarray:
    n = circuit.n_qubits
    t = matrix.reshape((2,) * (2 * n))
    seq = reversed(circuit.instructions) if adjoint else circuit.instructions
    for ins in seq:
        if isinstance(ins, Gate):
            op = ins.matrix.conj().T if adjoint else ins.matrix
            t = _conjugate_by(t, op, ins.qubits, n)
        else:
            kraus = ins.channel.kraus
            if adjoint:
                kraus = [e.conj().T for e in kraus]
            t = _kraus_map(t, kraus, ins.qubits, n)
    return t.reshape(circuit.dim, circuit.dim)


def apply_circuit(circuit: Circuit, rho: DensityMatrix | PureState) -> DensityMatrix:
    """Forward (Schroedinger) semantics: gates as U rho U^dag, noise as Kraus sums."""
    mat = state_matrix(rho)
    if mat.shape[0] != circuit.dim:
        raise DimensionMismatch(
            f"state dimension {mat.shape[0]} does not match circuit dimension {circuit.dim}"
        )
    out = _evolve_matrix(circuit, mat, adjoint=False)
    tr = float(np.trace(out).real)
    if abs(tr - 1.0) > 1e-8:
        raise ValidationError(f"channel application broke the trace: {tr!r}")
    return _density_trusted(circuit.n_qubits, hermitize(out))


def adjoint_apply(circuit: Circuit, observable: np.ndarray) -> np.ndarray:
    """Heisenberg semantics: reverse order, U^dag . U for gates, sum E^dag . E for noise."""
    obs = as_complex_matrix(observable, "observable")
    if obs.shape[0] != circuit.dim:
        raise DimensionMismatch(
            f"observable dimension {obs.shape[0]} does not match circuit dimension {circuit.dim}"
        )
    if not is_hermitian(obs, atol=100 * 1e-9):
        raise ValidationError("observable is not Hermitian")
    return hermitize(_evolve_matrix(circuit, obs, adjoint=True))


def circuit_unitary(circuit: Circuit) -> np.ndarray:
    """Product of per-gate embeddings, for gate-only circuits."""
    if not circuit.gates_only():
        raise ValidationError("circuit_unitary is defined for gate-only circuits")
    u = np.eye(circuit.dim, dtype=np.complex128)
    for gate in circuit.instructions:
        u = embed_operator(gate.matrix, gate.qubits, circuit.n_qubits) @ u
    return u


def predict_distribution(model: QmlModel, rho: DensityMatrix | PureState) -> np.ndarray:
    """Output distribution {tr(M_c E(rho))}_c, clipped into [0, 1]."""
    out = apply_circuit(model.circuit, rho)
    meas = model.measurement
    reduced = partial_trace(out.matrix, meas.measured_qubits, model.n_qubits)
    probs = np.array(
        [float(np.trace(op @ reduced).real) for op in meas.operators], dtype=np.float64
    )
    return _clip_probs(probs)


def _clip_probs(probs: np.ndarray) -> np.ndarray:
    if np.min(probs) < -100 * PROB_CLIP_ATOL or np.max(probs) > 1 + 100 * PROB_CLIP_ATOL:
        raise ValidationError(f"probabilities out of range: {probs!r}")
    s = float(probs.sum())
    if abs(s - 1.0) > 1e-8:
        raise ValidationError(f"probabilities sum to {s!r}")
    return np.clip(probs, 0.0, 1.0)


def classify(model: QmlModel, rho: DensityMatrix | PureState):
    """Label with the highest probability; ties break to the lowest label index."""
    probs = predict_distribution(model, rho)
    return model.measurement.labels[int(np.argmax(probs))]


def adjoint_observables(model: QmlModel) -> list[np.ndarray]:
    """Heisenberg-evolved measurement operators E^dag(M_c), one per label.

    With these, the model's output distribution on rho is just
    ``[tr(O_c rho) for O_c in adjoint_observables(model)]``; verification
    reuses them heavily.
    """
    return [
        adjoint_apply(model.circuit, model.measurement.full_operator(i))
        for i in range(model.measurement.n_labels)
    ]


def distribution_from_observables(observables, rho) -> np.ndarray:
    mat = state_matrix(rho)
    probs = np.array(
        [float(np.einsum("ij,ji->", o, mat).real) for o in observables], dtype=np.float64
    )
    return _clip_probs(probs)

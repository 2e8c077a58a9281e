"""Dense complex linear algebra: quantum states and the distance measures
between them.

Conventions used throughout the package:

* all matrices are dense ``complex128`` numpy arrays;
* qubit 0 is the most significant bit of a basis index, so the basis state
  ``|q0 q1 ... q_{n-1}>`` has index ``q0 * 2**(n-1) + ... + q_{n-1}`` and a
  state vector of length ``2**n`` reshapes to an ``(2,) * n`` tensor whose
  axis ``i`` is qubit ``i``;
* Hermiticity / positivity / unit-trace are enforced to ``1e-9``; eigenvalues
  in ``[-1e-9, 0)`` are treated as numerical noise and clipped to zero before
  matrix square roots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, ValidationError

HERM_ATOL = 1e-9
TRACE_ATOL = 1e-9
PSD_ATOL = 1e-9
NORM_ATOL = 1e-9


def as_complex_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce ``a`` to a finite, square-agnostic 2-D complex128 array."""
    m = np.asarray(a, dtype=np.complex128)
    if m.ndim != 2:
        raise ValidationError(f"{name} must be 2-dimensional, got shape {m.shape}")
    if not (np.all(np.isfinite(m.real)) and np.all(np.isfinite(m.imag))):
        raise ValidationError(f"{name} contains non-finite entries")
    return m


def is_hermitian(a: np.ndarray, atol: float = HERM_ATOL) -> bool:
    return a.shape[0] == a.shape[1] and bool(np.all(np.abs(a - a.conj().T) <= atol))


def hermitize(a: np.ndarray) -> np.ndarray:
    """Symmetrize away floating-point Hermiticity drift."""
    return (a + a.conj().T) / 2


def _require_qubit_dim(dim: int, what: str) -> int:
    n = int(round(math.log2(dim))) if dim > 0 else -1
    if n < 0 or 2**n != dim:
        raise ValidationError(f"{what} dimension {dim} is not a power of two")
    return n


@dataclass(frozen=True, eq=False)
class PureState:
    """An n-qubit pure state: a unit-norm complex vector of length 2**n."""

    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=np.complex128).reshape(-1)
        object.__setattr__(self, "amplitudes", amps)
        if self.n_qubits < 1:
            raise ValidationError("n_qubits must be positive")
        if amps.shape[0] != 2**self.n_qubits:
            raise DimensionMismatch(
                f"expected {2**self.n_qubits} amplitudes, got {amps.shape[0]}"
            )
        if not (np.all(np.isfinite(amps.real)) and np.all(np.isfinite(amps.imag))):
            raise ValidationError("amplitudes contain non-finite entries")
        norm_sq = float(np.vdot(amps, amps).real)
        if abs(norm_sq - 1.0) > 10 * NORM_ATOL:
            raise ValidationError(f"state is not normalized: |psi|^2 = {norm_sq!r}")

    @classmethod
    def from_amplitudes(cls, amps) -> "PureState":
        amps = np.asarray(amps, dtype=np.complex128).reshape(-1)
        return cls(_require_qubit_dim(amps.shape[0], "state"), amps)

    def density(self) -> "DensityMatrix":
        """The rank-1 density matrix |psi><psi|."""
        return _density_trusted(self.n_qubits, np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """An n-qubit mixed state: PSD, unit-trace, 2**n-by-2**n."""

    n_qubits: int
    matrix: np.ndarray

    def __post_init__(self):
        m = as_complex_matrix(self.matrix, "density matrix")
        object.__setattr__(self, "matrix", m)
        d = 2**self.n_qubits
        if self.n_qubits < 1:
            raise ValidationError("n_qubits must be positive")
        if m.shape != (d, d):
            raise DimensionMismatch(f"expected shape {(d, d)}, got {m.shape}")
        if not is_hermitian(m):
            raise ValidationError("density matrix is not Hermitian (tol 1e-9)")
        tr = complex(np.trace(m))
        if abs(tr - 1.0) > 10 * TRACE_ATOL:
            raise ValidationError(f"density matrix trace {tr!r} differs from 1")
        lo = float(np.linalg.eigvalsh(hermitize(m))[0])
        if lo < -10 * PSD_ATOL:
            raise ValidationError(f"density matrix has negative eigenvalue {lo!r}")

    @classmethod
    def from_matrix(cls, m) -> "DensityMatrix":
        m = as_complex_matrix(m, "density matrix")
        return cls(_require_qubit_dim(m.shape[0], "density matrix"), m)

    @property
    def dim(self) -> int:
        return 2**self.n_qubits


def _density_trusted(n_qubits: int, matrix: np.ndarray) -> DensityMatrix:
    # Internal fast path for matrices that are PSD/unit-trace by construction
    # (channel outputs, rank-1 projectors). Skips the O(d^3) validation.
    dm = object.__new__(DensityMatrix)
    object.__setattr__(dm, "n_qubits", n_qubits)
    object.__setattr__(dm, "matrix", matrix)
    return dm


def state_matrix(state: PureState | DensityMatrix) -> np.ndarray:
    """Density-matrix array of either state kind."""
    if isinstance(state, PureState):
        return np.outer(state.amplitudes, state.amplitudes.conj())
    return state.matrix


# ---------------------------------------------------------------------------
# distance / similarity functionals
# ---------------------------------------------------------------------------


def _matching_matrices(rho, sigma) -> tuple[np.ndarray, np.ndarray]:
    a, b = state_matrix(rho), state_matrix(sigma)
    if a.shape != b.shape:
        raise DimensionMismatch(f"state dimensions differ: {a.shape} vs {b.shape}")
    return a, b


def trace_distance(rho, sigma) -> float:
    """Trace distance D(rho, sigma) = 1/2 ||rho - sigma||_1.

    Computed as half the sum of absolute eigenvalues of the (Hermitian)
    difference.  Returns a value in [0, 1].
    """
    a, b = _matching_matrices(rho, sigma)
    eigs = np.linalg.eigvalsh(hermitize(a - b))
    return float(min(max(0.5 * np.abs(eigs).sum(), 0.0), 1.0))


def psd_sqrt(m: np.ndarray) -> np.ndarray:
    """Principal square root of a PSD matrix via eigendecomposition.

    Eigenvalues in [-1e-9, 0) are clipped to zero; anything more negative is
    rejected as a genuinely non-PSD input.
    """
    vals, vecs = np.linalg.eigh(hermitize(m))
    if vals[0] < -10 * PSD_ATOL:
        raise ValidationError(f"matrix is not PSD: min eigenvalue {vals[0]!r}")
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.conj().T


def fidelity(rho, sigma) -> float:
    """Uhlmann fidelity F(rho, sigma) = (tr sqrt(sqrt(rho) sigma sqrt(rho)))**2.

    Equals |<psi|phi>|**2 for pure inputs; F = 1 iff the states coincide.
    """
    a, b = _matching_matrices(rho, sigma)
    ra = psd_sqrt(a)
    inner = hermitize(ra @ b @ ra)
    vals = np.linalg.eigvalsh(inner)
    if vals[0] < -10 * PSD_ATOL:
        raise ValidationError(f"fidelity kernel not PSD: min eigenvalue {vals[0]!r}")
    vals = np.clip(vals, 0.0, None)
    # rank-deficient inputs leave O(eps) noise eigenvalues whose square roots
    # would dominate the error budget; a relative cutoff removes them
    vals[vals < vals.max() * 1e-13] = 0.0
    root_sum = float(np.sqrt(vals).sum())
    return float(min(max(root_sum * root_sum, 0.0), 1.0))


def tv_distance(p, q) -> float:
    """Total variation distance 1/2 sum_c |p_c - q_c| between distributions."""
    p = np.asarray(p, dtype=np.float64).reshape(-1)
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    if p.shape != q.shape:
        raise DimensionMismatch(f"distribution lengths differ: {p.shape[0]} vs {q.shape[0]}")
    for name, v in (("p", p), ("q", q)):
        s = float(v.sum())
        if abs(s - 1.0) > 100 * NORM_ATOL:
            raise ValidationError(f"{name} is not normalized: sum = {s!r}")
    return float(min(max(0.5 * np.abs(p - q).sum(), 0.0), 1.0))


def hermitian_extremes(h: np.ndarray) -> tuple[float, PureState, float, PureState]:
    """Extreme eigenpairs (lambda_min, v_min, lambda_max, v_max) of a Hermitian matrix.

    The returned vectors are unit eigenvectors; dimension must be a power of
    two so they can be reported as states.
    """
    h = as_complex_matrix(h, "observable")
    if not is_hermitian(h, atol=100 * HERM_ATOL):
        raise ValidationError("observable is not Hermitian (tol 1e-9)")
    n = _require_qubit_dim(h.shape[0], "observable")
    vals, vecs = np.linalg.eigh(hermitize(h))
    v_min = PureState(n, vecs[:, 0])
    v_max = PureState(n, vecs[:, -1])
    return float(vals[0]), v_min, float(vals[-1]), v_max


# ---------------------------------------------------------------------------
# operator embedding and partial trace
# ---------------------------------------------------------------------------


def embed_operator(op: np.ndarray, qubits: tuple[int, ...], n_qubits: int) -> np.ndarray:
    """Embed a 2**k-dim operator acting on ``qubits`` into the full 2**n space.

    ``qubits`` gives the operator's axis order (first listed qubit is the
    operator's most significant bit); identity acts everywhere else.
    """
    op = as_complex_matrix(op, "operator")
    k = len(qubits)
    if op.shape != (2**k, 2**k):
        raise DimensionMismatch(f"operator shape {op.shape} does not fit {k} qubit(s)")
    if len(set(qubits)) != k:
        raise ValidationError(f"duplicate qubit indices in {qubits}")
    if any(q < 0 or q >= n_qubits for q in qubits):
        raise DimensionMismatch(f"qubit indices {qubits} out of range for n={n_qubits}")
    if k == n_qubits and tuple(qubits) == tuple(range(n_qubits)):
        return op.copy()
    rest = [q for q in range(n_qubits) if q not in qubits]
    full = np.kron(op, np.eye(2 ** len(rest), dtype=np.complex128))
    # kron order is (listed qubits..., rest...); permute both row and column
    # axes back to natural qubit order.
    t = full.reshape((2,) * (2 * n_qubits))
    order = list(qubits) + rest
    perm = [order.index(q) for q in range(n_qubits)]
    t = t.transpose(perm + [n_qubits + p for p in perm])
    return np.ascontiguousarray(t.reshape(2**n_qubits, 2**n_qubits))


def partial_trace(matrix: np.ndarray, keep: tuple[int, ...], n_qubits: int) -> np.ndarray:
    """Trace out all qubits except ``keep`` (result axes follow ``keep`` order)."""
    d_keep = 2 ** len(keep)
    t = matrix.reshape((2,) * (2 * n_qubits))
    drop = [q for q in range(n_qubits) if q not in keep]
    for i, q in enumerate(sorted(drop, reverse=True)):
        t = np.trace(t, axis1=q, axis2=q + (n_qubits - i))
    # surviving axes are in ascending qubit order; permute to ``keep`` order
    m = len(keep)
    ascending = sorted(keep)
    perm = [ascending.index(q) for q in keep]
    t = t.transpose(perm + [m + p for p in perm])
    return np.ascontiguousarray(t.reshape(d_keep, d_keep))

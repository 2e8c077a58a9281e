"""Global robustness through the model's Lipschitz constant (dense path).

The total variation distance between output distributions decomposes over
label subsets:  d(A(rho), A(sigma)) = max_S sum_{c in S} (p_c - q_c)  with
S ranging over nonempty proper subsets.  For a fixed S the worst ratio
against the trace distance is the spectral spread of the Heisenberg-evolved
subset observable, so

    K* = max_S  [ lambda_max - lambda_min ]( E^dag(M_S) ),   M_S = sum_{c in S} M_c,

attained by the pair of extreme eigenvectors (the adversarial kernel).  The
model is (eps, delta)-globally robust iff delta >= K* eps.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .circuit import QmlModel, adjoint_apply
from .errors import DenseCapExceeded, ValidationError
from .linalg import DensityMatrix, PureState, _density_trusted, hermitian_extremes
from .util import parallel_map

#: largest model dimension the dense eigensolver will accept
DENSE_DIM_CAP = 2**12

#: subset enumeration is exponential in the label count
MAX_LABELS = 10


@dataclass(frozen=True)
class LipschitzResult:
    """The constant, the subset attaining it, and the kernel pair."""

    k_star: float
    witness_subset: tuple
    kernel: tuple[PureState, PureState]  # (psi ~ lambda_max, phi ~ lambda_min)
    eigenvalues: tuple[float, float]  # (lambda_max, lambda_min), for degeneracy checks
    stats: dict = field(default_factory=dict)


@dataclass(frozen=True)
class GlobalVerdict:
    robust: bool
    epsilon: float
    delta: float
    k_star: float
    kernel: tuple[PureState, PureState] | None = None


def label_subsets(n_labels: int):
    """All nonempty proper label-index subsets."""
    if n_labels > MAX_LABELS:
        raise ValidationError(
            f"subset enumeration over {n_labels} labels is not supported (cap {MAX_LABELS})"
        )
    for size in range(1, n_labels):
        yield from itertools.combinations(range(n_labels), size)


def subset_observable(model: QmlModel, subset: tuple[int, ...]) -> np.ndarray:
    """Heisenberg-evolved subset observable E^dag(M_S), dense."""
    meas = model.measurement
    m_s = sum(meas.full_operator(i) for i in subset)
    return adjoint_apply(model.circuit, m_s)


def lipschitz_dense(model: QmlModel, dense_cap: int = DENSE_DIM_CAP) -> LipschitzResult:
    """K* by full eigendecomposition of every subset observable.

    Refuses models above ``dense_cap`` (default 2**12); those belong on the
    tensor-network path.
    """
    if model.circuit.dim > dense_cap:
        raise DenseCapExceeded(
            f"model dimension {model.circuit.dim} exceeds the dense cap {dense_cap}; "
            "use lipschitz_tn instead"
        )
    subsets = list(label_subsets(model.measurement.n_labels))

    def solve(subset):
        lo, v_lo, hi, v_hi = hermitian_extremes(subset_observable(model, subset))
        return hi - lo, subset, (v_hi, v_lo), (hi, lo)

    results = parallel_map(solve, subsets)
    gap, subset, kernel, eigs = max(results, key=lambda r: (r[0], tuple(-i for i in r[1])))
    labels = tuple(model.measurement.labels[i] for i in subset)
    return LipschitzResult(
        k_star=float(min(max(gap, 0.0), 1.0)),
        witness_subset=labels,
        kernel=kernel,
        eigenvalues=eigs,
        stats={"engine": "dense", "subsets": len(subsets)},
    )


def global_decision(k: LipschitzResult, eps: float, delta: float) -> GlobalVerdict:
    """(eps, delta)-global robustness holds iff delta >= K* eps.

    On failure the kernel pair is attached; it seeds infinitely many
    violating state pairs (see ``kernel_expand``).
    """
    if eps <= 0 or delta <= 0:
        raise ValidationError("eps and delta must be positive")
    robust = delta >= k.k_star * eps
    return GlobalVerdict(
        robust=robust,
        epsilon=eps,
        delta=delta,
        k_star=k.k_star,
        kernel=None if robust else k.kernel,
    )


def kernel_expand(kernel: tuple[PureState, PureState], t: float) -> tuple[DensityMatrix, DensityMatrix]:
    """Mix along the kernel: a violating pair at trace distance t * D(psi, phi).

    With tau the even mixture of the kernel projectors,

        rho_t = t |psi><psi| + (1-t) tau,   sigma_t = t |phi><phi| + (1-t) tau,

    the difference rho_t - sigma_t is t times the kernel difference, so both
    the trace distance and the output TV distance scale by t and the ratio
    stays K*.
    """
    if not 0.0 < t <= 1.0:
        raise ValidationError(f"t must be in (0, 1], got {t!r}")
    psi, phi = kernel
    if psi.n_qubits != phi.n_qubits:
        raise ValidationError("kernel states have different dimensions")
    a = psi.amplitudes
    b = phi.amplitudes
    overlap = np.vdot(a, b)
    if abs(overlap) > 1.0 - 1e-9:
        raise ValidationError("degenerate kernel: the two states coincide")
    if abs(overlap) > 1e-12:
        b = b - overlap * a
        b = b / np.linalg.norm(b)
    p_psi = np.outer(a, a.conj())
    p_phi = np.outer(b, b.conj())
    tau = 0.5 * (p_psi + p_phi)
    rho_t = t * p_psi + (1.0 - t) * tau
    sigma_t = t * p_phi + (1.0 - t) * tau
    n = psi.n_qubits
    return _density_trusted(n, rho_t), _density_trusted(n, sigma_t)

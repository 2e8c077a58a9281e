"""Per-state local robustness: a sound fast check and exact checks with
counterexample extraction, plus dataset-level aggregation.

A state rho with label c is epsilon-robust when every sigma in the fidelity
neighbourhood  N_eps(rho) = { sigma : 1 - F(rho, sigma) <= eps }  receives
label c.  Three deciders cooperate:

* ``rough_check``    sound under-approximation: certifies robustness when the
                     probability gap exceeds 2*sqrt(eps) (Fuchs-van de Graaf
                     plus contractivity of channels and measurements); it
                     never certifies non-robustness.
* ``exact_check_pure``   maximizes |<psi|phi>|^2 subject to phi preferring
                     some other label, via Lagrangian eigen-iteration with a
                     certified dual bound.
* ``exact_check_mixed``  the semidefinite route: the constrained fidelity
                     maximum collapses, through Uhlmann purification, onto
                     the same one-constraint problem in dimension d**2, so
                     mixed states get the identical certified machinery.

Every non-robust verdict carries a counterexample that is re-validated
(fidelity bound and a strictly different predicted label) before it is
returned; solver trouble degrades to "undecided", never to "robust".
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .circuit import (
    QmlModel,
    adjoint_observables,
    classify,
    distribution_from_observables,
)
from .errors import DimensionMismatch, ValidationError
from .linalg import (
    DensityMatrix,
    PureState,
    _density_trusted,
    fidelity,
    hermitize,
    psd_sqrt,
    state_matrix,
)
from .util import parallel_map

ROBUST = "robust"
NON_ROBUST = "non_robust"
UNDECIDED_BY_ROUGH = "undecided_by_rough"
UNDECIDED = "undecided"

#: slack allowed when re-validating a counterexample's fidelity bound
CEX_FIDELITY_SLACK = 1e-6

_CONSTRAINT_TOL = 1e-8


@dataclass(frozen=True)
class Neighborhood:
    """The fidelity ball N_eps(rho): dissimilarity 1 - F(rho, sigma) <= eps."""

    epsilon: float

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValidationError(f"epsilon must be in (0, 1), got {self.epsilon!r}")

    @staticmethod
    def dissimilarity(rho, sigma) -> float:
        return 1.0 - fidelity(rho, sigma)

    def contains(self, rho, sigma) -> bool:
        return self.dissimilarity(rho, sigma) <= self.epsilon


@dataclass(frozen=True, eq=False)
class LabeledState:
    """An input state with its ground-truth label."""

    state: PureState | DensityMatrix
    label: object


@dataclass(frozen=True, eq=False)
class LocalVerdict:
    """Outcome of one per-state check.

    ``margin`` is method-specific: the probability gap for the rough check,
    the dissimilarity 1 - F* of the nearest adversarial state for the exact
    checks.  A non-robust verdict always carries a validated counterexample
    (the adversarial state, labeled with its predicted label).
    """

    status: str
    margin: float
    counterexample: LabeledState | None = None
    method: str = ""

    def __post_init__(self):
        if self.status == NON_ROBUST and self.counterexample is None:
            raise ValidationError("non-robust verdicts must carry a counterexample")


def _label_index(model: QmlModel, label) -> int:
    return model.measurement.label_index(label)


def _misclassified_verdict(model, x, probs, ci, method) -> LocalVerdict:
    pred = int(np.argmax(probs))
    gap = float(probs[ci] - probs[pred])
    cex = LabeledState(x.state, model.measurement.labels[pred])
    return LocalVerdict(NON_ROBUST, margin=gap if gap < 0 else 0.0, counterexample=cex,
                        method=method)


def rough_check(model: QmlModel, x: LabeledState, eps: float,
                observables=None) -> LocalVerdict:
    """Sound fast check: robust when the gap beats 2*sqrt(eps).

    Soundness chain: 1 - F <= eps implies D <= sqrt(eps) (Fuchs-van de Graaf),
    and channels plus measurement are contractive, so output distributions
    move by at most sqrt(eps) in total variation; a gap above 2*sqrt(eps)
    therefore cannot be closed inside the neighbourhood.  States that fail
    the condition may still be robust, hence "undecided_by_rough".
    """
    Neighborhood(eps)
    obs = observables if observables is not None else adjoint_observables(model)
    ci = _label_index(model, x.label)
    probs = distribution_from_observables(obs, x.state)
    if int(np.argmax(probs)) != ci:
        return _misclassified_verdict(model, x, probs, ci, "rough")
    others = np.delete(probs, ci)
    gap = float(probs[ci] - others.max())
    status = ROBUST if gap > 2.0 * np.sqrt(eps) else UNDECIDED_BY_ROUGH
    return LocalVerdict(status, margin=gap, method="rough")


# ---------------------------------------------------------------------------
# exact check, pure states (one-constraint QCQP by Lagrangian eigen-iteration)
# ---------------------------------------------------------------------------


def _top_eigpair(m: np.ndarray):
    vals, vecs = np.linalg.eigh(m)
    return float(vals[-1]), vecs[:, -1]


def _constraint_value(phi: np.ndarray, a: np.ndarray) -> float:
    return float(np.vdot(phi, a @ phi).real)


def _mix_to_boundary(phi_lo, phi_hi, a, lo_target=0.0, hi_target=_CONSTRAINT_TOL):
    """Walk the segment between an infeasible and a feasible vector until the
    constraint value lands in [lo_target, hi_target]."""
    ov = np.vdot(phi_lo, phi_hi)
    if abs(ov) > 1e-12:
        phi_hi = phi_hi * (ov.conjugate() / abs(ov))

    def vec(t):
        v = (1.0 - t) * phi_lo + t * phi_hi
        return v / np.linalg.norm(v)

    t_lo, t_hi = 0.0, 1.0
    for _ in range(200):
        t = 0.5 * (t_lo + t_hi)
        v = vec(t)
        c = _constraint_value(v, a)
        if lo_target <= c <= hi_target:
            return v
        if c < lo_target:
            t_lo = t
        else:
            t_hi = t
    return vec(t_hi)


def _pure_feasible_max_overlap(psi: np.ndarray, a: np.ndarray, ctol=_CONSTRAINT_TOL):
    """max |<psi|phi>|^2 over unit phi with <phi|A|phi> >= 0.

    Returns (f_primal, phi, f_dual) with f_primal attained by the feasible
    ``phi`` and f_dual a certified upper bound (weak duality of the rank-one
    objective against lambda_max(|psi><psi| + mu A) for mu >= 0), or None
    when the constraint set is empty (A negative definite).
    """
    a = hermitize(a)
    evals, evecs = np.linalg.eigh(a)
    lam_max = float(evals[-1])
    if _constraint_value(psi, a) >= 0.0:
        return 1.0, psi.copy(), 1.0

    if lam_max < -ctol:
        return None
    if lam_max <= ctol:
        # Feasible set collapses onto the top (near-null) eigenspace.
        mask = evals >= -ctol
        basis = evecs[:, mask]
        w = basis.conj().T @ psi
        nrm = float(np.linalg.norm(w))
        if nrm < 1e-12:
            return 0.0, basis[:, 0], 0.0
        phi = basis @ (w / nrm)
        f = nrm * nrm
        return f, phi, f

    proj = np.outer(psi, psi.conj())
    f_dual = 1.0

    def top(mu):
        return _top_eigpair(proj + mu * a)

    mu_hi = 1.0
    g_hi, phi_hi = top(mu_hi)
    c_hi = _constraint_value(phi_hi, a)
    # weak duality: F* <= lambda_max(|psi><psi| + mu A) for every mu >= 0
    f_dual = min(f_dual, g_hi)
    guard = 0
    while c_hi <= 0.0:
        mu_hi *= 2.0
        guard += 1
        if guard > 200:
            # numerically indistinguishable from the null-space case
            return _pure_feasible_max_overlap(psi, a - lam_max * np.eye(a.shape[0]), ctol)
        g_hi, phi_hi = top(mu_hi)
        c_hi = _constraint_value(phi_hi, a)

    mu_lo, phi_lo = 0.0, psi.copy()
    for _ in range(200):
        if c_hi <= ctol:
            break
        mu = 0.5 * (mu_lo + mu_hi)
        g, phi = top(mu)
        c = _constraint_value(phi, a)
        # every evaluated mu yields a dual bound g(mu) >= F*
        f_dual = min(f_dual, g)
        if c >= 0.0:
            mu_hi, phi_hi, c_hi = mu, phi, c
        else:
            mu_lo, phi_lo = mu, phi
        if mu_hi - mu_lo <= 1e-15 * max(1.0, mu_hi):
            break

    if _constraint_value(phi_hi, a) > ctol:
        phi_star = _mix_to_boundary(phi_lo, phi_hi, a)
    else:
        phi_star = phi_hi
    f_primal = float(abs(np.vdot(psi, phi_star)) ** 2)
    # the boundary vector is feasible up to ctol; keep the certified ordering
    f_dual = max(f_dual, f_primal)
    return f_primal, phi_star, f_dual


def _strictify_pure(psi, phi_star, phi_feasible, a, eps):
    """Nudge a boundary optimizer into the strict-preference region.

    Classification ties break toward the lowest label index, so a
    counterexample must satisfy <phi|A|phi> > 0 strictly; we bisect between
    the boundary vector and a strictly feasible one, keeping the fidelity
    bound eps + slack intact.
    """
    target = 1e-11
    for _ in range(40):
        cand = _mix_to_boundary(phi_star, phi_feasible, a,
                                lo_target=target, hi_target=target * 100)
        if _constraint_value(cand, a) > 0.0 and \
                1.0 - float(abs(np.vdot(psi, cand)) ** 2) <= eps + CEX_FIDELITY_SLACK:
            return cand
        target /= 10.0
    return None


def exact_check_pure(model: QmlModel, x: LabeledState, eps: float,
                     observables=None) -> LocalVerdict:
    """Exact decision for pure inputs.

    For every candidate label l != c, maximize the overlap with psi subject
    to phi preferring l (the Heisenberg observable A_l = E^dag(M_l - M_c) is
    nonnegative on phi).  Non-robust iff the best dissimilarity 1 - F* is
    within eps, with the optimizer returned as a validated counterexample.
    """
    Neighborhood(eps)
    if not isinstance(x.state, PureState):
        raise ValidationError("exact_check_pure expects a pure state")
    obs = observables if observables is not None else adjoint_observables(model)
    ci = _label_index(model, x.label)
    psi = x.state.amplitudes
    probs = distribution_from_observables(obs, x.state)
    if int(np.argmax(probs)) != ci:
        return _misclassified_verdict(model, x, probs, ci, "exact_pure")

    best = None  # (f_primal, phi, a, label_index)
    worst_dual = 0.0
    for li in range(len(obs)):
        if li == ci:
            continue
        a = obs[li] - obs[ci]
        res = _pure_feasible_max_overlap(psi, a)
        if res is None:
            continue
        f_primal, phi, f_dual = res
        worst_dual = max(worst_dual, f_dual)
        if best is None or f_primal > best[0]:
            best = (f_primal, phi, a, li)

    if best is None:
        # no other label is attainable anywhere: the classifier is constant c
        return LocalVerdict(ROBUST, margin=1.0, method="exact_pure")

    f_primal, phi, a, li = best
    f_bar = max(0.0, 1.0 - f_primal)
    if f_bar <= eps:
        lam, vecs = np.linalg.eigh(a)
        cand = _strictify_pure(psi, phi, vecs[:, -1], a, eps)
        if cand is not None:
            cex_state = PureState(x.state.n_qubits, cand)
            cex_label = classify(model, cex_state)
            if cex_label != x.label and \
                    1.0 - fidelity(x.state, cex_state) <= eps + CEX_FIDELITY_SLACK:
                return LocalVerdict(
                    NON_ROBUST, margin=f_bar,
                    counterexample=LabeledState(cex_state, cex_label),
                    method="exact_pure",
                )
        return LocalVerdict(UNDECIDED, margin=f_bar, method="exact_pure")
    if 1.0 - worst_dual > eps:
        return LocalVerdict(ROBUST, margin=f_bar, method="exact_pure")
    # the certified interval straddles eps: refuse to certify either way
    return LocalVerdict(UNDECIDED, margin=f_bar, method="exact_pure")


# ---------------------------------------------------------------------------
# exact check, mixed states (fidelity SDP via Uhlmann purification)
# ---------------------------------------------------------------------------

#: the exact mixed-state solver works in dimension 4**n
MIXED_EXACT_MAX_QUBITS = 5


def _mixed_feasible_max_fidelity(rho_mat: np.ndarray, a: np.ndarray):
    """max F(rho, sigma) over states sigma with tr(A sigma) >= 0.

    The semidefinite maximization collapses onto a pure-state problem:
    by Uhlmann's theorem, with u_rho = vec(sqrt(rho)) a fixed purification,

        F* = max |<u_rho|u>|^2  s.t.  ||u|| = 1,  <u|(A x I)|u> >= 0,

    because every unit vector u purifies its own partial trace and the
    constraint only sees that partial trace.  This is the same one-constraint
    problem the pure-state solver certifies, in dimension d**2, and the
    optimizing sigma is recovered as the partial trace of u*.

    Returns (f_primal, sigma, f_dual) with f_primal = F(rho, sigma) achieved
    and f_dual a certified upper bound on F*, or None when no state prefers
    the candidate label (A negative definite).
    """
    d = rho_mat.shape[0]
    sqrt_rho = psd_sqrt(rho_mat)
    u_rho = sqrt_rho.reshape(-1)
    nrm = float(np.linalg.norm(u_rho))
    u_rho = u_rho / nrm  # trace(rho) is 1 up to fp noise
    a_big = np.kron(a, np.eye(d, dtype=np.complex128))
    res = _pure_feasible_max_overlap(u_rho, a_big)
    if res is None:
        return None
    _, u_star, f_dual = res
    m = u_star.reshape(d, d)
    sigma = hermitize(m @ m.conj().T)
    sigma = sigma / float(np.trace(sigma).real)
    f_primal = fidelity(
        _density_trusted_dim(rho_mat), _density_trusted_dim(sigma)
    )
    return min(f_primal, 1.0), sigma, max(f_dual, f_primal)


def _density_trusted_dim(matrix: np.ndarray) -> DensityMatrix:
    n = int(round(np.log2(matrix.shape[0])))
    return _density_trusted(n, matrix)


def _strictify_mixed(model, rho_state, sigma: DensityMatrix, a, eps, true_label):
    """Blend toward the top eigenvector of A until the label strictly flips."""
    _, vecs = np.linalg.eigh(hermitize(a))
    v = vecs[:, -1]
    bump = np.outer(v, v.conj())
    eta = 1e-9
    for _ in range(40):
        cand_m = (1.0 - eta) * sigma.matrix + eta * bump
        cand = _density_trusted(sigma.n_qubits, hermitize(cand_m))
        if classify(model, cand) != true_label and \
                1.0 - fidelity(rho_state, cand) <= eps + CEX_FIDELITY_SLACK:
            return cand
        eta *= 4.0
        if eta > 0.5:
            break
    return None


def exact_check_mixed(model: QmlModel, x: LabeledState, eps: float,
                      observables=None) -> LocalVerdict:
    """Exact decision for mixed inputs via the fidelity SDP.

    Per candidate label l != c we maximize F(rho, sigma) over states sigma
    preferring l (tr(A_l sigma) >= 0); the semidefinite problem is solved
    exactly through its Uhlmann purification (see
    ``_mixed_feasible_max_fidelity``), which certifies both the achieved
    fidelity and a dual upper bound.  Non-robust iff 1 - F* <= eps, with a
    re-validated counterexample; an uncertifiable boundary degrades to
    "undecided", never to "robust".
    """
    Neighborhood(eps)
    obs = observables if observables is not None else adjoint_observables(model)
    ci = _label_index(model, x.label)
    rho_mat = state_matrix(x.state)
    n = model.n_qubits
    if rho_mat.shape[0] != model.circuit.dim:
        raise DimensionMismatch("state dimension does not match the model")
    if n > MIXED_EXACT_MAX_QUBITS:
        raise ValidationError(
            f"the exact mixed-state check is capped at {MIXED_EXACT_MAX_QUBITS} qubits"
        )
    probs = distribution_from_observables(obs, x.state)
    if int(np.argmax(probs)) != ci:
        return _misclassified_verdict(model, x, probs, ci, "exact_mixed")

    best = None  # (f_primal, sigma, a)
    worst_dual = 0.0
    for li in range(len(obs)):
        if li == ci:
            continue
        a = hermitize(obs[li] - obs[ci])
        res = _mixed_feasible_max_fidelity(rho_mat, a)
        if res is None:
            continue
        f_primal, sigma, f_dual = res
        worst_dual = max(worst_dual, f_dual)
        if best is None or f_primal > best[0]:
            best = (f_primal, sigma, a)

    if best is None:
        return LocalVerdict(ROBUST, margin=1.0, method="exact_mixed")

    f_primal, sigma, a = best
    f_bar = max(0.0, 1.0 - f_primal)
    if f_bar <= eps:
        rho_dm = _density_trusted(n, rho_mat)
        sigma_dm = _density_trusted(n, sigma)
        cand = _strictify_mixed(model, rho_dm, sigma_dm, a, eps, x.label)
        if cand is not None:
            cex_label = classify(model, cand)
            return LocalVerdict(
                NON_ROBUST, margin=f_bar,
                counterexample=LabeledState(cand, cex_label),
                method="exact_mixed",
            )
        return LocalVerdict(UNDECIDED, margin=f_bar, method="exact_mixed")
    if 1.0 - worst_dual > eps:
        return LocalVerdict(ROBUST, margin=f_bar, method="exact_mixed")
    return LocalVerdict(UNDECIDED, margin=f_bar, method="exact_mixed")


# ---------------------------------------------------------------------------
# dataset-level verification
# ---------------------------------------------------------------------------


@dataclass
class LocalReport:
    """Aggregated verification outcome over a dataset."""

    eps: float
    mode: str
    verdicts: list[LocalVerdict] = field(default_factory=list)
    times: list[float] = field(default_factory=list)

    @property
    def n_states(self) -> int:
        return len(self.verdicts)

    @property
    def n_robust(self) -> int:
        return sum(1 for v in self.verdicts if v.status == ROBUST)

    @property
    def robust_accuracy(self) -> float:
        """Percentage of certified-robust states."""
        return 100.0 * self.n_robust / self.n_states

    def counterexamples(self, data: list[LabeledState]) -> list[dict]:
        """Serializable dump of every adversarial example found."""
        out = []
        for i, v in enumerate(self.verdicts):
            if v.status != NON_ROBUST:
                continue
            cex = v.counterexample
            state = cex.state
            if isinstance(state, PureState):
                coded = [[float(z.real), float(z.imag)] for z in state.amplitudes]
            else:
                coded = [
                    [[float(z.real), float(z.imag)] for z in row] for row in state.matrix
                ]
            out.append(
                {
                    "index": i,
                    "original_label": data[i].label,
                    "adversarial_label": cex.label,
                    "f_bar": 1.0 - fidelity(data[i].state, state),
                    "state": coded,
                }
            )
        return out

    def to_dict(self) -> dict:
        counts = {
            ROBUST: 0,
            NON_ROBUST: 0,
            UNDECIDED_BY_ROUGH: 0,
            UNDECIDED: 0,
        }
        for v in self.verdicts:
            counts[v.status] += 1
        return {
            "eps": self.eps,
            "mode": self.mode,
            "n_states": self.n_states,
            "robust_accuracy": self.robust_accuracy,
            "counts": counts,
            "verdicts": [
                {"index": i, "status": v.status, "margin": v.margin, "method": v.method}
                for i, v in enumerate(self.verdicts)
            ],
        }


def verify_dataset(model: QmlModel, data: list[LabeledState], eps: float,
                   mode: str = "accurate") -> LocalReport:
    """Check every state; in accurate mode escalate rough-undecided states
    to the exact solver matching their kind.

    Robust accuracy counts only certified-robust states, so the rough mode
    under-approximates the accurate mode by construction.  Misclassified
    inputs are non-robust with a zero-perturbation counterexample.
    """
    if not data:
        raise ValidationError("empty dataset")
    if mode not in ("rough", "accurate"):
        raise ValidationError(f"unknown mode {mode!r}")
    for i, x in enumerate(data):
        if state_matrix(x.state).shape[0] != model.circuit.dim:
            raise DimensionMismatch(f"state {i} does not match the model dimension")
    obs = adjoint_observables(model)

    def check(x: LabeledState) -> tuple[LocalVerdict, float]:
        t0 = time.perf_counter()
        verdict = rough_check(model, x, eps, observables=obs)
        if mode == "accurate" and verdict.status == UNDECIDED_BY_ROUGH:
            if isinstance(x.state, PureState):
                verdict = exact_check_pure(model, x, eps, observables=obs)
            else:
                verdict = exact_check_mixed(model, x, eps, observables=obs)
        return verdict, time.perf_counter() - t0

    results = parallel_map(check, data)
    report = LocalReport(eps=eps, mode=mode)
    for verdict, dt in results:
        report.verdicts.append(verdict)
        report.times.append(dt)
    return report

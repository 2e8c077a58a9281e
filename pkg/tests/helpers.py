"""Shared generators and independent oracles for the test suite.

Everything here deliberately avoids the package's own embedding / evolution
code paths where it serves as an oracle: embeddings go through explicit
basis-index bookkeeping, unitaries through plain kron products.
"""

from __future__ import annotations

import math

import numpy as np

from qrobust import (
    Circuit,
    DensityMatrix,
    Gate,
    LabeledState,
    Measurement,
    NoiseSite,
    PureState,
    QmlModel,
    standard_channel,
)
from qrobust.qasm import builtin_gate

GATE_1Q = ("x", "y", "z", "h", "s", "sdg", "t", "tdg")
ROT_1Q = ("rx", "ry", "rz", "u1")
NOISE_KINDS = ("bit_flip", "phase_flip", "depolarizing", "mixed")


def rand_pure(rng, n) -> PureState:
    d = 2**n
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return PureState(n, v / np.linalg.norm(v))


def rand_dm(rng, n, rank=None) -> DensityMatrix:
    d = 2**n
    r = rank or d
    a = rng.normal(size=(d, r)) + 1j * rng.normal(size=(d, r))
    m = a @ a.conj().T
    return DensityMatrix(n, m / np.trace(m))


def rand_herm(rng, d) -> np.ndarray:
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return (a + a.conj().T) / 2


def projective_z(n, qubit=0) -> Measurement:
    p0 = np.diag([1.0, 0.0]).astype(complex)
    p1 = np.diag([0.0, 1.0]).astype(complex)
    return Measurement(n, (0, 1), (p0, p1), (qubit,))


def random_povm(rng, dim, n_outcomes):
    """Random POVM: normalize random PSD parts by S^(-1/2) . S^(-1/2)."""
    parts = []
    for _ in range(n_outcomes):
        a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        parts.append(a @ a.conj().T)
    s = sum(parts)
    vals, vecs = np.linalg.eigh(s)
    inv_sqrt = (vecs * (1.0 / np.sqrt(vals))) @ vecs.conj().T
    return tuple(inv_sqrt @ p @ inv_sqrt for p in parts)


def random_gate(rng, n) -> Gate:
    roll = rng.integers(0, 12)
    if roll < 4:
        name = GATE_1Q[int(rng.integers(0, len(GATE_1Q)))]
        return builtin_gate(name, (), (int(rng.integers(0, n)),))
    if roll < 7 or n < 2:
        name = ROT_1Q[int(rng.integers(0, len(ROT_1Q)))]
        angle = float(rng.uniform(-2 * math.pi, 2 * math.pi))
        return builtin_gate(name, (angle,), (int(rng.integers(0, n)),))
    if roll < 9:
        name, n_params = (("u2", 2), ("u3", 3))[int(rng.integers(0, 2))]
        params = tuple(float(a) for a in rng.uniform(-math.pi, math.pi, size=n_params))
        return builtin_gate(name, params, (int(rng.integers(0, n)),))
    if roll == 11 and n >= 3:
        a, b, c = rng.choice(n, size=3, replace=False)
        return builtin_gate("ccx", (), (int(a), int(b), int(c)))
    name = ("cx", "cz", "swap")[int(rng.integers(0, 3))]
    a, b = rng.choice(n, size=2, replace=False)
    return builtin_gate(name, (), (int(a), int(b)))


def random_gate_circuit(rng, n, depth) -> Circuit:
    return Circuit(n, tuple(random_gate(rng, n) for _ in range(depth)))


def random_noisy_model(rng, n, depth, n_noise, p_hi=0.08, measured=None) -> QmlModel:
    instrs = list(random_gate_circuit(rng, n, depth).instructions)
    for _ in range(n_noise):
        pos = int(rng.integers(0, len(instrs) + 1))
        kind = NOISE_KINDS[int(rng.integers(0, len(NOISE_KINDS)))]
        ch = standard_channel(kind, float(rng.uniform(0.001, p_hi)))
        instrs.insert(pos, NoiseSite(ch, (int(rng.integers(0, n)),)))
    circ = Circuit(n, tuple(instrs))
    meas = projective_z(n, measured if measured is not None else 0)
    return QmlModel(circ, meas)


def random_labeled_pure(rng, model, k) -> list[LabeledState]:
    """Random pure states labeled by the model's own prediction."""
    from qrobust import classify

    out = []
    for _ in range(k):
        s = rand_pure(rng, model.n_qubits)
        out.append(LabeledState(s, classify(model, s)))
    return out


# ---------------------------------------------------------------------------
# independent oracles
# ---------------------------------------------------------------------------


def kron_embed_oracle(op: np.ndarray, qubits, n: int) -> np.ndarray:
    """Embed by explicit basis-index arithmetic (no package code)."""
    d = 2**n
    k = len(qubits)
    rest = [q for q in range(n) if q not in qubits]
    full = np.zeros((d, d), dtype=complex)

    def bits_of(x, width):
        return [(x >> (width - 1 - i)) & 1 for i in range(width)]

    def index_from(bits):
        out = 0
        for b in bits:
            out = (out << 1) | b
        return out

    for col in range(d):
        cb = bits_of(col, n)
        sub_col = index_from([cb[q] for q in qubits])
        for sub_row in range(2**k):
            amp = op[sub_row, sub_col]
            if amp == 0:
                continue
            rb = list(cb)
            srb = bits_of(sub_row, k)
            for i, q in enumerate(qubits):
                rb[q] = srb[i]
            full[index_from(rb), col] += amp
    return full


def unitary_oracle(circuit: Circuit) -> np.ndarray:
    """Hand-built product of embedded gate matrices."""
    u = np.eye(circuit.dim, dtype=complex)
    for gate in circuit.instructions:
        u = kron_embed_oracle(gate.matrix, gate.qubits, circuit.n_qubits) @ u
    return u


def sample_pure_neighbors(rng, psi: PureState, eps: float, k: int) -> np.ndarray:
    """k pure states with dissimilarity 1 - F <= eps, as rows."""
    d = psi.amplitudes.shape[0]
    base = psi.amplitudes
    chi = rng.normal(size=(k, d)) + 1j * rng.normal(size=(k, d))
    overlap = chi @ base.conj()
    chi = chi - np.outer(overlap, base)
    chi = chi / np.linalg.norm(chi, axis=1, keepdims=True)
    f_bar = eps * rng.uniform(0.0, 1.0, size=k)
    cos_t = np.sqrt(1.0 - f_bar)
    sin_t = np.sqrt(f_bar)
    return cos_t[:, None] * base[None, :] + sin_t[:, None] * chi


def sample_mixed_neighbors(rng, rho: DensityMatrix, eps: float, k: int):
    """Mixed states near rho: shrink random mixtures until 1 - F <= eps."""
    from qrobust import fidelity

    d = rho.matrix.shape[0]
    n = rho.n_qubits
    out = []
    while len(out) < k:
        a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        tau = a @ a.conj().T
        tau = tau / np.trace(tau)
        w = float(rng.uniform(0.0, 1.0))
        for _ in range(30):
            sigma = DensityMatrix(n, (1 - w) * rho.matrix + w * tau)
            if 1.0 - fidelity(rho, sigma) <= eps:
                out.append(sigma)
                break
            w *= 0.5
    return out


def grid_fbar_oracle(model, x, obs=None, coarse=316, fine=220):
    """Independent grid-search oracle for the pure-state exact check (1 qubit).

    Scans the Bloch sphere on a coarse uniform grid (about coarse**2 points,
    ~1e5 by default), then refines around the best feasible cell; a single
    uniform stage would undershoot the constrained optimum linearly in the
    spacing.  Feasibility is the closure of the adversarial region (some
    other label ties or beats the true one).  Returns the best dissimilarity
    1 - F over feasible points, or None when no grid point is feasible.
    """
    from qrobust.circuit import adjoint_observables

    if obs is None:
        obs = adjoint_observables(model)
    ci = model.measurement.label_index(x.label)
    psi = x.state.amplitudes

    def best_on(a_vals, b_vals):
        a, b = np.meshgrid(a_vals, b_vals, indexing="ij")
        grid = np.stack(
            [np.cos(a / 2).ravel(), (np.exp(1j * b) * np.sin(a / 2)).ravel()], axis=1
        )
        probs = np.stack(
            [np.real(np.einsum("ij,bi,bj->b", o, grid.conj(), grid)) for o in obs], axis=1
        )
        others = np.delete(probs, ci, axis=1)
        feasible = others.max(axis=1) >= probs[:, ci]
        if not feasible.any():
            return None
        overlaps = np.abs(grid @ psi.conj()) ** 2
        overlaps[~feasible] = -1.0
        idx = int(np.argmax(overlaps))
        return overlaps[idx], a.ravel()[idx], b.ravel()[idx]

    hit = best_on(np.linspace(0, np.pi, coarse), np.linspace(0, 2 * np.pi, coarse, endpoint=False))
    if hit is None:
        return None
    f_best, a0, b0 = hit
    da = np.pi / (coarse - 1)
    db = 2 * np.pi / coarse
    hit = best_on(
        np.clip(np.linspace(a0 - 2 * da, a0 + 2 * da, fine), 0, np.pi),
        np.linspace(b0 - 2 * db, b0 + 2 * db, fine),
    )
    if hit is not None:
        f_best = max(f_best, hit[0])
    return 1.0 - f_best


# ---------------------------------------------------------------------------
# random OpenQASM program generation (round-trip fodder)
# ---------------------------------------------------------------------------


def random_qasm_program(rng) -> str:
    n = int(rng.integers(1, 5))
    lines = ["OPENQASM 2.0;", 'include "qelib1.inc";', f"qreg q[{n}];"]
    n_meas = int(rng.integers(0, n + 1))
    if n_meas:
        lines.append(f"creg c[{n_meas}];")
    depth = int(rng.integers(1, 12))
    for _ in range(depth):
        g = random_gate(rng, n)
        args = ", ".join(f"q[{q}]" for q in g.qubits)
        if g.params:
            lines.append(f"{g.name}({','.join(repr(p) for p in g.params)}) {args};")
        else:
            lines.append(f"{g.name} {args};")
        if rng.uniform() < 0.1:
            lines.append("barrier q;")
    for i, q in enumerate(rng.permutation(n)[:n_meas]):
        lines.append(f"measure q[{q}] -> c[{i}];")
    return "\n".join(lines) + "\n"


def instructions_equal(a: Circuit, b: Circuit) -> bool:
    if a.n_qubits != b.n_qubits or len(a.instructions) != len(b.instructions):
        return False
    for x, y in zip(a.instructions, b.instructions):
        if type(x) is not type(y):
            return False
        if isinstance(x, Gate):
            if (x.name, x.qubits, x.params) != (y.name, y.qubits, y.params):
                return False
            if not np.allclose(x.matrix, y.matrix, atol=1e-12):
                return False
        else:
            if x.qubits != y.qubits or x.position != y.position:
                return False
    return True

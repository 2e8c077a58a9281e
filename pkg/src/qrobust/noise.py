"""Kraus channels: standard noise families, user-defined channels, and the
machinery that injects them into circuits.

Standard single-qubit families (level ``p``):

* bit flip        {sqrt(1-p) I, sqrt(p) X}
* phase flip      {sqrt(1-p) I, sqrt(p) Z}
* depolarizing    {sqrt(1-p) I, sqrt(p/3) X, sqrt(p/3) Y, sqrt(p/3) Z}
* mixed           bit flip o phase flip o depolarizing, all at level p,
                  composed in that order and reduced to a minimal Kraus set

Random injection (the NISQ simulation) is deterministic in the seed: each
qubit gets an independent substream, so results do not depend on thread
count or qubit iteration order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circuit import Circuit, Gate, NoiseSite
from .errors import DimensionMismatch, ValidationError
from .linalg import as_complex_matrix

COMPLETENESS_ATOL = 1e-8

_I2 = np.eye(2, dtype=np.complex128)
_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)

STANDARD_KINDS = ("bit_flip", "phase_flip", "depolarizing", "mixed")

#: short tags used by the text renderer and reports
KIND_TAGS = {
    "bit_flip": "BF",
    "phase_flip": "PF",
    "depolarizing": "DC",
    "mixed": "MIX",
    "custom": "CUST",
}


def canonical_kind(kind: str) -> str:
    """Accept hyphenated spellings ('bit-flip') as well."""
    k = kind.strip().lower().replace("-", "_").replace(" ", "_")
    aliases = {"bitflip": "bit_flip", "phaseflip": "phase_flip", "depol": "depolarizing"}
    return aliases.get(k, k)


@dataclass(frozen=True, eq=False)
class QuantumChannel:
    """A CPTP map given by Kraus operators {E_k} with sum E_k^dag E_k = I."""

    kraus: tuple[np.ndarray, ...]
    kind: str = "custom"
    p: float | None = None

    def __post_init__(self):
        ops = tuple(as_complex_matrix(e, "Kraus operator") for e in self.kraus)
        object.__setattr__(self, "kraus", ops)
        if not ops:
            raise ValidationError("channel needs at least one Kraus operator")
        d = ops[0].shape[0]
        for e in ops:
            if e.shape != (d, d):
                raise DimensionMismatch("Kraus operators must share one square dimension")
        residual = completeness_residual(ops)
        if residual > 10 * COMPLETENESS_ATOL:
            raise ValidationError(
                f"Kraus completeness violated: ||sum E^dag E - I||_inf = {residual:.3e}"
            )
        if self.kind not in STANDARD_KINDS + ("custom",):
            raise ValidationError(f"unknown channel kind {self.kind!r}")
        if self.p is not None and not 0.0 <= self.p <= 1.0:
            raise ValidationError(f"noise level p={self.p!r} outside [0, 1]")

    @property
    def dim(self) -> int:
        return self.kraus[0].shape[0]

    @property
    def tag(self) -> str:
        return KIND_TAGS.get(self.kind, "CUST")


def completeness_residual(kraus) -> float:
    d = kraus[0].shape[0]
    acc = np.zeros((d, d), dtype=np.complex128)
    for e in kraus:
        acc += e.conj().T @ e
    return float(np.max(np.abs(acc - np.eye(d))))


def _pauli_channel(weights: dict[tuple[int, int], float], kind: str, p: float) -> QuantumChannel:
    # keys are (x_bit, z_bit): I=(0,0), X=(1,0), Z=(0,1), Y=(1,1)
    paulis = {(0, 0): _I2, (1, 0): _X, (0, 1): _Z, (1, 1): _Y}
    ops = tuple(
        np.sqrt(w) * paulis[key] for key, w in sorted(weights.items()) if w > 0.0
    )
    return QuantumChannel(ops, kind=kind, p=p)


def _convolve_pauli(w1, w2):
    out: dict[tuple[int, int], float] = {}
    for (a, b), wa in w1.items():
        for (c, d), wb in w2.items():
            key = (a ^ c, b ^ d)
            out[key] = out.get(key, 0.0) + wa * wb
    return out


def standard_channel(kind: str, p: float) -> QuantumChannel:
    """Build one of the standard single-qubit channels at noise level ``p``."""
    kind = canonical_kind(kind)
    if not 0.0 <= p <= 1.0:
        raise ValidationError(f"noise level p={p!r} outside [0, 1]")
    if kind == "bit_flip":
        return _pauli_channel({(0, 0): 1 - p, (1, 0): p}, kind, p)
    if kind == "phase_flip":
        return _pauli_channel({(0, 0): 1 - p, (0, 1): p}, kind, p)
    if kind == "depolarizing":
        w = {(0, 0): 1 - p, (1, 0): p / 3, (1, 1): p / 3, (0, 1): p / 3}
        return _pauli_channel(w, kind, p)
    if kind == "mixed":
        # Sequential composition of the three at equal level; Pauli channels
        # compose by convolving their weights, which keeps the Kraus set
        # minimal (at most four operators) instead of the 16 raw products.
        w = {(0, 0): 1 - p, (1, 0): p / 3, (1, 1): p / 3, (0, 1): p / 3}
        w = _convolve_pauli(w, {(0, 0): 1 - p, (0, 1): p})
        w = _convolve_pauli(w, {(0, 0): 1 - p, (1, 0): p})
        return _pauli_channel(w, "mixed", p)
    raise ValidationError(f"unknown standard channel kind {kind!r}")


def validate_kraus(matrices, kind: str = "custom", p: float | None = None) -> QuantumChannel:
    """Wrap user-supplied Kraus matrices, enforcing the completeness condition."""
    ops = [as_complex_matrix(m, "Kraus operator") for m in matrices]
    if not ops:
        raise ValidationError("empty Kraus list")
    d = ops[0].shape[0]
    for m in ops:
        if m.shape != (d, d):
            raise DimensionMismatch(
                f"Kraus operators must be square and equal-sized, got {m.shape} vs {(d, d)}"
            )
    residual = completeness_residual(ops)
    if residual > 10 * COMPLETENESS_ATOL:
        raise ValidationError(
            f"Kraus completeness violated: ||sum E^dag E - I||_inf = {residual:.3e}"
        )
    return QuantumChannel(tuple(ops), kind=canonical_kind(kind) if kind != "custom" else kind, p=p)


# ---------------------------------------------------------------------------
# noise placement
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RandomNoiseConfig:
    """Configuration for seeded random noise injection.

    ``site_density`` is the expected number of noise sites per qubit (Poisson
    with a floor of one draw per qubit); ``p_range`` bounds the per-site noise
    level; ``kinds`` lists the enabled standard families.
    """

    seed: int
    p_range: tuple[float, float] = (0.001, 0.05)
    site_density: float = 1.0
    kinds: tuple[str, ...] = STANDARD_KINDS

    def __post_init__(self):
        object.__setattr__(self, "seed", int(self.seed))
        lo, hi = (float(self.p_range[0]), float(self.p_range[1]))
        object.__setattr__(self, "p_range", (lo, hi))
        object.__setattr__(self, "kinds", tuple(canonical_kind(k) for k in self.kinds))
        if not 0.0 <= lo <= hi <= 1.0:
            raise ValidationError(f"p_range {self.p_range!r} is not inside [0, 1]")
        if self.site_density <= 0:
            raise ValidationError("site_density must be positive")
        if not self.kinds:
            raise ValidationError("at least one noise kind must be enabled")
        for k in self.kinds:
            if k not in STANDARD_KINDS:
                raise ValidationError(f"unknown noise kind {k!r}")


def _wire_instructions(circuit: Circuit, qubit: int) -> list[int]:
    return [i for i, ins in enumerate(circuit.instructions) if qubit in ins.qubits]


def inject_random_noise(circuit: Circuit, cfg: RandomNoiseConfig) -> Circuit:
    """Insert random single-qubit noise sites, reproducibly.

    Per qubit: draw K ~ Poisson(site_density) with floor 1, then K insertion
    points uniformly over the boundaries of that qubit's wire, each with a
    kind drawn from ``cfg.kinds`` and a level from ``cfg.p_range``.  The
    qubit substreams are independent, so equal (circuit, cfg) pairs give
    identical circuits.
    """
    pending: list[tuple[int, int, int, NoiseSite]] = []
    for q in range(circuit.n_qubits):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(q,)))
        wire = _wire_instructions(circuit, q)
        k = max(1, int(rng.poisson(cfg.site_density)))
        boundaries = rng.integers(0, len(wire) + 1, size=k)
        kind_idx = rng.integers(0, len(cfg.kinds), size=k)
        levels = rng.uniform(cfg.p_range[0], cfg.p_range[1], size=k)
        for j in range(k):
            b = int(boundaries[j])
            if not wire:
                slot = 0
            elif b == 0:
                slot = wire[0]
            else:
                slot = wire[b - 1] + 1
            channel = standard_channel(cfg.kinds[int(kind_idx[j])], float(levels[j]))
            pending.append((slot, q, j, NoiseSite(channel, (q,))))

    pending.sort(key=lambda item: (item[0], item[1], item[2]))
    out: list = []
    cursor = 0
    for slot in range(len(circuit.instructions) + 1):
        while cursor < len(pending) and pending[cursor][0] == slot:
            out.append(pending[cursor][3])
            cursor += 1
        if slot < len(circuit.instructions):
            out.append(circuit.instructions[slot])
    return Circuit(circuit.n_qubits, tuple(out))


def append_noise(circuit: Circuit, channel: QuantumChannel, qubits) -> Circuit:
    """Append noise sites after the last instruction.

    A single-qubit channel is applied to each listed qubit (ascending order);
    a multi-qubit channel must match the full qubit tuple and becomes one site.
    """
    qubits = tuple(int(q) for q in qubits)
    if any(q < 0 or q >= circuit.n_qubits for q in qubits):
        raise DimensionMismatch(f"qubits {qubits} out of range for n={circuit.n_qubits}")
    if not qubits:
        return circuit
    sites: list[NoiseSite]
    if channel.dim == 2:
        sites = [NoiseSite(channel, (q,)) for q in sorted(qubits)]
    elif channel.dim == 2 ** len(qubits):
        sites = [NoiseSite(channel, qubits)]
    else:
        raise DimensionMismatch(
            f"channel dimension {channel.dim} fits neither one qubit nor all of {qubits}"
        )
    return Circuit(circuit.n_qubits, circuit.instructions + tuple(sites))


# ---------------------------------------------------------------------------
# noise sidecar (JSON) for explicit placement
# ---------------------------------------------------------------------------


def channel_to_json(channel: QuantumChannel) -> dict:
    if channel.kind in STANDARD_KINDS:
        return {"kind": channel.kind, "p": channel.p}
    return {
        "kraus": [
            [[[float(z.real), float(z.imag)] for z in row] for row in e] for e in channel.kraus
        ]
    }


def channel_from_json(entry: dict) -> QuantumChannel:
    if "kraus" in entry:
        ops = []
        for mat in entry["kraus"]:
            ops.append(
                np.array(
                    [[complex(re, im) for re, im in row] for row in mat], dtype=np.complex128
                )
            )
        return validate_kraus(ops)
    if "kind" in entry:
        return standard_channel(entry["kind"], float(entry.get("p", 0.0)))
    raise ValidationError(f"noise entry needs 'kind' or 'kraus': {entry!r}")


def noise_spec(circuit: Circuit) -> list[dict]:
    """Serializable description of every noise site in the circuit."""
    spec = []
    for ins in circuit.instructions:
        if isinstance(ins, NoiseSite):
            entry = {"position": ins.position, "qubits": list(ins.qubits)}
            entry.update(channel_to_json(ins.channel))
            spec.append(entry)
    return spec


def strip_noise(circuit: Circuit) -> Circuit:
    return Circuit(
        circuit.n_qubits,
        tuple(ins for ins in circuit.instructions if isinstance(ins, Gate)),
    )


def apply_noise_spec(circuit: Circuit, spec: list[dict]) -> Circuit:
    """Re-insert sidecar noise sites into a gate-only circuit by position."""
    if not circuit.gates_only():
        raise ValidationError("apply_noise_spec expects a gate-only circuit")
    sites = {}
    for entry in spec:
        pos = int(entry["position"])
        if pos in sites:
            raise ValidationError(f"duplicate noise position {pos}")
        sites[pos] = NoiseSite(
            channel_from_json(entry), tuple(int(q) for q in entry["qubits"])
        )
    total = len(circuit.instructions) + len(sites)
    if sites and (min(sites) < 0 or max(sites) >= total):
        raise ValidationError("noise positions do not fit the instruction list")
    out = []
    gate_iter = iter(circuit.instructions)
    for pos in range(total):
        if pos in sites:
            out.append(sites[pos])
        else:
            try:
                out.append(next(gate_iter))
            except StopIteration:
                raise ValidationError("noise positions do not fit the instruction list")
    return Circuit(circuit.n_qubits, tuple(out))

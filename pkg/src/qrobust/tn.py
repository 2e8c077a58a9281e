"""Matrix-free extreme eigenvalues of Heisenberg observables via tensor
networks, scaling global verification past the dense cap.

The network for E^dag(M_S) holds two copies of the circuit: the ket chain
carries the operator's column index through the forward Kraus elements, the
bra chain (conjugated tensors) carries the row index, and each noise site's
Kraus index is one edge shared by its two copies.  The subset observable sits
between the chain tops on the measured qubits; unmeasured qubits pass
through an identity.  Closing the column side with a vector and contracting
evaluates  v -> E^dag(M_S) v  without ever materializing the 2**n x 2**n
observable, which is what the Lanczos iteration needs.

Contraction order is greedy: smallest intermediate first, ties by flops.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circuit import Gate, QmlModel
from .errors import ConvergenceError, DimensionMismatch, ValidationError
from .lipschitz import LipschitzResult, label_subsets
from .linalg import PureState

VEC_NODE_ID = -1


@dataclass(frozen=True, eq=False)
class TensorNode:
    """A dense tensor with one label per axis (labels unique within a node)."""

    id: int
    data: np.ndarray
    axes: tuple[str, ...]

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.complex128)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "axes", tuple(self.axes))
        if data.ndim != len(self.axes):
            raise ValidationError(
                f"node {self.id}: rank {data.ndim} does not match {len(self.axes)} labels"
            )
        if len(set(self.axes)) != len(self.axes):
            raise ValidationError(f"node {self.id}: repeated axis label")

    @property
    def dims(self) -> dict[str, int]:
        return dict(zip(self.axes, self.data.shape))


@dataclass(frozen=True, eq=False)
class TensorNetwork:
    """Nodes glued by shared axis labels (each label on at most two nodes).

    Labels occurring once are the open axes; ``open_rows``/``open_cols`` give
    their qubit ordering for the operator the network represents.
    """

    nodes: tuple[TensorNode, ...]
    open_rows: tuple[str, ...]
    open_cols: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "open_rows", tuple(self.open_rows))
        object.__setattr__(self, "open_cols", tuple(self.open_cols))
        seen: dict[str, int] = {}
        dims: dict[str, int] = {}
        ids = set()
        for node in self.nodes:
            if node.id in ids:
                raise ValidationError(f"duplicate node id {node.id}")
            ids.add(node.id)
            for lab, dim in node.dims.items():
                seen[lab] = seen.get(lab, 0) + 1
                if seen[lab] > 2:
                    raise ValidationError(f"label {lab!r} appears on more than two nodes")
                if lab in dims and dims[lab] != dim:
                    raise ValidationError(f"label {lab!r} connects unequal dimensions")
                dims[lab] = dim
        open_labels = {lab for lab, cnt in seen.items() if cnt == 1}
        declared = set(self.open_rows) | set(self.open_cols)
        if open_labels != declared:
            raise ValidationError(
                f"open axes mismatch: declared {sorted(declared)}, found {sorted(open_labels)}"
            )

    def node_map(self) -> dict[int, TensorNode]:
        return {n.id: n for n in self.nodes}

    def label_dims(self) -> dict[str, int]:
        dims: dict[str, int] = {}
        for n in self.nodes:
            dims.update(n.dims)
        return dims


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------


def build_heisenberg_tn(model: QmlModel, subset: tuple[int, ...]) -> TensorNetwork:
    """Network computing E^dag(M_S) for the label-index subset S."""
    circ = model.circuit
    meas = model.measurement
    n = circ.n_qubits
    nodes: list[TensorNode] = []
    ket = {q: f"c{q}" for q in range(n)}
    bra = {q: f"r{q}" for q in range(n)}
    next_id = 0

    for i, ins in enumerate(circ.instructions):
        qs = ins.qubits
        k = len(qs)
        ket_new = {q: f"k{i}q{q}" for q in qs}
        bra_new = {q: f"b{i}q{q}" for q in qs}
        ket_axes = tuple(ket_new[q] for q in qs) + tuple(ket[q] for q in qs)
        bra_axes = tuple(bra_new[q] for q in qs) + tuple(bra[q] for q in qs)
        if isinstance(ins, Gate):
            ket_data = ins.matrix.reshape((2,) * (2 * k))
            nodes.append(TensorNode(next_id, ket_data, ket_axes))
            next_id += 1
            nodes.append(TensorNode(next_id, ket_data.conj(), bra_axes))
            next_id += 1
        else:
            stack = np.stack(ins.channel.kraus).reshape((-1,) + (2,) * (2 * k))
            kraus_label = f"K{i}"
            nodes.append(TensorNode(next_id, stack, (kraus_label,) + ket_axes))
            next_id += 1
            nodes.append(TensorNode(next_id, stack.conj(), (kraus_label,) + bra_axes))
            next_id += 1
        ket.update(ket_new)
        bra.update(bra_new)

    m_s = sum(meas.operators[i] for i in subset)
    mq = meas.measured_qubits
    obs_axes = tuple(bra[q] for q in mq) + tuple(ket[q] for q in mq)
    nodes.append(
        TensorNode(next_id, np.asarray(m_s, dtype=np.complex128).reshape((2,) * (2 * len(mq))),
                   obs_axes)
    )
    next_id += 1
    for q in range(n):
        if q not in mq:
            nodes.append(
                TensorNode(next_id, np.eye(2, dtype=np.complex128), (bra[q], ket[q]))
            )
            next_id += 1

    return TensorNetwork(
        nodes=tuple(nodes),
        open_rows=tuple(f"r{q}" for q in range(n)),
        open_cols=tuple(f"c{q}" for q in range(n)),
    )


def with_vector(tn: TensorNetwork, v: np.ndarray) -> TensorNetwork:
    """Close the input side with a vector node (axes follow open_cols)."""
    if not tn.open_cols:
        raise ValidationError("network has no open input axes")
    dims = tn.label_dims()
    shape = tuple(dims[lab] for lab in tn.open_cols)
    data = np.asarray(v, dtype=np.complex128).reshape(shape)
    node = TensorNode(VEC_NODE_ID, data, tn.open_cols)
    return TensorNetwork(tn.nodes + (node,), tn.open_rows, ())


# ---------------------------------------------------------------------------
# greedy contraction ordering
# ---------------------------------------------------------------------------


def greedy_order(tn: TensorNetwork) -> list[tuple[int, int, int]]:
    """Pairwise contraction sequence chosen greedily.

    At each step, among adjacent pairs, pick the one whose result tensor is
    smallest (ties: fewest flops, then lowest ids).  Disconnected components
    are each contracted first; outer products come last, smallest first.
    Returns (id_a, id_b, new_id) triples; new ids continue past existing ones.
    """
    meta: dict[int, dict[str, int]] = {n.id: dict(n.dims) for n in tn.nodes}
    if not meta:
        raise ValidationError("empty network")
    next_id = max(meta) + 1
    order: list[tuple[int, int, int]] = []

    def pair_cost(a: int, b: int):
        da, db = meta[a], meta[b]
        shared = set(da) & set(db)
        size = 1
        flops = 1
        for lab, dim in da.items():
            flops *= dim
            if lab not in shared:
                size *= dim
        for lab, dim in db.items():
            if lab not in shared:
                size *= dim
                flops *= dim
        return size, flops

    while len(meta) > 1:
        best = None
        ids = sorted(meta)
        for i, a in enumerate(ids):
            for b in ids[i + 1 :]:
                if not (set(meta[a]) & set(meta[b])):
                    continue
                size, flops = pair_cost(a, b)
                key = (size, flops, a, b)
                if best is None or key < best:
                    best = key
        if best is None:
            # no edges left: outer products, smallest results first
            ids = sorted(meta, key=lambda i: (int(np.prod(list(meta[i].values()) or [1])), i))
            a, b = ids[0], ids[1]
        else:
            a, b = best[2], best[3]
        merged = {
            lab: dim
            for src in (meta[a], meta[b])
            for lab, dim in src.items()
            if not (lab in meta[a] and lab in meta[b])
        }
        del meta[a], meta[b]
        meta[next_id] = merged
        order.append((a, b, next_id))
        next_id += 1
    return order


def order_stats(tn: TensorNetwork, order) -> dict:
    """Peak intermediate size and flops estimate of an order (metadata only)."""
    meta: dict[int, dict[str, int]] = {n.id: dict(n.dims) for n in tn.nodes}
    peak = max((int(np.prod(list(d.values()) or [1])) for d in meta.values()), default=1)
    flops = 0
    for a, b, new in order:
        da, db = meta.pop(a), meta.pop(b)
        shared = set(da) & set(db)
        union = {**da, **db}
        step_flops = 1
        for dim in union.values():
            step_flops *= dim
        flops += step_flops
        merged = {lab: dim for lab, dim in union.items() if lab not in shared}
        meta[new] = merged
        peak = max(peak, int(np.prod(list(merged.values()) or [1])))
    return {"peak_intermediate": peak, "flops_estimate": flops, "steps": len(order)}


def _contract_pair(a: TensorNode, b: TensorNode, new_id: int) -> TensorNode:
    shared = [lab for lab in a.axes if lab in set(b.axes)]
    ia = [a.axes.index(lab) for lab in shared]
    ib = [b.axes.index(lab) for lab in shared]
    data = np.tensordot(a.data, b.data, axes=(ia, ib))
    raw = [lab for lab in a.axes if lab not in shared] + [
        lab for lab in b.axes if lab not in shared
    ]
    out = sorted(raw)
    if out != raw:
        data = data.transpose([raw.index(lab) for lab in out])
    return TensorNode(new_id, data, tuple(out))


def contract_network(tn: TensorNetwork, order=None) -> TensorNode:
    """Execute a contraction order (default: greedy) down to a single node."""
    if order is None:
        order = greedy_order(tn)
    nodes = tn.node_map()
    if len(nodes) == 1:
        return next(iter(nodes.values()))
    for a, b, new_id in order:
        try:
            na, nb = nodes.pop(a), nodes.pop(b)
        except KeyError as exc:
            raise ValidationError(f"order references missing node {exc.args[0]}") from None
        nodes[new_id] = _contract_pair(na, nb, new_id)
    if len(nodes) != 1:
        raise ValidationError("contraction order does not cover the network")
    return next(iter(nodes.values()))


def matfree_apply(tn: TensorNetwork, v: np.ndarray, order=None) -> np.ndarray:
    """Evaluate (operator represented by tn) @ v by full contraction."""
    v = np.asarray(v, dtype=np.complex128).reshape(-1)
    dims = tn.label_dims()
    in_dim = int(np.prod([dims[lab] for lab in tn.open_cols]))
    if v.shape[0] != in_dim:
        raise DimensionMismatch(f"vector length {v.shape[0]}, network input {in_dim}")
    closed = with_vector(tn, v)
    result = contract_network(closed, order)
    perm = [result.axes.index(lab) for lab in tn.open_rows]
    return np.ascontiguousarray(result.data.transpose(perm)).reshape(-1)


def matvec_plan(tn: TensorNetwork) -> list[tuple[int, int, int]]:
    """Greedy order for matfree_apply, reusable across vectors."""
    dims = tn.label_dims()
    shape = tuple(dims[lab] for lab in tn.open_cols)
    dummy = np.zeros(shape, dtype=np.complex128).reshape(-1)
    return greedy_order(with_vector(tn, dummy))


# ---------------------------------------------------------------------------
# Lanczos with thick restarts and full reorthogonalization
# ---------------------------------------------------------------------------


def _rand_unit(rng, dim: int) -> np.ndarray:
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)


def _orthogonalize(w: np.ndarray, basis: list[np.ndarray]) -> np.ndarray:
    for _ in range(2):  # twice is enough (Kahan)
        for b in basis:
            w = w - np.vdot(b, w) * b
    return w


def lanczos_extremes(apply, dim: int, tol: float = 1e-6, max_iter: int = 2000,
                     restart_dim: int = 40, seed: int = 0):
    """Extreme eigenpairs (lambda_min, v_min, lambda_max, v_max) of a
    Hermitian operator given only as a matvec.

    Krylov bases are fully reorthogonalized; restarts keep the four extreme
    Ritz vectors.  Convergence requires the extreme Ritz values to move by
    at most ``tol`` between restarts with residual norms under ``10 * tol``.
    Hermiticity is spot-checked on random vectors first.
    """
    if dim < 2:
        raise ValidationError("operator dimension must be at least 2")
    rng = np.random.default_rng(seed)

    for _ in range(2):
        u, w = _rand_unit(rng, dim), _rand_unit(rng, dim)
        au, aw = apply(u), apply(w)
        lhs, rhs = np.vdot(u, aw), np.vdot(au, w)
        if abs(lhs - rhs) > 1e-8 * max(1.0, abs(lhs), abs(rhs)):
            raise ValidationError(
                f"operator is not Hermitian: <u,Av>={lhs!r} vs <Au,v>={rhs!r}"
            )

    m = max(2, min(restart_dim, dim))
    v0 = _rand_unit(rng, dim)
    basis = [v0]
    images = [apply(v0)]
    matvecs = 1
    prev_lo = prev_hi = None

    while True:
        grew = False
        while len(basis) < m and matvecs < max_iter:
            cand = _orthogonalize(images[-1].copy(), basis)
            nrm = float(np.linalg.norm(cand))
            if nrm < 1e-10:
                cand = _orthogonalize(_rand_unit(rng, dim), basis)
                nrm = float(np.linalg.norm(cand))
                if nrm < 1e-8:
                    break  # space exhausted
            v = cand / nrm
            basis.append(v)
            images.append(apply(v))
            matvecs += 1
            grew = True

        vm = np.column_stack(basis)
        wm = np.column_stack(images)
        h = vm.conj().T @ wm
        h = (h + h.conj().T) / 2
        theta, s = np.linalg.eigh(h)
        y_lo, y_hi = vm @ s[:, 0], vm @ s[:, -1]
        ay_lo, ay_hi = wm @ s[:, 0], wm @ s[:, -1]
        lo, hi = float(theta[0]), float(theta[-1])
        res_lo = float(np.linalg.norm(ay_lo - lo * y_lo))
        res_hi = float(np.linalg.norm(ay_hi - hi * y_hi))
        resid_ok = max(res_lo, res_hi) <= 10 * tol

        exact_space = len(basis) >= dim
        settled = (
            prev_lo is not None
            and abs(lo - prev_lo) <= tol
            and abs(hi - prev_hi) <= tol
        )
        if resid_ok and (settled or exact_space):
            return lo, y_lo / np.linalg.norm(y_lo), hi, y_hi / np.linalg.norm(y_hi)
        if matvecs >= max_iter or not grew:
            raise ConvergenceError(
                f"Lanczos did not converge within {max_iter} matvecs",
                lambda_min=lo, lambda_max=hi,
                residual_min=res_lo, residual_max=res_hi, matvecs=matvecs,
            )
        prev_lo, prev_hi = lo, hi

        # keep strictly fewer Ritz vectors than the restart dimension so the
        # next sweep always adds fresh Krylov directions
        keep_idx = [0, len(theta) - 1]
        if len(theta) > 3:
            keep_idx += [1, len(theta) - 2]
        keep_idx = keep_idx[: max(1, m - 1)]
        basis = [vm @ s[:, i] for i in keep_idx]
        images = [wm @ s[:, i] for i in keep_idx]


# ---------------------------------------------------------------------------
# the TN Lipschitz path
# ---------------------------------------------------------------------------


def lipschitz_tn(model: QmlModel, tol: float = 1e-6, max_iter: int = 2000,
                 restart_dim: int = 40) -> LipschitzResult:
    """K* with subset observables evaluated matrix-free.

    Same contract as the dense path, plus contraction statistics in
    ``stats``; Lanczos non-convergence surfaces as ConvergenceError.
    """
    meas = model.measurement
    dim = model.circuit.dim
    best = None
    total_matvec_flops = 0
    peak = 0
    for subset in label_subsets(meas.n_labels):
        tn = build_heisenberg_tn(model, subset)
        plan = matvec_plan(tn)
        stats = order_stats(with_vector(tn, np.zeros(dim)), plan)
        peak = max(peak, stats["peak_intermediate"])
        total_matvec_flops += stats["flops_estimate"]

        def apply(v, _tn=tn, _plan=plan):
            return matfree_apply(_tn, v, order=_plan)

        lo, v_lo, hi, v_hi = lanczos_extremes(
            apply, dim, tol=tol, max_iter=max_iter, restart_dim=restart_dim
        )
        gap = hi - lo
        if best is None or gap > best[0]:
            best = (gap, subset, (v_hi, v_lo), (hi, lo))

    gap, subset, (v_hi, v_lo), eigs = best
    n = model.n_qubits
    labels = tuple(meas.labels[i] for i in subset)
    return LipschitzResult(
        k_star=float(min(max(gap, 0.0), 1.0)),
        witness_subset=labels,
        kernel=(PureState(n, v_hi), PureState(n, v_lo)),
        eigenvalues=(float(eigs[0]), float(eigs[1])),
        stats={
            "engine": "tn",
            "peak_intermediate": peak,
            "matvec_flops_estimate": total_matvec_flops,
        },
    )

import itertools

import numpy as np
import pytest

from qrobust import (
    Circuit,
    ConvergenceError,
    DimensionMismatch,
    QmlModel,
    ValidationError,
    adjoint_apply,
    build_heisenberg_tn,
    greedy_order,
    lanczos_extremes,
    lipschitz_dense,
    lipschitz_tn,
    matfree_apply,
    standard_channel,
)
from qrobust.qasm import builtin_gate
from qrobust.tn import TensorNetwork, TensorNode, contract_network, order_stats

from helpers import projective_z, rand_herm, random_noisy_model

M0 = np.diag([1.0, 0.0]).astype(complex)


def _measured_model(circ):
    return QmlModel(circ, projective_z(circ.n_qubits, 0))


def random_network(rng, n_nodes, extra_edges=2, dims=(2, 3, 4)):
    """Connected random network with unique pairwise edges plus open axes."""
    labels = itertools.count()
    node_axes = [[] for _ in range(n_nodes)]
    for i in range(1, n_nodes):
        j = int(rng.integers(0, i))
        lab = f"e{next(labels)}"
        d = int(rng.choice(dims))
        node_axes[i].append((lab, d))
        node_axes[j].append((lab, d))
    for _ in range(extra_edges):
        i, j = rng.choice(n_nodes, size=2, replace=False)
        lab = f"e{next(labels)}"
        d = int(rng.choice(dims))
        node_axes[int(i)].append((lab, d))
        node_axes[int(j)].append((lab, d))
    opens = []
    for i in range(n_nodes):
        if rng.uniform() < 0.4 or not node_axes[i]:
            lab = f"o{next(labels)}"
            d = int(rng.choice(dims))
            node_axes[i].append((lab, d))
            opens.append(lab)
    nodes = []
    for i, axes in enumerate(node_axes):
        shape = tuple(d for _, d in axes)
        data = rng.normal(size=shape) + 1j * rng.normal(size=shape)
        nodes.append(TensorNode(i, data, tuple(lab for lab, _ in axes)))
    return TensorNetwork(tuple(nodes), tuple(opens), ())


def naive_order(tn):
    """Always contract the two lowest-id adjacent nodes (oracle order)."""
    meta = {n.id: set(n.axes) for n in tn.nodes}
    next_id = max(meta) + 1
    order = []
    while len(meta) > 1:
        ids = sorted(meta)
        pick = None
        for i, a in enumerate(ids):
            for b in ids[i + 1 :]:
                if meta[a] & meta[b]:
                    pick = (a, b)
                    break
            if pick:
                break
        if pick is None:
            pick = (ids[0], ids[1])
        a, b = pick
        merged = meta[a] ^ meta[b]
        del meta[a], meta[b]
        meta[next_id] = merged
        order.append((a, b, next_id))
        next_id += 1
    return order


def optimal_peak(tn):
    """Exhaustive DP over subsets: minimal achievable peak intermediate size."""
    nodes = list(tn.nodes)
    n = len(nodes)
    dims = [dict(node.dims) for node in nodes]

    def merged_dims(mask):
        count = {}
        dim_of = {}
        for i in range(n):
            if mask >> i & 1:
                for lab, d in dims[i].items():
                    count[lab] = count.get(lab, 0) + 1
                    dim_of[lab] = d
        size = 1
        for lab, c in count.items():
            # labels still crossing the subset boundary stay open
            total = sum(1 for node in nodes for l2 in node.axes if l2 == lab)
            if c < total or total == 1:
                size *= dim_of[lab]
        return size

    from functools import lru_cache

    @lru_cache(maxsize=None)
    def best(mask):
        if bin(mask).count("1") == 1:
            return merged_dims(mask)
        out = None
        sub = (mask - 1) & mask
        while sub:
            rest = mask ^ sub
            if sub < rest:  # avoid double-counting splits
                peak = max(best(sub), best(rest), merged_dims(mask))
                out = peak if out is None else min(out, peak)
            sub = (sub - 1) & mask
        return out

    return best((1 << n) - 1)


class TestBuildNetwork:
    def test_empty_circuit_contracts_to_observable(self):
        model = _measured_model(Circuit(1))
        tn = build_heisenberg_tn(model, (0,))
        node = contract_network(tn)
        perm = [node.axes.index(lab) for lab in tn.open_rows + tn.open_cols]
        assert np.allclose(node.data.transpose(perm), M0, atol=1e-12)

    def test_single_x_conjugates_observable(self):
        model = _measured_model(Circuit(1, (builtin_gate("x", (), (0,)),)))
        tn = build_heisenberg_tn(model, (0,))
        node = contract_network(tn)
        perm = [node.axes.index(lab) for lab in tn.open_rows + tn.open_cols]
        assert np.allclose(node.data.transpose(perm), np.diag([0.0, 1.0]), atol=1e-12)

    def test_random_models_match_dense_adjoint(self):
        rng = np.random.default_rng(0)
        for _ in range(8):
            n = int(rng.integers(2, 5))
            model = random_noisy_model(rng, n, 6, 2)
            tn = build_heisenberg_tn(model, (0,))
            dense = adjoint_apply(model.circuit, model.measurement.full_operator(0))
            for _ in range(3):
                v = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
                assert np.max(np.abs(matfree_apply(tn, v) - dense @ v)) <= 1e-9


class TestMatfreeApply:
    def test_identity_network(self):
        node = TensorNode(0, np.eye(2, dtype=complex), ("r0", "c0"))
        tn = TensorNetwork((node,), ("r0",), ("c0",))
        v = np.array([0.3, 0.4 - 0.2j])
        assert np.allclose(matfree_apply(tn, v), v, atol=1e-12)

    def test_basis_vector_gives_dense_column(self):
        rng = np.random.default_rng(1)
        model = random_noisy_model(rng, 2, 4, 1)
        tn = build_heisenberg_tn(model, (0,))
        dense = adjoint_apply(model.circuit, model.measurement.full_operator(0))
        e0 = np.zeros(4, dtype=complex)
        e0[0] = 1.0
        assert np.allclose(matfree_apply(tn, e0), dense[:, 0], atol=1e-10)

    def test_linearity(self):
        rng = np.random.default_rng(2)
        model = random_noisy_model(rng, 2, 4, 1)
        tn = build_heisenberg_tn(model, (0,))
        u = rng.normal(size=4) + 1j * rng.normal(size=4)
        v = rng.normal(size=4) + 1j * rng.normal(size=4)
        a, b = 0.3 - 1j, 2.2 + 0.5j
        lhs = matfree_apply(tn, a * u + b * v)
        rhs = a * matfree_apply(tn, u) + b * matfree_apply(tn, v)
        assert np.max(np.abs(lhs - rhs)) <= 1e-9

    def test_wrong_length_rejected(self):
        model = _measured_model(Circuit(2))
        tn = build_heisenberg_tn(model, (0,))
        with pytest.raises(DimensionMismatch):
            matfree_apply(tn, np.ones(3))

    def test_operator_hermitian_by_sampling(self):
        rng = np.random.default_rng(3)
        model = random_noisy_model(rng, 3, 6, 2)
        tn = build_heisenberg_tn(model, (0,))
        for _ in range(5):
            u = rng.normal(size=8) + 1j * rng.normal(size=8)
            v = rng.normal(size=8) + 1j * rng.normal(size=8)
            lhs = np.vdot(u, matfree_apply(tn, v))
            rhs = np.vdot(matfree_apply(tn, u), v)
            assert abs(lhs - rhs) <= 1e-8


class TestGreedyOrder:
    def test_chain_contracts_end_in(self):
        rng = np.random.default_rng(4)
        d = 5
        nodes = (
            TensorNode(0, rng.normal(size=(d, d)), ("a", "b")),
            TensorNode(1, rng.normal(size=(d, d)), ("b", "c")),
            TensorNode(2, rng.normal(size=(d, d)), ("c", "d")),
        )
        tn = TensorNetwork(nodes, ("a", "d"), ())
        order = greedy_order(tn)
        first = {order[0][0], order[0][1]}
        assert first in ({0, 1}, {1, 2})
        stats = order_stats(tn, order)
        assert stats["peak_intermediate"] == d * d

    def test_star_contracts_leaves_first(self):
        rng = np.random.default_rng(5)
        hub_axes = ("a", "b", "c")
        nodes = [TensorNode(0, rng.normal(size=(2, 2, 2)), hub_axes)]
        for i, lab in enumerate(hub_axes):
            nodes.append(TensorNode(i + 1, rng.normal(size=(2,)), (lab,)))
        tn = TensorNetwork(tuple(nodes), (), ())
        order = greedy_order(tn)
        # every step merges a leaf into the shrinking hub
        assert all(0 in (a, b) or new > 3 for a, b, new in order)

    def test_disconnected_outer_product_last(self):
        rng = np.random.default_rng(6)
        nodes = (
            TensorNode(0, rng.normal(size=(2, 2)), ("a", "b")),
            TensorNode(1, rng.normal(size=(2, 2)), ("b", "a")),
            TensorNode(2, rng.normal(size=(3,)), ("z",)),
        )
        tn = TensorNetwork(nodes, ("z",), ())
        order = greedy_order(tn)
        assert {order[0][0], order[0][1]} == {0, 1}
        result = contract_network(tn, order)
        oracle = np.einsum("ab,ba->", nodes[0].data, nodes[1].data) * nodes[2].data
        assert np.allclose(result.data, oracle, atol=1e-12)

    def test_peak_close_to_optimal_on_small_instances(self):
        rng = np.random.default_rng(7)
        for _ in range(12):
            tn = random_network(rng, int(rng.integers(4, 8)))
            order = greedy_order(tn)
            peak = order_stats(tn, order)["peak_intermediate"]
            assert peak <= 4 * optimal_peak(tn)

    def test_order_independence_of_value(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            tn = random_network(rng, 10)
            a = contract_network(tn, greedy_order(tn))
            b = contract_network(tn, naive_order(tn))
            perm = [b.axes.index(lab) for lab in a.axes]
            va, vb = a.data, b.data.transpose(perm) if a.axes else b.data
            scale = max(1.0, float(np.max(np.abs(va))))
            assert np.max(np.abs(va - vb)) / scale <= 1e-9


class TestLanczos:
    def test_two_point_spectrum(self):
        d = 32
        diag = np.zeros(d)
        diag[-1] = 1.0
        lo, v_lo, hi, v_hi = lanczos_extremes(lambda v: diag * v, d)
        assert (lo, hi) == pytest.approx((0.0, 1.0), abs=1e-9)

    def test_matches_dense_eigh(self):
        rng = np.random.default_rng(9)
        h = rand_herm(rng, 64)
        lo, v_lo, hi, v_hi = lanczos_extremes(lambda v: h @ v, 64, tol=1e-8)
        vals = np.linalg.eigvalsh(h)
        assert lo == pytest.approx(vals[0], abs=1e-8)
        assert hi == pytest.approx(vals[-1], abs=1e-8)
        assert np.linalg.norm(h @ v_lo - lo * v_lo) <= 1e-6
        assert np.linalg.norm(h @ v_hi - hi * v_hi) <= 1e-6

    def test_nonconvergence_is_reported(self):
        rng = np.random.default_rng(10)
        h = rand_herm(rng, 256)
        with pytest.raises(ConvergenceError) as err:
            lanczos_extremes(lambda v: h @ v, 256, tol=1e-14, max_iter=8, restart_dim=4)
        assert "lambda_min" in err.value.details

    def test_non_hermitian_detected(self):
        rng = np.random.default_rng(11)
        m = rng.normal(size=(16, 16)) + 1j * rng.normal(size=(16, 16))
        with pytest.raises(ValidationError, match="Hermitian"):
            lanczos_extremes(lambda v: m @ v, 16)

    def test_small_dimension_exact(self):
        h = np.diag([0.2, 0.8]).astype(complex)
        lo, _, hi, _ = lanczos_extremes(lambda v: h @ v, 2)
        assert (lo, hi) == pytest.approx((0.2, 0.8), abs=1e-10)


class TestLipschitzTn:
    def test_agrees_with_dense(self):
        rng = np.random.default_rng(12)
        for _ in range(10):
            n = int(rng.integers(2, 6))
            model = random_noisy_model(rng, n, 8, 2)
            kd = lipschitz_dense(model)
            kt = lipschitz_tn(model)
            assert abs(kd.k_star - kt.k_star) <= 1e-5

    def test_closed_form_bit_flip(self):
        from qrobust import append_noise

        circ = append_noise(Circuit(2, (builtin_gate("h", (), (0,)),)),
                            standard_channel("bit_flip", 1e-4), [0])
        model = _measured_model(circ)
        assert lipschitz_tn(model).k_star == pytest.approx(0.99980, abs=1e-5)

    def test_kernel_bitwise_deterministic(self):
        rng = np.random.default_rng(14)
        model = random_noisy_model(rng, 3, 6, 2)
        a = lipschitz_tn(model)
        b = lipschitz_tn(model)
        assert a.k_star == b.k_star
        assert np.array_equal(a.kernel[0].amplitudes, b.kernel[0].amplitudes)
        assert np.array_equal(a.kernel[1].amplitudes, b.kernel[1].amplitudes)

    def test_records_contraction_stats(self):
        rng = np.random.default_rng(13)
        model = random_noisy_model(rng, 3, 5, 1)
        k = lipschitz_tn(model)
        assert k.stats["engine"] == "tn"
        assert k.stats["peak_intermediate"] >= 8
        assert k.stats["matvec_flops_estimate"] > 0

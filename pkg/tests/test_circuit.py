from collections import Counter
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from iaqcnn import circuit as qc
from iaqcnn import statevec as sv
from iaqcnn.circuit import GateKind, Source
from iaqcnn.errors import ConfigError, ContractError, GateError
from iaqcnn.model import ModelParams

GOLDEN = Path(__file__).parent / "golden"


def is_single_cycle(nodes, edges):
    """Undirected multigraph check: every node degree 2 and one connected component."""
    deg = Counter()
    adj = {v: set() for v in nodes}
    for a, b in edges:
        deg[a] += 1
        deg[b] += 1
        adj[a].add(b)
        adj[b].add(a)
    if any(deg[v] != 2 for v in nodes):
        return False
    seen, stack = set(), [nodes[0]]
    while stack:
        v = stack.pop()
        if v not in seen:
            seen.add(v)
            stack.extend(adj[v] - seen)
    return seen == set(nodes)


def test_encoding_layer():
    g = qc.build_encoding_layer(1)
    assert [x.listing() for x in g] == ["RY 0 x[0]", "RY 0 w[0]*x[0]", "RZ 0 v[0]*x[0]"]
    assert len(qc.build_encoding_layer(8)) == 24
    syms = {(x.binding.source, x.binding.index) for x in qc.build_encoding_layer(18)
            if x.binding.source is not Source.FEATURE}
    assert len(syms) == 36


def test_ring_edges_hand_cases():
    e = qc.ring_edge_sets(range(8))
    assert e.even_edges == ((0, 1), (2, 3), (4, 5), (6, 7))
    assert e.odd_edges == ((1, 2), (3, 4), (5, 6), (7, 0))
    e = qc.ring_edge_sets([0, 1])
    assert e.even_edges == ((0, 1),) and e.odd_edges == ((1, 0),)
    e = qc.ring_edge_sets(range(5))
    assert e.even_edges == ((0, 1), (2, 3))
    assert e.odd_edges == ((1, 2), (3, 4), (4, 0))


@pytest.mark.parametrize("n", range(2, 19))
def test_ring_is_single_cycle(n):
    e = qc.ring_edge_sets(range(n))
    assert is_single_cycle(list(range(n)), e.even_edges + e.odd_edges)


def test_ring_rejects_tiny():
    with pytest.raises(GateError):
        qc.ring_edge_sets([3])


def test_conv_block_structure():
    b = qc.build_conv_block(2, 5, 0)
    assert [x.listing() for x in b] == [
        "RY 2 theta[0][0]", "RZ 2 theta[0][1]", "RY 5 theta[0][2]", "RZ 5 theta[0][3]",
        "CNOT 2,5", "RY 5 theta[0][4]", "CNOT 2,5", "RZ 5 theta[0][5]",
    ]
    two = qc.build_conv_block(0, 1, 0) + qc.build_conv_block(1, 2, 0)
    assert len(two) == 16
    assert len({x.binding for x in two if x.binding}) == 6
    with pytest.raises(GateError):
        qc.build_conv_block(3, 3, 0)


def test_conv_block_with_zero_angles_is_identity(rng):
    from conftest import random_state
    plan = qc.CircuitPlan(3, 1, tuple(qc.build_conv_block(0, 2, 0)), ((0, 1, 2),), (0, 1, 2))
    a = random_state(3, rng)
    s = qc.run_gates(plan, np.zeros((1, plan.n_rotations)), sv.StateVector(3, a[None, :].copy()))
    np.testing.assert_allclose(s.amplitudes[0], a, atol=1e-15)


@pytest.mark.parametrize("n,blocks", [(8, 8), (2, 2), (18, 18), (5, 5)])
def test_ring_conv_layer_counts(n, blocks):
    g = qc.build_ring_conv_layer(range(n), 0)
    assert len(g) == 8 * blocks
    cnots = [x.qubits for x in g if x.kind is GateKind.CNOT]
    assert is_single_cycle(list(range(n)), sorted(set(cnots)))


def test_pool_layer_hand_cases():
    g, active = qc.build_pool_layer(range(8), 0)
    assert active == [4, 5, 6, 7]
    assert [x.qubits for x in g if x.kind is GateKind.CNOT] == [(0, 4), (1, 5), (2, 6), (3, 7)]
    assert [x.listing() for x in g[:4]] == ["RY 4 phi[0][0]", "RZ 0 phi[0][1]", "CNOT 0,4", "RY 4 phi[0][2]"]
    g, active = qc.build_pool_layer(range(9), 0)
    assert active == [4, 5, 6, 7, 8]
    assert [x.qubits for x in g if x.kind is GateKind.CNOT] == [(0, 4), (1, 5), (2, 6), (3, 7)]
    with pytest.raises(GateError):
        qc.build_pool_layer([0], 0)


@given(st.integers(2, 40))
def test_pool_halving(n):
    _, active = qc.build_pool_layer(list(range(n)), 0)
    assert len(active) == n - n // 2


def test_model_circuit_d18():
    plan = qc.build_model_circuit(18, 1)
    assert plan.final_active == tuple(range(9, 18))
    assert len(plan.gates) == 3 * 18 + 8 * 18 + 4 * 9 == 234
    assert plan.readout_qubits == (9, 10, 11, 12)
    assert qc.parameter_count(18, 1) == 55


def test_model_circuit_d8_and_rejections():
    assert qc.build_model_circuit(8, 1).final_active == (4, 5, 6, 7)
    with pytest.raises(ConfigError):
        qc.build_model_circuit(8, 2)
    with pytest.raises(ConfigError):
        qc.build_model_circuit(1, 0)
    with pytest.raises(ConfigError):
        qc.build_model_circuit(6, 1)


@given(d=st.integers(2, 40), levels=st.integers(1, 3))
def test_parameter_count_formula(d, levels):
    assert qc.parameter_count(d, levels) == 9 * levels + 2 * d + 10


@given(d=st.integers(8, 30))
def test_distinct_symbols_per_level(d):
    plan = qc.build_model_circuit(d, 1)
    b = [g.binding for g in plan.gates if g.binding]
    assert len({x for x in b if x.source is Source.CONV_THETA}) == 6
    assert len({x for x in b if x.source is Source.POOL_PHI}) == 3


def test_gate_order_encoding_then_levels():
    plan = qc.build_model_circuit(16, 2)
    kinds = [g.binding.source if g.binding else None for g in plan.gates]
    first_conv = kinds.index(Source.CONV_THETA)
    assert all(k in (Source.FEATURE, Source.FEATURE_TIMES_W, Source.FEATURE_TIMES_V) for k in kinds[:first_conv])
    levels = [g.binding.level for g in plan.gates if g.binding and g.binding.source in (Source.CONV_THETA, Source.POOL_PHI)]
    assert levels == sorted(levels)
    assert plan.active_qubits_per_level == (tuple(range(16)), tuple(range(8, 16)), tuple(range(12, 16)))


def _listing_oracle(d):
    """Gate listing for L=1 spelled out directly from the construction rules."""
    lines = [f"# qubits={d} levels=1 final_active={list(range(d // 2, d))}"]
    for i in range(d):
        lines += [f"RY {i} x[{i}]", f"RY {i} w[{i}]*x[{i}]", f"RZ {i} v[{i}]*x[{i}]"]
    pairs = [(k, k + 1) for k in range(0, d - 1, 2)] + [(k, k + 1) for k in range(1, d - 1, 2)] + [(d - 1, 0)]
    for a, b in pairs:
        t = [f"theta[0][{j}]" for j in range(6)]
        lines += [f"RY {a} {t[0]}", f"RZ {a} {t[1]}", f"RY {b} {t[2]}", f"RZ {b} {t[3]}",
                  f"CNOT {a},{b}", f"RY {b} {t[4]}", f"CNOT {a},{b}", f"RZ {b} {t[5]}"]
    for s in range(d // 2):
        t = s + d // 2
        lines += [f"RY {t} phi[0][0]", f"RZ {s} phi[0][1]", f"CNOT {s},{t}", f"RY {t} phi[0][2]"]
    return "\n".join(lines) + "\n"


def test_listing_matches_rules_and_golden_file():
    got = qc.build_model_circuit(8, 1).listing()
    assert got == _listing_oracle(8)
    assert got == (GOLDEN / "plan_d8_L1.txt").read_text()


def _product_state(x):
    amps = np.array([1.0 + 0j])
    for xi in reversed(x):
        amps = np.kron(amps, [np.cos(xi / 2), np.sin(xi / 2)])
    return amps


def test_execute_encoding_only_gives_cos(rng):
    x = rng.uniform(-np.pi, np.pi, size=4)
    plan = qc.build_model_circuit(4, 0)
    s = qc.execute(plan, x, ModelParams.zeros(4, 0).to_vector())
    np.testing.assert_allclose(s.amplitudes, _product_state(x), atol=1e-12)
    for q in range(4):
        assert sv.expectation_z(s, q) == pytest.approx(np.cos(x[q]), abs=1e-12)


def test_execute_weighting_gates(rng):
    # w and v act as extra Ry / Rz angles proportional to the feature
    x = rng.uniform(-np.pi, np.pi, size=4)
    p = ModelParams.zeros(4, 0)
    p.w[:] = rng.normal(size=4)
    p.v[:] = rng.normal(size=4)
    s = qc.execute(qc.build_model_circuit(4, 0), x, p.to_vector())
    want = np.array([1.0 + 0j])
    for i in reversed(range(4)):
        from conftest import ry_matrix, rz_matrix
        qubit = rz_matrix(p.v[i] * x[i]) @ ry_matrix(p.w[i] * x[i]) @ ry_matrix(x[i]) @ np.array([1, 0])
        want = np.kron(want, qubit)
    np.testing.assert_allclose(s.amplitudes, want, atol=1e-12)


def test_execute_contracts_and_noise(rng):
    plan = qc.build_model_circuit(8, 1)
    theta = ModelParams.initialize(8, 1, rng).to_vector()
    x = rng.uniform(-np.pi, np.pi, size=8)
    clean = qc.execute(plan, x, theta)
    assert abs(clean.norm_squared() - 1) < 1e-10
    again = qc.execute(plan, x, theta, gate_sigma=0.0, rng=np.random.default_rng(1))
    np.testing.assert_array_equal(clean.amplitudes, again.amplitudes)
    n1 = qc.execute(plan, x, theta, 0.02, np.random.default_rng(5))
    n2 = qc.execute(plan, x, theta, 0.02, np.random.default_rng(5))
    np.testing.assert_array_equal(n1.amplitudes, n2.amplitudes)
    assert not np.allclose(n1.amplitudes, clean.amplitudes)
    assert abs(n1.norm_squared() - 1) < 1e-10
    with pytest.raises(ContractError):
        qc.execute(plan, x[:7], theta)
    with pytest.raises(ContractError):
        qc.execute(plan, x, theta[:-1])


def test_weight_sharing_moves_every_instance(rng):
    plan = qc.build_model_circuit(8, 1)
    theta = np.zeros(plan.layout.size)
    x = rng.uniform(-1, 1, size=8)
    base = qc.resolve_angles(plan, x, theta)[0]
    theta[plan.layout.conv + 4] = 0.3
    moved = qc.resolve_angles(plan, x, theta)[0] - base
    rot = [g for g in plan.gates if g.binding]
    hit = [i for i, g in enumerate(rot) if g.binding.source is Source.CONV_THETA and g.binding.index == 4]
    assert len(hit) == 8
    np.testing.assert_array_equal(moved[hit], 0.3)
    assert np.count_nonzero(moved) == 8


def test_gate_instance_validation():
    with pytest.raises(GateError):
        qc.GateInstance(GateKind.CNOT, (1, 1))
    with pytest.raises(GateError):
        qc.GateInstance(GateKind.RY, (1,))
    with pytest.raises(GateError):
        qc.GateInstance(GateKind.CNOT, (0, 1), qc.ParamBinding(Source.FEATURE, 0))

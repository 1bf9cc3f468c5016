"""Symbolic IA-QCNN circuit plans and their execution on the state-vector simulator.

A plan is a flat list of gates.  Every rotation carries a :class:`ParamBinding`
that says how its angle is resolved from a feature vector and a flat trainable
parameter vector; the layout of that flat vector is owned by
:class:`ParamLayout` and shared with the model and training code.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import statevec as sv
from .errors import ConfigError, ContractError, GateError
from .noise import perturb_angle

READOUT_QUBITS = 4


class GateKind(str, enum.Enum):
    RY = "RY"
    RZ = "RZ"
    CNOT = "CNOT"


class Source(str, enum.Enum):
    FEATURE = "FEATURE"
    FEATURE_TIMES_W = "FEATURE_TIMES_W"
    FEATURE_TIMES_V = "FEATURE_TIMES_V"
    CONV_THETA = "CONV_THETA"
    POOL_PHI = "POOL_PHI"


@dataclass(frozen=True)
class ParamBinding:
    source: Source
    index: int  # feature index, or j within the level's theta/phi
    level: int = 0

    def expr(self) -> str:
        if self.source is Source.FEATURE:
            return f"x[{self.index}]"
        if self.source is Source.FEATURE_TIMES_W:
            return f"w[{self.index}]*x[{self.index}]"
        if self.source is Source.FEATURE_TIMES_V:
            return f"v[{self.index}]*x[{self.index}]"
        if self.source is Source.CONV_THETA:
            return f"theta[{self.level}][{self.index}]"
        return f"phi[{self.level}][{self.index}]"


@dataclass(frozen=True)
class GateInstance:
    kind: GateKind
    qubits: tuple[int, ...]
    binding: ParamBinding | None = None

    def __post_init__(self):
        if self.kind is GateKind.CNOT:
            if len(self.qubits) != 2 or self.qubits[0] == self.qubits[1] or self.binding is not None:
                raise GateError(f"invalid CNOT {self.qubits}")
        elif len(self.qubits) != 1 or self.binding is None:
            raise GateError(f"invalid {self.kind.value} gate {self.qubits}")

    def listing(self) -> str:
        qs = ",".join(str(q) for q in self.qubits)
        if self.binding is None:
            return f"{self.kind.value} {qs}"
        return f"{self.kind.value} {qs} {self.binding.expr()}"


@dataclass(frozen=True)
class EdgeSets:
    even_edges: tuple[tuple[int, int], ...]
    odd_edges: tuple[tuple[int, int], ...]


@dataclass(frozen=True)
class ParamLayout:
    """Offsets of each parameter block inside the flat trainable vector.

    Order: conv_theta (L x 6), pool_phi (L x 3), w (d), v (d), dense_w (4 x 2,
    row-major), dense_b (2).
    """

    d: int
    levels: int

    @property
    def conv(self) -> int:
        return 0

    @property
    def pool(self) -> int:
        return 6 * self.levels

    @property
    def w(self) -> int:
        return 9 * self.levels

    @property
    def v(self) -> int:
        return 9 * self.levels + self.d

    @property
    def dense_w(self) -> int:
        return 9 * self.levels + 2 * self.d

    @property
    def dense_b(self) -> int:
        return self.dense_w + 2 * READOUT_QUBITS

    @property
    def size(self) -> int:
        return self.dense_b + 2

    def offset(self, b: ParamBinding) -> int:
        """Flat index of the trainable scalar a binding uses, or -1 for a bare feature."""
        if b.source is Source.FEATURE:
            return -1
        if b.source is Source.FEATURE_TIMES_W:
            return self.w + b.index
        if b.source is Source.FEATURE_TIMES_V:
            return self.v + b.index
        if b.source is Source.CONV_THETA:
            return self.conv + 6 * b.level + b.index
        return self.pool + 3 * b.level + b.index

    def feature_index(self, b: ParamBinding) -> int:
        if b.source in (Source.FEATURE, Source.FEATURE_TIMES_W, Source.FEATURE_TIMES_V):
            return b.index
        return -1


@dataclass(frozen=True)
class CircuitPlan:
    n_qubits: int
    levels: int
    gates: tuple[GateInstance, ...]
    active_qubits_per_level: tuple[tuple[int, ...], ...]
    final_active: tuple[int, ...]
    layout: ParamLayout = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "layout", ParamLayout(self.n_qubits, self.levels))
        rot = [g for g in self.gates if g.binding is not None]
        object.__setattr__(self, "_rot_pos", np.array([i for i, g in enumerate(self.gates) if g.binding is not None], dtype=int))
        object.__setattr__(self, "_feat_idx", np.array([self.layout.feature_index(g.binding) for g in rot], dtype=int))
        object.__setattr__(self, "_param_idx", np.array([self.layout.offset(g.binding) for g in rot], dtype=int))

    @property
    def readout_qubits(self) -> tuple[int, ...]:
        return tuple(sorted(self.final_active)[:READOUT_QUBITS])

    @property
    def n_rotations(self) -> int:
        return len(self._rot_pos)

    @property
    def rotation_feature_index(self) -> np.ndarray:
        return self._feat_idx

    @property
    def rotation_param_index(self) -> np.ndarray:
        return self._param_idx

    @property
    def rotation_positions(self) -> np.ndarray:
        return self._rot_pos

    def listing(self) -> str:
        head = f"# qubits={self.n_qubits} levels={self.levels} final_active={list(self.final_active)}"
        return "\n".join([head] + [g.listing() for g in self.gates]) + "\n"


def build_encoding_layer(d: int) -> list[GateInstance]:
    gates = []
    for i in range(d):
        gates.append(GateInstance(GateKind.RY, (i,), ParamBinding(Source.FEATURE, i)))
        gates.append(GateInstance(GateKind.RY, (i,), ParamBinding(Source.FEATURE_TIMES_W, i)))
        gates.append(GateInstance(GateKind.RZ, (i,), ParamBinding(Source.FEATURE_TIMES_V, i)))
    return gates


def ring_edge_sets(active) -> EdgeSets:
    a = list(active)
    n = len(a)
    if n < 2:
        raise GateError(f"ring needs at least 2 active qubits, got {n}")
    even = tuple((a[k], a[k + 1]) for k in range(0, n - 1, 2))
    odd = tuple((a[k], a[k + 1]) for k in range(1, n - 1, 2)) + ((a[n - 1], a[0]),)
    return EdgeSets(even, odd)


def build_conv_block(q1: int, q2: int, level: int) -> list[GateInstance]:
    if q1 == q2:
        raise GateError(f"conv block on a single qubit {q1}")

    def t(j):
        return ParamBinding(Source.CONV_THETA, j, level)

    return [
        GateInstance(GateKind.RY, (q1,), t(0)),
        GateInstance(GateKind.RZ, (q1,), t(1)),
        GateInstance(GateKind.RY, (q2,), t(2)),
        GateInstance(GateKind.RZ, (q2,), t(3)),
        GateInstance(GateKind.CNOT, (q1, q2)),
        GateInstance(GateKind.RY, (q2,), t(4)),
        GateInstance(GateKind.CNOT, (q1, q2)),
        GateInstance(GateKind.RZ, (q2,), t(5)),
    ]


def build_ring_conv_layer(active, level: int) -> list[GateInstance]:
    edges = ring_edge_sets(active)
    gates = []
    for q1, q2 in edges.even_edges + edges.odd_edges:
        gates.extend(build_conv_block(q1, q2, level))
    return gates


def build_pool_layer(active, level: int) -> tuple[list[GateInstance], list[int]]:
    a = list(active)
    if len(a) < 2:
        raise GateError(f"pooling needs at least 2 active qubits, got {len(a)}")
    half = len(a) // 2
    source, target = a[:half], a[half:]

    def p(j):
        return ParamBinding(Source.POOL_PHI, j, level)

    gates = []
    for s, t in zip(source, target):
        gates += [
            GateInstance(GateKind.RY, (t,), p(0)),
            GateInstance(GateKind.RZ, (s,), p(1)),
            GateInstance(GateKind.CNOT, (s, t)),
            GateInstance(GateKind.RY, (t,), p(2)),
        ]
    return gates, target


def build_model_circuit(d: int, levels: int = 1) -> CircuitPlan:
    if d < 2 or levels < 0:
        raise ConfigError(f"need d >= 2 and L >= 0, got d={d}, L={levels}")
    gates = build_encoding_layer(d)
    active = list(range(d))
    per_level = [tuple(active)]
    for lvl in range(levels):
        if len(active) < 2:
            raise ConfigError(f"level {lvl} has {len(active)} active qubits; cannot pool further")
        gates += build_ring_conv_layer(active, lvl)
        pool, active = build_pool_layer(active, lvl)
        gates += pool
        per_level.append(tuple(active))
    if len(active) < READOUT_QUBITS:
        raise ConfigError(
            f"d={d}, L={levels} leaves {len(active)} active qubits; readout needs {READOUT_QUBITS}"
        )
    return CircuitPlan(d, levels, tuple(gates), tuple(per_level), tuple(active))


def parameter_count(d: int, levels: int = 1) -> int:
    return ParamLayout(d, levels).size


def resolve_angles(plan: CircuitPlan, features: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Concrete rotation angles, shape (batch, n_rotations), in plan order."""
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    theta = np.asarray(theta, dtype=np.float64)
    if x.shape[1] != plan.n_qubits:
        raise ContractError(f"feature length {x.shape[1]} != qubit count {plan.n_qubits}")
    if theta.shape != (plan.layout.size,):
        raise ContractError(f"parameter vector has shape {theta.shape}, expected ({plan.layout.size},)")
    fi, pi_ = plan.rotation_feature_index, plan.rotation_param_index
    xf = np.where(fi >= 0, x[:, np.maximum(fi, 0)], 1.0)
    pk = np.where(pi_ >= 0, theta[np.maximum(pi_, 0)], 1.0)
    return xf * pk


def run_gates(plan: CircuitPlan, angles: np.ndarray, state: sv.StateVector | None = None) -> sv.StateVector:
    """Apply every gate of ``plan`` with pre-resolved ``angles`` (batch, n_rotations)."""
    angles = np.atleast_2d(angles)
    if state is None:
        state = sv.new_zero_state(plan.n_qubits, (angles.shape[0],))
    r = 0
    for g in plan.gates:
        if g.kind is GateKind.CNOT:
            sv.apply_cnot(state, g.qubits[0], g.qubits[1])
            continue
        a = angles[:, r]
        if g.kind is GateKind.RY:
            sv.apply_ry(state, g.qubits[0], a)
        else:
            sv.apply_rz(state, g.qubits[0], a)
        r += 1
    return state


def execute(plan: CircuitPlan, features, theta, gate_sigma: float = 0.0, rng: np.random.Generator | None = None) -> sv.StateVector:
    """Run ``plan`` from |0...0> for one feature vector (1-D) or a batch (2-D).

    With ``gate_sigma > 0`` every resolved rotation angle receives an
    independent N(0, gate_sigma) draw from ``rng``.  A zero sigma draws nothing.
    """
    single = np.ndim(features) == 1
    angles = resolve_angles(plan, features, theta)
    angles = perturb_angle(angles, gate_sigma, rng)
    state = run_gates(plan, angles)
    if single:
        state = sv.StateVector(state.n_qubits, state.amplitudes[0])
    return state

"""IA-QCNN forward pass: circuit, Pauli-Z readout, dense layer, softmax, cross-entropy."""
from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .circuit import READOUT_QUBITS, CircuitPlan, ParamLayout, execute
from .errors import ConfigError, ContractError, DataError
from .statevec import expectations_z

PROB_FLOOR = 1e-12
BLOCK_ORDER = ("conv_theta", "pool_phi", "w", "v", "dense_w", "dense_b")


@dataclass
class ModelParams:
    conv_theta: np.ndarray  # (L, 6)
    pool_phi: np.ndarray  # (L, 3)
    w: np.ndarray  # (d,)
    v: np.ndarray  # (d,)
    dense_w: np.ndarray  # (4, 2); logits = y @ dense_w + dense_b
    dense_b: np.ndarray  # (2,)

    @property
    def d(self) -> int:
        return len(self.w)

    @property
    def levels(self) -> int:
        return self.conv_theta.shape[0]

    @property
    def layout(self) -> ParamLayout:
        return ParamLayout(self.d, self.levels)

    def count(self) -> int:
        return sum(getattr(self, k).size for k in BLOCK_ORDER)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([np.ravel(getattr(self, k)) for k in BLOCK_ORDER]).astype(np.float64)

    @classmethod
    def from_vector(cls, vec, d: int, levels: int) -> "ModelParams":
        vec = np.asarray(vec, dtype=np.float64)
        lay = ParamLayout(d, levels)
        if vec.shape != (lay.size,):
            raise ContractError(f"parameter vector length {vec.shape} != {lay.size}")
        return cls(
            conv_theta=vec[lay.conv:lay.pool].reshape(levels, 6).copy(),
            pool_phi=vec[lay.pool:lay.w].reshape(levels, 3).copy(),
            w=vec[lay.w:lay.v].copy(),
            v=vec[lay.v:lay.dense_w].copy(),
            dense_w=vec[lay.dense_w:lay.dense_b].reshape(READOUT_QUBITS, 2).copy(),
            dense_b=vec[lay.dense_b:].copy(),
        )

    @classmethod
    def zeros(cls, d: int, levels: int = 1) -> "ModelParams":
        return cls.from_vector(np.zeros(ParamLayout(d, levels).size), d, levels)

    @classmethod
    def initialize(cls, d: int, levels: int, rng: np.random.Generator) -> "ModelParams":
        """Random start: w, v ~ N(0, 0.1); theta, phi ~ U(-pi/8, pi/8); dense_w ~ U(-0.5, 0.5); b = 0."""
        q = np.pi / 8
        return cls(
            conv_theta=rng.uniform(-q, q, size=(levels, 6)),
            pool_phi=rng.uniform(-q, q, size=(levels, 3)),
            w=rng.normal(0.0, 0.1, size=d),
            v=rng.normal(0.0, 0.1, size=d),
            dense_w=rng.uniform(-0.5, 0.5, size=(READOUT_QUBITS, 2)),
            dense_b=np.zeros(2),
        )

    def check(self, plan: CircuitPlan) -> None:
        if self.d != plan.n_qubits or self.levels != plan.levels:
            raise ContractError(
                f"params built for d={self.d}, L={self.levels}; plan has d={plan.n_qubits}, L={plan.levels}"
            )


@dataclass
class ForwardOutput:
    expectations: np.ndarray  # (4,)
    logits: np.ndarray  # (2,)
    probs: np.ndarray  # (2,)


def softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def dense_head(expectations: np.ndarray, params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    logits = expectations @ params.dense_w + params.dense_b
    return logits, softmax(logits)


def readout(plan: CircuitPlan, features, params: ModelParams, gate_sigma: float = 0.0, rng=None) -> np.ndarray:
    """Pauli-Z expectations on the four lowest-index final-active qubits."""
    if len(plan.final_active) < READOUT_QUBITS:
        raise ConfigError(f"plan leaves {len(plan.final_active)} active qubits; readout needs {READOUT_QUBITS}")
    params.check(plan)
    state = execute(plan, features, params.to_vector(), gate_sigma, rng)
    return expectations_z(state, plan.readout_qubits)


def forward_batch(plan: CircuitPlan, features, params: ModelParams, gate_sigma: float = 0.0, rng=None):
    """Vectorized forward pass; returns (expectations, logits, probs) arrays with a leading batch axis."""
    y = readout(plan, np.atleast_2d(features), params, gate_sigma, rng)
    logits, probs = dense_head(y, params)
    return y, logits, probs


def forward(features, params: ModelParams, plan: CircuitPlan, gate_sigma: float = 0.0, rng=None) -> ForwardOutput:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 1:
        raise ContractError("forward takes a single feature vector; use predict_batch for batches")
    y, z, p = forward_batch(plan, x[None, :], params, gate_sigma, rng)
    return ForwardOutput(y[0], z[0], p[0])


def loss(probs, label: int) -> float:
    if label not in (0, 1):
        raise DataError(f"label must be 0 or 1, got {label!r}")
    p = float(np.clip(np.asarray(probs)[label], PROB_FLOOR, 1.0))
    return -np.log(p)


def batch_losses(probs: np.ndarray, labels) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    p = np.clip(probs[np.arange(len(labels)), labels], PROB_FLOOR, 1.0)
    return -np.log(p)


def predict_batch(features_list, params: ModelParams, plan: CircuitPlan, gate_sigma: float = 0.0, rng=None) -> list[ForwardOutput]:
    """Forward every item; one vectorized circuit run, order preserved."""
    items = list(features_list)
    if not items:
        return []
    for i, f in enumerate(items):
        if np.shape(f) != (plan.n_qubits,):
            raise ContractError(f"item {i}: feature shape {np.shape(f)} != ({plan.n_qubits},)")
    y, z, p = forward_batch(plan, np.asarray(items, dtype=np.float64), params, gate_sigma, rng)
    return [ForwardOutput(y[i], z[i], p[i]) for i in range(len(items))]


# -- checkpoint (flat CSV) -------------------------------------------------

def write_checkpoint(params: ModelParams, clip: float, seed: int) -> str:
    out = io.StringIO()
    out.write("key,value\n")
    out.write(f"d,{params.d}\nL,{params.levels}\nclip,{float(clip)!r}\nseed,{int(seed)}\n")
    out.write("block,index,value\n")
    for name in BLOCK_ORDER:
        for i, val in enumerate(np.ravel(getattr(params, name))):
            out.write(f"{name},{i},{float(val)!r}\n")
    return out.getvalue()


def read_checkpoint(text: str) -> tuple[ModelParams, dict]:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != "key,value":
        raise DataError("checkpoint: missing 'key,value' header")
    header: dict = {}
    i = 1
    while i < len(lines) and lines[i] != "block,index,value":
        k, v = lines[i].split(",", 1)
        header[k] = v
        i += 1
    try:
        d, levels = int(header["d"]), int(header["L"])
        meta = {"d": d, "L": levels, "clip": float(header["clip"]), "seed": int(header["seed"])}
    except (KeyError, ValueError) as exc:
        raise DataError(f"checkpoint: bad header ({exc})") from exc
    blocks: dict[str, list[float]] = {k: [] for k in BLOCK_ORDER}
    for ln in lines[i + 1:]:
        name, idx, val = ln.split(",")
        if name not in blocks or int(idx) != len(blocks[name]):
            raise DataError(f"checkpoint: unexpected row {ln!r}")
        blocks[name].append(float(val))
    vec = np.array([x for k in BLOCK_ORDER for x in blocks[k]])
    return ModelParams.from_vector(vec, d, levels), meta

"""Gradients, Adam and the training loop (plateau LR schedule + early stopping)."""
from __future__ import annotations

import enum
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from . import statevec as sv
from .circuit import CircuitPlan, GateKind, resolve_angles, run_gates
from .errors import ConfigError, DataError
from .model import ModelParams, batch_losses, dense_head, forward_batch
from .noise import keyed_rng, perturb_angle

log = logging.getLogger(__name__)

MIN_DELTA = 1e-4


class GradMethod(str, enum.Enum):
    PARAMETER_SHIFT = "PARAMETER_SHIFT"
    ADJOINT = "ADJOINT"
    FINITE_DIFF = "FINITE_DIFF"


@dataclass
class TrainConfig:
    epochs: int = 60
    batch_size: int = 16
    lr_init: float = 3e-3
    lr_min: float = 2e-4
    lr_factor: float = 0.5
    lr_patience: int = 3
    early_stop_patience: int = 5
    seed: int = 42
    gate_noise_sigma: float = 0.0
    noise_seed: int | None = None  # defaults to seed
    grad_method: str = "ADJOINT"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        try:
            GradMethod(self.grad_method)
        except ValueError:
            raise ConfigError(f"unknown grad_method {self.grad_method!r}") from None
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if not 0 < self.lr_min <= self.lr_init:
            raise ConfigError(f"need 0 < lr_min <= lr_init, got {self.lr_min}, {self.lr_init}")
        if not 0 < self.lr_factor < 1:
            raise ConfigError(f"lr_factor must lie in (0, 1), got {self.lr_factor}")
        if self.lr_patience < 1 or self.early_stop_patience < 1:
            raise ConfigError("patience values must be >= 1")
        if not self.gate_noise_sigma >= 0:
            raise ConfigError(f"gate_noise_sigma must be >= 0, got {self.gate_noise_sigma}")

    @property
    def gate_seed(self) -> int:
        return self.seed if self.noise_seed is None else self.noise_seed


# -- gradients -------------------------------------------------------------

def _head_grads(y, probs, labels, params: ModelParams):
    """Closed-form softmax cross-entropy gradients: (dL/dy, dL/dW, dL/db) per sample."""
    dz = probs.copy()
    dz[np.arange(len(labels)), labels] -= 1.0
    dy = dz @ params.dense_w.T
    dW = y[:, :, None] * dz[:, None, :]
    return dy, dW, dz


def _angle_grads_adjoint(plan: CircuitPlan, angles: np.ndarray, dy: np.ndarray) -> np.ndarray:
    """dL/d(angle) for every rotation instance via one backward sweep."""
    phi = run_gates(plan, angles)
    n = plan.n_qubits
    signs = np.stack([sv.z_signs(n, q) for q in plan.readout_qubits], axis=1)
    lam = sv.StateVector(n, phi.amplitudes * (dy @ signs.T))
    out = np.zeros_like(angles)
    r = plan.n_rotations
    for g in reversed(plan.gates):
        if g.kind is GateKind.CNOT:
            sv.apply_cnot(phi, *g.qubits)
            sv.apply_cnot(lam, *g.qubits)
            continue
        r -= 1
        q = g.qubits[0]
        gphi = phi.copy()
        if g.kind is GateKind.RY:
            sv.apply_pauli_y(gphi, q)
        else:
            sv.apply_pauli_z(gphi, q)
        out[:, r] = np.imag(np.sum(np.conj(lam.amplitudes) * gphi.amplitudes, axis=-1))
        undo = sv.apply_ry if g.kind is GateKind.RY else sv.apply_rz
        undo(phi, q, -angles[:, r])
        undo(lam, q, -angles[:, r])
    return out


def _angle_grads_shift(plan: CircuitPlan, angles: np.ndarray, dy: np.ndarray, gate_sigma: float, rng) -> np.ndarray:
    readout = plan.readout_qubits
    out = np.zeros_like(angles)
    for r in range(plan.n_rotations):
        ys = []
        for shift in (np.pi / 2, -np.pi / 2):
            a = angles.copy()
            a[:, r] += shift
            a = perturb_angle(a, gate_sigma, rng)
            ys.append(sv.expectations_z(run_gates(plan, a), readout))
        out[:, r] = np.sum(dy * (ys[0] - ys[1]) / 2.0, axis=1)
    return out


def _chain_to_params(plan: CircuitPlan, features: np.ndarray, dangle: np.ndarray) -> np.ndarray:
    """Per-sample parameter gradients from per-instance angle gradients (shared params summed)."""
    fi, pi_ = plan.rotation_feature_index, plan.rotation_param_index
    xf = np.where(fi >= 0, features[:, np.maximum(fi, 0)], 1.0)
    contrib = dangle * xf
    mask = pi_ >= 0
    g = np.zeros((features.shape[0], plan.layout.size))
    np.add.at(g.T, pi_[mask], contrib[:, mask].T)
    return g


def per_sample_gradients(plan, features, labels, params: ModelParams, method="ADJOINT",
                         gate_sigma: float = 0.0, rng=None, fd_step: float = 1e-4):
    """Per-sample gradient rows (batch, n_params) plus the forward-pass losses and probs."""
    method = GradMethod(method)
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    labels = np.atleast_1d(np.asarray(labels, dtype=int))
    params.check(plan)
    theta = params.to_vector()
    lay = plan.layout
    angles = perturb_angle(resolve_angles(plan, x, theta), gate_sigma, rng)
    y = sv.expectations_z(run_gates(plan, angles), plan.readout_qubits)
    _, probs = dense_head(y, params)
    losses = batch_losses(probs, labels)

    if method is GradMethod.FINITE_DIFF:
        g = np.zeros((len(x), lay.size))
        for k in range(lay.size):
            tp, tm = theta.copy(), theta.copy()
            tp[k] += fd_step
            tm[k] -= fd_step
            lp = batch_losses(forward_batch(plan, x, ModelParams.from_vector(tp, lay.d, lay.levels), gate_sigma, rng)[2], labels)
            lm = batch_losses(forward_batch(plan, x, ModelParams.from_vector(tm, lay.d, lay.levels), gate_sigma, rng)[2], labels)
            g[:, k] = (lp - lm) / (2 * fd_step)
        return g, losses, probs

    dy, dW, db = _head_grads(y, probs, labels, params)
    if method is GradMethod.ADJOINT:
        dangle = _angle_grads_adjoint(plan, angles, dy)
    else:
        dangle = _angle_grads_shift(plan, resolve_angles(plan, x, theta), dy, gate_sigma, rng)
    g = _chain_to_params(plan, x, dangle)
    g[:, lay.dense_w:lay.dense_b] += dW.reshape(len(x), -1)
    g[:, lay.dense_b:] += db
    return g, losses, probs


def gradient(features, label: int, params: ModelParams, plan: CircuitPlan, config: TrainConfig | None = None,
             rng=None) -> ModelParams:
    """dL/dp for one sample, returned in the shape of :class:`ModelParams`."""
    config = config or TrainConfig()
    g, _, _ = per_sample_gradients(plan, np.asarray(features)[None, :], [label], params,
                                   config.grad_method, config.gate_noise_sigma, rng)
    return ModelParams.from_vector(g[0], plan.n_qubits, plan.levels)


# -- Adam ------------------------------------------------------------------

@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size))


def adam_step(state: AdamState, params, grads, lr: float):
    """One bias-corrected Adam update.  ``params``/``grads`` are flat arrays or ModelParams."""
    as_model = isinstance(params, ModelParams)
    p = params.to_vector() if as_model else np.asarray(params, dtype=np.float64)
    g = grads.to_vector() if isinstance(grads, ModelParams) else np.asarray(grads, dtype=np.float64)
    t = state.t + 1
    m = state.beta1 * state.m + (1 - state.beta1) * g
    v = state.beta2 * state.v + (1 - state.beta2) * g * g
    m_hat = m / (1 - state.beta1 ** t)
    v_hat = v / (1 - state.beta2 ** t)
    p = p - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    new_state = AdamState(m, v, t, state.beta1, state.beta2, state.eps)
    if as_model:
        return new_state, ModelParams.from_vector(p, params.d, params.levels)
    return new_state, p


# -- training loop ---------------------------------------------------------

@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float
    lr: float


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)
    stop_epoch: int = 0
    best_epoch: int = 0
    best_val_loss: float = float("inf")

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("epoch,train_loss,train_acc,val_loss,val_acc,lr\n")
        for r in self.records:
            out.write(f"{r.epoch},{r.train_loss!r},{r.train_acc!r},{r.val_loss!r},{r.val_acc!r},{r.lr!r}\n")
        return out.getvalue()


class PlateauSchedule:
    """Keras-style ReduceLROnPlateau + EarlyStopping on one monitored value."""

    def __init__(self, config: TrainConfig):
        self.lr = config.lr_init
        self.lr_min = config.lr_min
        self.factor = config.lr_factor
        self.lr_patience = config.lr_patience
        self.stop_patience = config.early_stop_patience
        self.best = float("inf")
        self.lr_wait = 0
        self.stop_wait = 0

    def update(self, value: float) -> tuple[bool, bool]:
        """Feed one epoch's monitored value; returns (improved, should_stop)."""
        if value < self.best - MIN_DELTA:
            self.best = value
            self.lr_wait = self.stop_wait = 0
            return True, False
        self.lr_wait += 1
        self.stop_wait += 1
        if self.lr_wait >= self.lr_patience and self.lr > self.lr_min:
            self.lr = max(self.lr * self.factor, self.lr_min)
            self.lr_wait = 0
        return False, self.stop_wait >= self.stop_patience


def predicted_class(probs: np.ndarray) -> np.ndarray:
    # ties go to class 0
    return (probs[..., 1] > probs[..., 0]).astype(int)


def evaluate_epoch(features, labels, params: ModelParams, plan: CircuitPlan, gate_sigma: float = 0.0, rng=None):
    """Mean slice loss and accuracy over a split."""
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    labels = np.asarray(labels, dtype=int)
    if len(x) == 0:
        raise DataError("cannot evaluate an empty split")
    _, _, probs = forward_batch(plan, x, params, gate_sigma, rng)
    losses = batch_losses(probs, labels)
    return float(np.mean(losses)), float(np.mean(predicted_class(probs) == labels))


def train(train_x, train_y, val_x, val_y, plan: CircuitPlan, config: TrainConfig,
          init_params: ModelParams | None = None) -> tuple[ModelParams, TrainHistory]:
    train_x = np.asarray(train_x, dtype=np.float64)
    train_y = np.asarray(train_y, dtype=int)
    val_x = np.asarray(val_x, dtype=np.float64)
    val_y = np.asarray(val_y, dtype=int)
    if len(train_x) == 0 or len(val_x) == 0:
        raise DataError("train and validation splits must be non-empty")
    if not (np.isin(train_y, (0, 1)).all() and np.isin(val_y, (0, 1)).all()):
        raise DataError("labels must be 0 or 1")

    params = init_params or ModelParams.initialize(plan.n_qubits, plan.levels, keyed_rng(config.seed, "init"))
    params.check(plan)
    theta = params.to_vector()
    adam = AdamState.zeros(theta.size)
    sched = PlateauSchedule(config)
    history = TrainHistory()
    best_theta = theta.copy()
    sigma = config.gate_noise_sigma
    n = len(train_x)

    for epoch in range(1, config.epochs + 1):
        lr = sched.lr
        order = keyed_rng(config.seed, "shuffle", epoch).permutation(n)
        loss_sum, correct = 0.0, 0
        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start:start + config.batch_size]
            rng = keyed_rng(config.gate_seed, "gate-train", epoch, b) if sigma > 0 else None
            cur = ModelParams.from_vector(theta, plan.n_qubits, plan.levels)
            g, losses, probs = per_sample_gradients(plan, train_x[idx], train_y[idx], cur,
                                                    config.grad_method, sigma, rng)
            loss_sum += float(losses.sum())
            correct += int((predicted_class(probs) == train_y[idx]).sum())
            adam, theta = adam_step(adam, theta, g.mean(axis=0), lr)

        cur = ModelParams.from_vector(theta, plan.n_qubits, plan.levels)
        vrng = keyed_rng(config.gate_seed, "gate-val", epoch) if sigma > 0 else None
        val_loss, val_acc = evaluate_epoch(val_x, val_y, cur, plan, sigma, vrng)
        history.records.append(EpochRecord(epoch, loss_sum / n, correct / n, val_loss, val_acc, lr))
        log.info("epoch %d loss %.4f acc %.3f val_loss %.4f val_acc %.3f lr %.2e",
                 epoch, loss_sum / n, correct / n, val_loss, val_acc, lr)
        improved, stop = sched.update(val_loss)
        if improved:
            best_theta = theta.copy()
            history.best_epoch = epoch
            history.best_val_loss = val_loss
        history.stop_epoch = epoch
        if stop:
            break

    return ModelParams.from_vector(best_theta, plan.n_qubits, plan.levels), history

"""Dense state-vector simulator for Ry / Rz / CNOT circuits.

Qubit ``q`` is bit ``q`` of the basis index (qubit 0 is the least significant
bit).  Amplitude arrays may carry leading batch dimensions, so one call can
advance many independent registers at once; rotation angles then broadcast
against the batch shape.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, GateError

MAX_QUBITS = 24


@dataclass
class StateVector:
    n_qubits: int
    amplitudes: np.ndarray  # shape (..., 2**n_qubits), complex128

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.amplitudes.shape[:-1]

    def norm_squared(self) -> np.ndarray | float:
        return np.sum(np.abs(self.amplitudes) ** 2, axis=-1)

    def copy(self) -> "StateVector":
        return StateVector(self.n_qubits, self.amplitudes.copy())


def new_zero_state(n_qubits: int, batch_shape: tuple[int, ...] = (), max_qubits: int = MAX_QUBITS) -> StateVector:
    if not isinstance(n_qubits, (int, np.integer)) or not 1 <= n_qubits <= max_qubits:
        raise ConfigError(f"n_qubits must be in [1, {max_qubits}], got {n_qubits!r}")
    amps = np.zeros(tuple(batch_shape) + (1 << int(n_qubits),), dtype=np.complex128)
    amps[..., 0] = 1.0
    return StateVector(int(n_qubits), amps)


def _check_qubit(state: StateVector, q: int) -> None:
    if not 0 <= q < state.n_qubits:
        raise IndexError(f"qubit {q} out of range for {state.n_qubits}-qubit state")


def _pair_view(state: StateVector, q: int) -> np.ndarray:
    # (..., high, bit q, low) view; axis -2 selects the amplitude pair
    n = state.n_qubits
    return state.amplitudes.reshape(state.batch_shape + (1 << (n - q - 1), 2, 1 << q))


def _angle_factor(angle):
    a = np.asarray(angle, dtype=np.float64)
    # broadcast a batch of angles over the (high, low) axes
    return a.reshape(a.shape + (1,) * 2) if a.ndim else a


def apply_ry(state: StateVector, q: int, angle) -> StateVector:
    """Apply Ry(angle) to qubit ``q`` in place and return ``state``."""
    _check_qubit(state, q)
    v = _pair_view(state, q)
    half = _angle_factor(angle) / 2.0
    c, s = np.cos(half), np.sin(half)
    a0 = v[..., 0, :].copy()
    a1 = v[..., 1, :]
    v[..., 0, :] = c * a0 - s * a1
    v[..., 1, :] = s * a0 + c * a1
    return state


def apply_rz(state: StateVector, q: int, angle) -> StateVector:
    """Apply Rz(angle) = diag(e^{-i angle/2}, e^{+i angle/2}) to qubit ``q`` in place."""
    _check_qubit(state, q)
    v = _pair_view(state, q)
    half = _angle_factor(angle) / 2.0
    phase = np.exp(1j * half)
    v[..., 0, :] *= np.conj(phase)
    v[..., 1, :] *= phase
    return state


def apply_cnot(state: StateVector, control: int, target: int) -> StateVector:
    _check_qubit(state, control)
    _check_qubit(state, target)
    if control == target:
        raise GateError(f"CNOT control and target coincide (qubit {control})")
    n = state.n_qubits
    # axes of the (2,)*n tensor are ordered most-significant qubit first
    t = state.amplitudes.reshape(state.batch_shape + (2,) * n)
    nb = len(state.batch_shape)
    c_ax = nb + (n - 1 - control)
    t_ax = nb + (n - 1 - target)
    idx1 = [slice(None)] * t.ndim
    idx1[c_ax] = 1
    sub = t[tuple(idx1)]  # view with control bit set
    # target axis shifts down by one if it came after the removed control axis
    t_sub = t_ax - 1 if t_ax > c_ax else t_ax
    sub[...] = np.flip(sub, axis=t_sub).copy()
    return state


def apply_pauli_y(state: StateVector, q: int) -> StateVector:
    """Multiply by the Pauli-Y generator on qubit ``q`` (used by adjoint differentiation)."""
    _check_qubit(state, q)
    v = _pair_view(state, q)
    a0 = v[..., 0, :].copy()
    v[..., 0, :] = -1j * v[..., 1, :]
    v[..., 1, :] = 1j * a0
    return state


def apply_pauli_z(state: StateVector, q: int) -> StateVector:
    _check_qubit(state, q)
    v = _pair_view(state, q)
    v[..., 1, :] *= -1.0
    return state


def z_signs(n_qubits: int, q: int) -> np.ndarray:
    """+1 where bit ``q`` of the basis index is 0, -1 otherwise."""
    k = np.arange(1 << n_qubits)
    return 1.0 - 2.0 * ((k >> q) & 1)


def expectation_z(state: StateVector, q: int):
    _check_qubit(state, q)
    probs = np.abs(state.amplitudes) ** 2
    val = probs @ z_signs(state.n_qubits, q)
    return float(val) if np.ndim(val) == 0 else val


def expectations_z(state: StateVector, qubits) -> np.ndarray:
    """<Z_q> for each q in ``qubits``; result shape batch_shape + (len(qubits),)."""
    for q in qubits:
        _check_qubit(state, q)
    probs = np.abs(state.amplitudes) ** 2
    signs = np.stack([z_signs(state.n_qubits, q) for q in qubits], axis=1)
    return probs @ signs

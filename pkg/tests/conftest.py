import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=200, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_state(n, rng):
    """Random normalized amplitudes, independent of the simulator."""
    a = rng.normal(size=2 ** n) + 1j * rng.normal(size=2 ** n)
    return a / np.linalg.norm(a)


def dense_single(gate, q, n):
    """Full 2^n matrix of a one-qubit gate on qubit q (qubit 0 = least significant bit)."""
    m = np.array([[1.0]])
    for k in reversed(range(n)):
        m = np.kron(m, gate if k == q else np.eye(2))
    return m


def dense_cnot(c, t, n):
    dim = 2 ** n
    m = np.zeros((dim, dim))
    for k in range(dim):
        j = k ^ (1 << t) if (k >> c) & 1 else k
        m[j, k] = 1.0
    return m


def ry_matrix(theta):
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rz_matrix(theta):
    return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n, title, ok, detail, secs in sorted(lines):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {n:>2}. {title} ({secs:.1f}s) {detail}")

import numpy as np
import pytest

from rlgp.estimator import FittedLocalModel, OutlyingnessVector
from rlgp.kernel import build_covariance_state, nu_floor

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def report():
    """Record one human-readable pass/fail line per acceptance criterion."""
    def _report(label, passed, detail):
        ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] {label}: {detail}")
        print(ACCEPTANCE_LINES[-1])
    return _report


def random_spd(rng, n, cond=10.0):
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    w = np.logspace(0, -np.log10(cond), n) if n > 1 else np.ones(1)
    return (Q * w) @ Q.T


def make_model(nb, params, mu, gamma=None, q_used=0):
    """A FittedLocalModel assembled from given estimates (no optimization)."""
    gamma = np.zeros(nb.n) if gamma is None else np.asarray(gamma, dtype=float)
    cov = build_covariance_state(params, nb.D)
    return FittedLocalModel(mu=mu, gamma=OutlyingnessVector(gamma), params=params, q_used=q_used,
                            c0=1.0, loss_trace=np.array([]), support_trace=np.array([]),
                            cov=cov, neighborhood=nb, nu_floor=nu_floor(nb.yn))


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)

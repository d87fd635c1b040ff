import json

import numpy as np
import pytest

from tdscert import TimeDelaySystem

_ACCEPTANCE = []


def scalar_benchmark(h):
    """x' = x - 2 x(t-h); stable exactly for h < pi / (3 sqrt 3)."""
    return TimeDelaySystem([[1.0]], [[-2.0]], h, "scalar")


def oscillator_matrices(K):
    A = np.array(
        [
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [-10.0 - K, 10.0, 0.0, 0.0],
            [5.0, -15.0, 0.0, -0.25],
        ]
    )
    Ad = np.zeros((4, 4))
    Ad[2, 0] = K
    return A, Ad


def oscillator(K, h):
    """Two coupled masses with delayed position feedback of gain K."""
    A, Ad = oscillator_matrices(K)
    return TimeDelaySystem(A, Ad, h, "oscillator")


OSCILLATOR_TEMPLATE = {
    "name": "oscillator",
    "A": [[0, 0, 1, 0], [0, 0, 0, 1], ["-10-K", 10, 0, 0], [5, -15, 0, -0.25]],
    "Ad": [[0, 0, 0, 0], [0, 0, 0, 0], ["K", 0, 0, 0], [0, 0, 0, 0]],
    "h": 0.552,
    "parameters": {"K": 10},
}


def random_delay_independent_stable(rng, m, h):
    """A with negative log-norm and |Ad| strictly below it: stable for every delay."""
    A = rng.normal(size=(m, m)) * rng.uniform(0.3, 2.0)
    A -= (np.linalg.eigvalsh(0.5 * (A + A.T)).max() + rng.uniform(0.2, 3.0)) * np.eye(m)
    mu = np.linalg.eigvalsh(0.5 * (A + A.T)).max()
    Ad = rng.normal(size=(m, m))
    Ad *= -mu * rng.uniform(0.1, 0.95) / np.linalg.norm(Ad, 2)
    return TimeDelaySystem(A, Ad, h)


def random_system(rng, m, h, scale=2.0):
    return TimeDelaySystem(rng.normal(size=(m, m)) * scale, rng.normal(size=(m, m)) * scale, h)


@pytest.fixture
def write_json(tmp_path):
    def write(name, doc):
        path = tmp_path / name
        path.write_text(json.dumps(doc), encoding="utf-8")
        return str(path)

    return write


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion (printed at the end of the run)."""

    def record(label, passed, detail=""):
        line = f"[{'PASS' if passed else 'FAIL'}] {label}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)

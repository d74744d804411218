import numpy as np
import pytest


def blobs(seed=0, n=400, sep=2.0):
    rng = np.random.default_rng(seed)
    half = n // 2
    X = np.r_[rng.normal(-sep, 1.0, (half, 2)), rng.normal(sep, 1.0, (n - half, 2))]
    y = np.r_[np.zeros(half), np.ones(n - half)].astype(int)
    return X, y


def xor(seed=0, n=400, noise=0.3):
    rng = np.random.default_rng(seed)
    corners = np.array([[1, 1], [-1, -1], [1, -1], [-1, 1]], dtype=float)
    labels = np.array([0, 0, 1, 1])
    which = np.arange(n) % 4
    X = corners[which] + rng.normal(0, noise, (n, 2))
    return X, labels[which]


@pytest.fixture
def blob_data():
    return blobs()


@pytest.fixture
def xor_data():
    return xor()


def pytest_configure(config):
    config._acceptance = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

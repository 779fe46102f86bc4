import functools

import numpy as np
import pytest

from hetordinal.benchmark import default_tiers, generate


@functools.lru_cache(maxsize=None)
def tier_instance(name: str, replicate: int = 0):
    tiers = {t.name: t for t in default_tiers()}
    return generate(tiers[name], replicate)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def easy0():
    return tier_instance("easy", 0)


def sem_sample(rng, order, B, intercepts, sds, n):
    """Draw rows from a linear SEM ``x_j = b_j + sum_m B[m, j] x_m + e_j`` in topological ``order``."""
    J = len(order)
    X = np.zeros((n, J))
    for j in order:
        X[:, j] = intercepts[j] + X @ B[:, j] + rng.normal(0.0, sds[j], n)
    return X


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

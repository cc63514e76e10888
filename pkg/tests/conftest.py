import numpy as np
import pytest

from opsplit.operators import AffineLinear


def random_monotone_affine(rng, d, skew=1.0):
    """``M = P P^T + (K - K^T)`` scaled so that the problem is well conditioned."""
    P = rng.standard_normal((d, d)) / np.sqrt(d)
    K = rng.standard_normal((d, d)) / np.sqrt(d)
    M = P @ P.T + skew * (K - K.T)
    return AffineLinear(M, rng.standard_normal(d))


def random_triple(rng, d):
    return tuple(random_monotone_affine(rng, d) for _ in range(3))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def toy_triple():
    # 3x - 1 = 0 split as (x - 1) + x + x
    return (AffineLinear([[1.0]], [-1.0]), AffineLinear([[1.0]]), AffineLinear([[1.0]]))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)

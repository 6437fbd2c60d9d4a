import numpy as np
import pytest

from klsnmf import kernel_distance, rbf_kernel


def random_problem(seed, n=None, p=None, k=None, lam=None, radius=None):
    """Seeded random data with an RBF kernel, as used across the suite."""
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(20, 81))
    p = p or int(rng.integers(5, 31))
    k = k or int(rng.integers(2, 7))
    X = rng.random((p, n))
    K = rbf_kernel(X, 1.0 if radius is None else radius)
    return X, K, kernel_distance(K), k, 0.001 if lam is None else lam


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# criterion number -> (status, message); filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        status, message = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {message}")

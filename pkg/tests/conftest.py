import numpy as np
import pytest

from gliosim.operator import from_dense


def random_sparse(rng, n, density=0.3, norm=None):
    """Random dense array with roughly ``density`` nonzeros, optionally rescaled to a 1-norm."""
    a = rng.standard_normal((n, n)) * (rng.random((n, n)) < density)
    if norm is not None:
        s = np.abs(a).sum(axis=0).max()
        if s > 0:
            a *= norm / s
    return a


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def sparse_factory(rng):
    def make(n, density=0.3, norm=None):
        a = random_sparse(rng, n, density, norm)
        return a, from_dense(a)
    return make


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")

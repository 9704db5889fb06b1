import numpy as np
import pytest

from krrcate import _gram_py
from krrcate.cate import Dataset


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def toy_dataset(n, d=1, seed=0, unit=True):
    """Small random dataset with both arms present."""
    r = np.random.default_rng(seed)
    X = r.uniform(0, 1, size=(n, d)) if unit else r.normal(size=(n, d))
    A = np.zeros(n, dtype=int)
    A[: n // 2] = 1
    r.shuffle(A)
    Y = np.sin(3 * X[:, 0]) + A * X[:, 0] + 0.1 * r.normal(size=n)
    return Dataset(X, A, Y)


try:
    from krrcate import _gram_ext
except ImportError:  # extension not built
    _gram_ext = None

BACKENDS = [pytest.param(_gram_py, id="python")]
if _gram_ext is not None:
    BACKENDS.append(pytest.param(_gram_ext, id="compiled"))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)

import numpy as np
import pytest

from fedmarket.data import Dataset


def random_dataset(rng: np.random.Generator, n: int = 30, features: int = 4, classes: int = 3) -> Dataset:
    x = rng.normal(size=(n, features))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    return Dataset(x, rng.integers(0, classes, size=n), classes)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)

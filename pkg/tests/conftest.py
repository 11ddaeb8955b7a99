import numpy as np
import pytest

from sparsecox.survival import Dataset


def random_data(n=50, p=10, censor=0.3, seed=0, ties=False, scale=0.3):
    """Cox data with exponential times and independent uniform censoring."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    beta = np.zeros(p)
    k = min(3, p)
    beta[:k] = rng.choice([-1.0, 1.0], size=k) * scale * 3
    t = rng.exponential(size=n) * np.exp(-(X @ beta))
    status = (rng.uniform(size=n) > censor).astype(int)
    if ties:
        t = np.round(t, 1) + 0.1
    return Dataset(t, status, X)


@pytest.fixture
def small_data():
    return random_data(40, 6, seed=11)


@pytest.fixture
def toy_data():
    from sparsecox import ingest_csv, toy_csv_path
    return ingest_csv(str(toy_csv_path()))


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def record(criterion: str, passed: bool, detail: str) -> bool:
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

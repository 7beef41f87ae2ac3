import numpy as np
import pytest

from tqreg import add_gaussian_noise, phantom

_ACCEPTANCE_LINES = []


def record_acceptance(name, ok, detail):
    """Log one criterion line; ``ok=None`` marks a skipped check."""
    status = "SKIP" if ok is None else "PASS" if ok else "FAIL"
    line = f"[{status}] {name}: {detail}"
    _ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def clean64():
    return phantom(64)


@pytest.fixture(scope="session")
def noisy64(clean64):
    return add_gaussian_noise(clean64, 0.1, 0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

import pytest

from qmscatter.molecule import planarize
from qmscatter.signal import make_bank
from qmscatter.synthetic import make_synthetic_dataset


@pytest.fixture(scope="session")
def bank64():
    """J=6, L=4 bank with angular wavelets (64 x 64 grid)."""
    return make_bank(6, 4)


@pytest.fixture(scope="session")
def synth5():
    """Five planarized synthetic molecules."""
    data = make_synthetic_dataset(5, seed=11)
    return [planarize(m) for m in data]


_CRITERIA: list[str] = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line for an acceptance criterion."""
    def record(name: str, ok: bool, detail: str) -> bool:
        _CRITERIA.append(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)

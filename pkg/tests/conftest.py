"""Shared fixtures and the per-criterion acceptance summary."""
import pytest

from edbosonic.fockspace import HilbertDims
from edbosonic.model import device_params

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    ok, prev = ACCEPTANCE.get(criterion, (True, ""))
    joined = f"{prev}; {detail}" if prev else detail
    ACCEPTANCE[criterion] = (ok and bool(passed), joined)


@pytest.fixture(scope="session")
def params():
    return device_params()


@pytest.fixture(scope="session")
def dims():
    return HilbertDims()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'} | {detail}")

import numpy as np
import pytest
import torch


@pytest.fixture(autouse=True)
def _seed():
    torch.manual_seed(0)
    np.random.seed(0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE = {}


@pytest.fixture
def accept(request):
    """Record one acceptance criterion's outcome for the end-of-run summary."""

    def record(number: int, passed: bool, detail: str):
        ACCEPTANCE[number] = (bool(passed), detail)
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")

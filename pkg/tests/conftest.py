import numpy as np
import pytest

from bubblered.expansions import ladder_K
from bubblered.geometry import KField


@pytest.fixture(scope="session")
def K5():
    return ladder_K(5)


@pytest.fixture(scope="session")
def K1():
    return KField.constant(5, 1.0)


def e(n, k, sign=1.0):
    v = np.zeros(n + 1)
    v[k] = sign
    return v


# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(k: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[k] = (bool(passed), detail)
    print(f"criterion {k:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")

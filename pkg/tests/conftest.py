import numpy as np
import pytest

from acbound.family import build_family

REF = dict(d=1, q=16, delta=0.2, alpha=1.0, C=0.5, c2=0.25)


@pytest.fixture(scope="session")
def ref_family():
    return build_family(**REF)


@pytest.fixture(scope="session")
def strong_family():
    # large plateau amplitude: majority votes are right with high probability at n = 4096
    return build_family(d=1, q=16, delta=0.9, alpha=1.0, C=1.0, c2=0.45)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


# one line per acceptance criterion, collected by tests/test_acceptance.py
ACCEPTANCE_LINES = {}


@pytest.fixture
def acceptance_line():
    def record(number, passed, text):
        line = f"criterion {number:2d}  {'PASS' if passed else 'FAIL'}  {text}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])

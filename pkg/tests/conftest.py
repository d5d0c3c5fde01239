import json
from pathlib import Path

import pytest

from hslab import mesh
from hslab.families import compact_bump, talenti_profile

DATA = Path(__file__).parent / "data"


@pytest.fixture
def verdict_fixture():
    return json.loads((DATA / "verdicts.json").read_text())


@pytest.fixture
def small_grid():
    """32x32 log-graded grid on [0, 4] for d=4, k=2."""
    return mesh.build_grid(32, 32, 4.0, mesh.Grading.LOG_GRADED, d=4, k=2, ratio=1.15)


@pytest.fixture
def bump_grid(small_grid):
    return compact_bump(small_grid, 3.0)


def graded(n, R, d, k, ratio=1.08):
    return mesh.build_grid(n, n, R, mesh.Grading.LOG_GRADED, d=d, k=k, ratio=ratio)


def bubble(n, d, k, R=20.0, ratio=1.08):
    return talenti_profile(graded(n, R, d, k, ratio))


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record and print one pass/fail line for an acceptance criterion."""
    def record(number, title, ok, detail):
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)

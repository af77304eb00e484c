from pathlib import Path

import pytest

from cqlimit.config import load_config

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

# (criterion, description, passed, detail) lines collected by the acceptance suite
ACCEPTANCE_LINES: list = []


def record(number: int, title: str, ok: bool, detail: str = "") -> None:
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}"
    if detail:
        line += f"  [{detail}]"
    print(line)
    ACCEPTANCE_LINES.append(line)


@pytest.fixture(scope="session")
def configs_dir():
    return CONFIGS


@pytest.fixture(scope="session")
def bench64():
    return load_config(CONFIGS / "benchmark64.ini")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

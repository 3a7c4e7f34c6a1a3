from __future__ import annotations

import json
from pathlib import Path

import pytest

from cyanrep.cluster import ScriptEntry
from cyanrep.pipeline import compile_units, load_units
from cyanrep.rng import XorShift64Star

FIXTURES = Path(__file__).parent / "fixtures"


def fixture_path(name: str) -> Path:
    return FIXTURES / name


def compile_fixture(name: str, **kw):
    return compile_units(load_units([FIXTURES / name]), **kw)


def board_script(seed: int, count: int = 100, replicas: int = 3, horizon: int = 20_000):
    """Random order-sensitive calls spread over all replicas."""
    rng = XorShift64Star(seed)
    out = []
    for i in range(count):
        t = rng.randint(0, horizon)
        r = rng.randint(0, replicas - 1)
        kind = rng.randint(0, 3)
        if kind == 0:
            out.append(ScriptEntry(t, r, "Board", "append:", (f"e{i}",), i + 1))
        elif kind == 1:
            out.append(ScriptEntry(t, r, "Board", "add:", (i,), i + 1))
        elif kind == 2:
            out.append(ScriptEntry(t, r, "Board", "tag:value:", (f"k{i}", 7 * i - 50), i + 1))
        else:
            out.append(ScriptEntry(t, r, "Board", "reset", (), i + 1))
    return out


def script_text(entries) -> str:
    lines = []
    for e in entries:
        args = ", ".join(json.dumps(a) for a in e.args)
        lines.append(f"{e.time} {e.replica} {e.prototype} {e.selector} {args}".rstrip())
    return "\n".join(lines) + "\n"


@pytest.fixture(scope="session")
def board_program():
    return compile_fixture("replicated_board").expanded


@pytest.fixture(scope="session")
def info_program():
    return compile_fixture("replicated_info").expanded


# criterion number -> (title, passed)
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, passed = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'} - {title}")

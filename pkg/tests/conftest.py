from __future__ import annotations

import json
import re
from pathlib import Path

import pytest

from rtlsquad.agents import AgentRuntime, ScriptedBackend
from rtlsquad.config import build_config
from rtlsquad.eda import MockEda
from rtlsquad.session import Session, fixed_clock

FIXTURES = Path(__file__).parent / "fixtures"
SCENARIOS = FIXTURES / "scenarios"
STAMP = "2000-01-01T00:00:00+00:00"


def scenario_inputs(name: str) -> dict:
    d = SCENARIOS / name
    init = d / "init.v"
    return {
        "spec_text": (d / "spec.md").read_text(encoding="utf-8"),
        "testbench_text": (d / "tb.v").read_text(encoding="utf-8"),
        "initial_code": init.read_text(encoding="utf-8").rstrip("\n") if init.exists() else None,
    }


def scenario_config(name: str, **overrides):
    base = json.loads((SCENARIOS / name / "config.json").read_text(encoding="utf-8"))
    base.update(overrides)
    return build_config(base)


def scenario_session(name: str, directory: Path | None, **overrides) -> Session:
    backend = ScriptedBackend.from_jsonl(SCENARIOS / name / "agents.jsonl")
    return Session.create(
        scenario_inputs(name), scenario_config(name, **overrides), AgentRuntime(backend), MockEda(),
        directory, fixed_clock(STAMP),
    )


def bare_session(backend, config=None, inputs=None, directory=None) -> Session:
    inputs = inputs or {"spec_text": "8-bit accumulator", "testbench_text": "module tb; endmodule"}
    return Session.create(inputs, config or build_config({"seed": 7}), AgentRuntime(backend), MockEda(),
                          directory, fixed_clock(STAMP))


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


_MSG_MARK = re.compile(r"^(?:\*\*[^*]+\*\* · \w+ · #(\d+)|<!-- message #(\d+) -->)$", re.MULTILINE)


def rendered_seqs(markdown: str) -> list[int]:
    """Message sequence numbers in the order they appear in a rendered document."""
    return [int(a or b) for a, b in _MSG_MARK.findall(markdown)]


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

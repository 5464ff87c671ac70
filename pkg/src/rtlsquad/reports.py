"""Label-driven parsers for compiler, simulator and synthesis output.

Each metric is located by a list of regular expressions tried in order; the
first one that matches wins. Patterns capture ``value`` (and ``unit`` for
power) and may use ``{num}`` as shorthand for a signed decimal/scientific
number.
"""

from __future__ import annotations

import math
import re

from pydantic import BaseModel

from rtlsquad.errors import ConfigError, IndeterminateResult, ParseError
from rtlsquad.model import CompileError, PowerFigure, PpaMetrics, SynthReport

NUM = r"[-+]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?"
_UNIT = r"(?P<unit>[munpµ]?W)\b"


class ParserLabels(BaseModel):
    area: list[str] = [
        r"Chip area for module\s+'[^'\n]*':\s*(?P<value>{num})",
        r"Total cell area:\s*(?P<value>{num})",
        r"Design Area:\s*(?P<value>{num})",
    ]
    critical_path: list[str] = [
        r"Critical Path Length:\s*(?P<value>{num})",
        r"critical path length of\s*(?P<value>{num})\s*ns",
        r"^\s*(?P<value>{num})\s+data arrival time",
    ]
    slack: list[str] = [
        r"Critical Path Slack:\s*(?P<value>{num})",
        r"slack\s*\((?:MET|VIOLATED)\)\s*(?P<value>{num})",
        r"^\s*(?P<value>{num})\s+slack\b",
    ]
    power_total: list[str] = [
        r"Total Power\s*[:=]\s*(?P<value>{num})\s*" + _UNIT,
        r"^\s*Total\b(?!\s+Dynamic)(?![^\n]*%)[^\n]*\s(?P<value>{num})\s*" + _UNIT + r"[ \t]*$",
    ]
    power_dynamic: list[str] = [r"Total Dynamic Power\s*[:=]\s*(?P<value>{num})\s*" + _UNIT]
    power_static: list[str] = [
        r"Cell Leakage Power\s*[:=]\s*(?P<value>{num})\s*" + _UNIT,
        r"Total Static Power\s*[:=]\s*(?P<value>{num})\s*" + _UNIT,
    ]
    cells_total: list[str] = [r"Leaf Cell Count:\s*(?P<value>\d+)", r"Number of cells:\s*(?P<value>\d+)"]
    cells_comb: list[str] = [r"Combinational Cell Count:\s*(?P<value>\d+)"]
    cells_seq: list[str] = [r"Sequential Cell Count:\s*(?P<value>\d+)"]


DEFAULT_LABELS = ParserLabels()

_compiled: dict[str, re.Pattern] = {}


def _pattern(text: str) -> re.Pattern:
    if text not in _compiled:
        try:
            _compiled[text] = re.compile(text.replace("{num}", NUM), re.IGNORECASE | re.MULTILINE)
        except re.error as exc:
            raise ConfigError(f"bad parser pattern {text!r}: {exc}") from None
    return _compiled[text]


def _line_of(text: str, pos: int) -> str:
    start = text.rfind("\n", 0, pos) + 1
    end = text.find("\n", pos)
    return text[start : end if end != -1 else len(text)]


def find_value(text: str, patterns: list[str]) -> tuple[float, str | None, str] | None:
    """First match across ``patterns`` as ``(value, unit, line)``."""
    for pat in patterns:
        m = _pattern(pat).search(text)
        if m is None:
            continue
        line = _line_of(text, m.start())
        try:
            value = float(m.group("value"))
        except (IndexError, ValueError):
            raise ParseError("unreadable number", line) from None
        if not math.isfinite(value):
            raise ParseError("non-finite number", line)
        unit = m.groupdict().get("unit")
        return value, unit.replace("µ", "u") if unit else None, line
    return None


def _power(text: str, patterns: list[str]) -> PowerFigure | None:
    found = find_value(text, patterns)
    if found is None:
        return None
    value, unit, line = found
    if value < 0:
        raise ParseError("negative power", line)
    return PowerFigure(value=value, unit=unit or "uW")


def _count(text: str, patterns: list[str]) -> int | None:
    found = find_value(text, patterns)
    return None if found is None else int(found[0])


def parse_synthesis(sections: dict[str, str], labels: ParserLabels = DEFAULT_LABELS) -> SynthReport:
    """Build a SynthReport from raw report sections (name -> text)."""
    text = "\n".join(sections[name] for name in sorted(sections))

    area = find_value(text, labels.area)
    if area is None:
        raise ParseError("no area figure found in synthesis output")
    timing = find_value(text, labels.critical_path)
    if timing is None:
        raise ParseError("no timing section (critical path) found in synthesis output")
    slack = find_value(text, labels.slack)

    detail = {}
    for name, pats in (
        ("total", labels.power_total),
        ("dynamic", labels.power_dynamic),
        ("static", labels.power_static),
    ):
        fig = _power(text, pats)
        if fig is not None:
            detail[name] = fig
    headline = detail.get("dynamic") or detail.get("total")
    if headline is None:
        raise ParseError("no power figure found in synthesis output")

    for value, _, line in (area, timing):
        if value < 0:
            raise ParseError("negative metric", line)
    metrics = PpaMetrics(
        power_uw=headline.uw,
        critical_path_ns=timing[0],
        area_um2=area[0],
        slack_ns=slack[0] if slack else None,
    )
    return SynthReport(
        metrics=metrics,
        combinational_cells=_count(text, labels.cells_comb),
        sequential_cells=_count(text, labels.cells_seq),
        total_cells=_count(text, labels.cells_total),
        power_detail=detail,
        raw_sections=dict(sections),
    )


def parse_synthesis_bytes(data: bytes, labels: ParserLabels = DEFAULT_LABELS) -> SynthReport:
    return parse_synthesis({"log": data.decode("utf-8", errors="replace")}, labels)


_COMPILE_LINE = re.compile(r"^(?P<file>[^\s:]+):(?P<line>\d+):\s*(?P<text>.*\S)\s*$", re.MULTILINE)


def parse_compile_errors(output: str) -> list[CompileError]:
    return [
        CompileError(file=m.group("file"), line=int(m.group("line")), text=m.group("text"))
        for m in _COMPILE_LINE.finditer(output)
    ]


def judge_simulation(log: str, pass_pattern: str, fail_pattern: str) -> bool:
    """True iff the pass pattern matches and the fail pattern does not."""
    ok_re, bad_re = re.compile(pass_pattern), re.compile(fail_pattern)
    saw_pass = saw_fail = False
    for line in log.splitlines():
        p, f = bool(ok_re.search(line)), bool(bad_re.search(line))
        if p and f:
            raise ConfigError(f"pass and fail patterns both match {line!r}")
        saw_pass |= p
        saw_fail |= f
    if saw_fail:
        return False
    if saw_pass:
        return True
    raise IndeterminateResult("simulation log matches neither the pass nor the fail pattern")


def failure_lines(log: str, fail_pattern: str, limit: int = 10) -> list[str]:
    bad_re = re.compile(fail_pattern, re.IGNORECASE)
    lines = [ln.strip() for ln in log.splitlines() if bad_re.search(ln)]
    return list(dict.fromkeys(lines))[:limit]

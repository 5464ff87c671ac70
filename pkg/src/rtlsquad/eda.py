"""Compile / simulate / synthesize behind one interface.

``MockEda`` is steered by a ``// MOCK: key=value ...`` comment in the code and
is a pure function of the code text. ``ExternalEda`` shells out to configured
command templates and parses whatever the tools print or write.
"""

from __future__ import annotations

import hashlib
import logging
import re
import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Protocol

from pydantic import BaseModel, Field, model_validator

from rtlsquad.errors import ToolError
from rtlsquad.model import CompileError, PowerFigure, PpaMetrics, SynthReport
from rtlsquad.reports import ParserLabels, judge_simulation, parse_compile_errors, parse_synthesis

log = logging.getLogger(__name__)

SECTION_KEYWORDS = ("qor", "power", "area", "timing")


class EdaConfig(BaseModel):
    backend: Literal["mock", "external"] = "mock"
    compile_cmd: str | None = None
    sim_cmd: str | None = None
    synth_cmd: str | None = None
    timeout_s: int = 600
    pass_pattern: str = r"TEST PASSED"
    fail_pattern: str = r"TEST FAILED|MISMATCH"
    report_globs: list[str] = Field(default_factory=lambda: ["*.rpt"])
    labels: ParserLabels = Field(default_factory=ParserLabels)

    @model_validator(mode="after")
    def _check(self) -> EdaConfig:
        if self.backend == "external":
            missing = [n for n in ("compile_cmd", "sim_cmd", "synth_cmd") if not getattr(self, n)]
            if missing:
                raise ValueError("external backend needs " + ", ".join(missing))
        if re.fullmatch(self.pass_pattern, "") is not None or re.fullmatch(self.fail_pattern, "") is not None:
            raise ValueError("pass/fail patterns must not match the empty line")
        return self


class EdaBackend(Protocol):
    config: EdaConfig

    def compile(self, code: str, tb: str, out_dir: Path | None = None) -> tuple[bool, list[CompileError]]: ...

    def simulate(self, code: str, tb: str, out_dir: Path | None = None) -> tuple[bool, str]: ...

    def synthesize(self, code: str, out_dir: Path | None = None) -> SynthReport: ...


# -- mock ------------------------------------------------------------------

_DIRECTIVE = re.compile(r"//\s*MOCK:(?P<body>[^\n]*)")
_TRUE = {"1", "true", "yes", "on"}


@dataclass(frozen=True)
class MockDirectives:
    compile_ok: bool
    passed: bool
    power: float
    perf: float
    area: float
    slack: float | None
    cells: int
    comb: int
    seq: int


def _hash_default(code: str, salt: str, lo: float, span: int) -> float:
    h = hashlib.sha256(f"{salt}:{code}".encode()).hexdigest()
    return lo + (int(h[:8], 16) % span) / 100.0


def parse_directives(code: str) -> MockDirectives:
    found: dict[str, str] = {}
    m = _DIRECTIVE.search(code)
    if m:
        for token in m.group("body").split():
            key, sep, value = token.partition("=")
            if sep:
                found[key.strip().lower()] = value.strip()

    def num(key: str, fallback: float) -> float:
        try:
            return float(found[key])
        except (KeyError, ValueError):
            return fallback

    seq = int(num("seq", 1 + _hash_default(code, "seq", 0, 2000) // 1))
    comb = int(num("comb", 1 + _hash_default(code, "comb", 0, 5000) // 1))
    return MockDirectives(
        compile_ok=found.get("compile", "true").lower() in _TRUE,
        passed=found.get("pass", "true").lower() in _TRUE,
        power=num("power", _hash_default(code, "power", 1.0, 10_000)),
        perf=num("perf", _hash_default(code, "perf", 0.5, 1_000)),
        area=num("area", _hash_default(code, "area", 10.0, 100_000)),
        slack=num("slack", 0.0) if "slack" in found else None,
        cells=int(num("cells", seq + comb)),
        comb=comb,
        seq=seq,
    )


class MockEda:
    def __init__(self, config: EdaConfig | None = None):
        self.config = config or EdaConfig()

    def compile(self, code, tb, out_dir=None):
        d = parse_directives(code)
        if d.compile_ok:
            return True, []
        return False, [CompileError(file="design.v", line=1, text="mock compile error")]

    def simulate(self, code, tb, out_dir=None):
        if parse_directives(code).passed:
            return True, "TEST PASSED (mock)\n"
        return False, "simulation mismatch (mock)\n"

    def synthesize(self, code, out_dir=None):
        d = parse_directives(code)
        metrics = PpaMetrics(power_uw=d.power, critical_path_ns=d.perf, area_um2=d.area, slack_ns=d.slack)
        qor = (
            f"Critical Path Length: {d.perf!r}\n"
            + (f"Critical Path Slack: {d.slack!r}\n" if d.slack is not None else "")
            + f"Leaf Cell Count: {d.cells}\n"
            f"Combinational Cell Count: {d.comb}\n"
            f"Sequential Cell Count: {d.seq}\n"
        )
        return SynthReport(
            metrics=metrics,
            combinational_cells=d.comb,
            sequential_cells=d.seq,
            total_cells=d.cells,
            power_detail={"dynamic": PowerFigure(value=d.power, unit="uW")},
            raw_sections={
                "qor": qor,
                "power": f"Total Dynamic Power = {d.power!r} uW\n",
                "area": f"Total cell area: {d.area!r}\n",
            },
        )


# -- external tools --------------------------------------------------------


def section_name(filename: str) -> str:
    lower = filename.lower()
    for key in SECTION_KEYWORDS:
        if key in lower:
            return key
    return Path(filename).stem


class ExternalEda:
    def __init__(self, config: EdaConfig):
        if config.backend != "external":
            raise ValueError("ExternalEda needs backend='external'")
        self.config = config

    def _workdir(self, out_dir: Path | None) -> Path:
        if out_dir is None:
            out_dir = Path(tempfile.mkdtemp(prefix="rtlsquad-"))
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "raw").mkdir(exist_ok=True)
        return out_dir

    def _run(self, template: str, out_dir: Path, name: str, code: str, tb: str | None = None):
        code_file = out_dir / "design.v"
        code_file.write_text(code, encoding="utf-8")
        tb_file = out_dir / "tb.v"
        if tb is not None:
            tb_file.write_text(tb, encoding="utf-8")
        cmd = template.format(
            code_file=shlex.quote(str(code_file)),
            tb_file=shlex.quote(str(tb_file)),
            out_dir=shlex.quote(str(out_dir)),
        )
        log.debug("running %s: %s", name, cmd)
        try:
            proc = subprocess.run(
                cmd, shell=True, cwd=out_dir, capture_output=True, text=True,
                errors="replace", timeout=self.config.timeout_s,
            )
        except subprocess.TimeoutExpired:
            raise ToolError(f"{name} timed out after {self.config.timeout_s}s") from None
        except OSError as exc:
            raise ToolError(f"{name} could not start: {exc}") from None
        (out_dir / "raw" / f"{name}.stdout").write_text(proc.stdout, encoding="utf-8")
        (out_dir / "raw" / f"{name}.stderr").write_text(proc.stderr, encoding="utf-8")
        if proc.returncode in (126, 127):
            raise ToolError(f"{name} tool missing or not executable: {proc.stderr.strip()[:200]}")
        return proc

    def compile(self, code, tb, out_dir=None):
        out_dir = self._workdir(out_dir)
        proc = self._run(self.config.compile_cmd, out_dir, "compile", code, tb)
        errors = parse_compile_errors(proc.stdout + "\n" + proc.stderr)
        if proc.returncode == 0:
            return True, []
        if not errors:
            text = (proc.stderr or proc.stdout).strip().splitlines()
            errors = [CompileError(file="design.v", line=0, text=text[-1] if text else f"exit {proc.returncode}")]
        return False, errors

    def simulate(self, code, tb, out_dir=None):
        out_dir = self._workdir(out_dir)
        proc = self._run(self.config.sim_cmd, out_dir, "simulate", code, tb)
        output = proc.stdout + proc.stderr
        return judge_simulation(output, self.config.pass_pattern, self.config.fail_pattern), output

    def synthesize(self, code, out_dir=None):
        out_dir = self._workdir(out_dir)
        proc = self._run(self.config.synth_cmd, out_dir, "synthesize", code)
        if proc.returncode != 0:
            raise ToolError(f"synthesis exited with {proc.returncode}: {proc.stderr.strip()[:200]}")
        sections = {"log": proc.stdout}
        for pattern in self.config.report_globs:
            for path in sorted(out_dir.glob(pattern)):
                sections[section_name(path.name)] = path.read_text(encoding="utf-8", errors="replace")
        return parse_synthesis(sections, self.config.labels)


def make_backend(config: EdaConfig) -> EdaBackend:
    return ExternalEda(config) if config.backend == "external" else MockEda(config)

"""A live session: state plus the effects the squads are allowed to perform."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable

from pydantic import ValidationError

from rtlsquad.agents import AgentRuntime, Reply
from rtlsquad.config import OrchestratorConfig
from rtlsquad.doc import BOUNDARY_EVENTS, DecisionLog, read_transcript, render_markdown
from rtlsquad.eda import EdaBackend
from rtlsquad.errors import DocError, ProtocolBreakdown, ResumeError
from rtlsquad.model import (
    DesignInputs,
    Message,
    Phase,
    Role,
    SessionState,
    Stage,
    VerificationReport,
    new_session,
    record_version,
)
from rtlsquad.payloads import PayloadKind

SESSION_SCHEMA = 1
SESSION_FILE = "session.json"
TRANSCRIPT_FILE = "transcript.jsonl"
DOC_FILE = "decision_path.md"


def utc_clock() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def fixed_clock(stamp: str = "2000-01-01T00:00:00+00:00") -> Callable[[], str]:
    return lambda: stamp


@dataclass
class Session:
    state: SessionState
    config: OrchestratorConfig
    runtime: AgentRuntime
    eda: EdaBackend
    log: DecisionLog
    clock: Callable[[], str] = utc_clock
    directory: Path | None = None
    input_fn: Callable[[str], str] | None = field(default=None, repr=False)

    # -- construction ------------------------------------------------------

    @classmethod
    def create(
        cls,
        inputs: DesignInputs | dict,
        config: OrchestratorConfig,
        runtime: AgentRuntime,
        eda: EdaBackend,
        directory: str | Path | None = None,
        clock: Callable[[], str] = utc_clock,
    ) -> Session:
        state = new_session(inputs, config.seed, config)
        directory = Path(directory) if directory is not None else None
        if directory is not None:
            directory.mkdir(parents=True, exist_ok=True)
            if (directory / TRANSCRIPT_FILE).exists():
                raise DocError(f"{directory} already holds a session")
        log = DecisionLog(directory / TRANSCRIPT_FILE if directory else None)
        session = cls(state, config, runtime, eda, log, clock, directory)
        for msg in state.pool:
            session._emit_message(msg)
        if state.latest is not None:
            session._emit_version(state.latest.version_id)
        session.emit("loop_transition", **{"from": "start", "to": state.next_step.value, "loop": None,
                                           "k": 0, "j": 0})
        session.save()
        return session

    @classmethod
    def resume(
        cls,
        directory: str | Path,
        runtime_factory: Callable[[OrchestratorConfig, Path], AgentRuntime],
        eda_factory: Callable[[OrchestratorConfig], EdaBackend],
        clock: Callable[[], str] = utc_clock,
        config_overrides: Callable[[OrchestratorConfig], OrchestratorConfig] | None = None,
    ) -> Session:
        directory = Path(directory)
        state, config = load_session_file(directory)
        events = read_transcript(directory / TRANSCRIPT_FILE)
        if len(events) != state.event_count:
            raise ResumeError(
                f"transcript holds {len(events)} events but the session expects {state.event_count}"
            )
        if [e.get("n") for e in events] != list(range(1, len(events) + 1)):
            raise ResumeError("transcript events are out of order")
        if not events or events[-1]["type"] not in BOUNDARY_EVENTS:
            raise ResumeError("transcript does not end at a stage boundary")
        if config_overrides is not None:
            config = config_overrides(config)
        log = DecisionLog(directory / TRANSCRIPT_FILE, events)
        return cls(state, config, runtime_factory(config, directory), eda_factory(config), log, clock, directory)

    # -- events and messages -----------------------------------------------

    def emit(self, type_: str, **fields) -> dict:
        event = {"type": type_, "n": self.state.event_count + 1, "ts": self.clock(), **fields}
        self.log.append(event)
        self.state.event_count += 1
        return event

    def _emit_message(self, msg: Message) -> None:
        self.emit(
            "message",
            seq=msg.seq,
            stage=msg.stage.value if msg.stage else None,
            round=msg.round,
            author=msg.author.value,
            phase=msg.phase.value,
            body=msg.body,
            blocks=msg.machine_blocks,
        )

    def post(self, stage: Stage | None, round_no: int, author: Role, phase: Phase, body: str,
             blocks: Iterable[dict] = ()) -> Message:
        msg = Message(seq=self.state.next_seq(), stage=stage, round=round_no, author=author,
                      phase=phase, body=body, machine_blocks=list(blocks))
        self.state.pool.append(msg)
        self._emit_message(msg)
        return msg

    def note(self, stage: Stage | None, text: str, phase: Phase = Phase.SYSTEM) -> Message:
        return self.post(stage, self.visit(stage) if stage else 0, Role.SYSTEM, phase, text)

    # -- stage visits ------------------------------------------------------

    def begin_visit(self, stage: Stage) -> int:
        self.state.stage_visits[stage] = self.state.stage_visits.get(stage, 0) + 1
        return self.state.stage_visits[stage]

    def visit(self, stage: Stage) -> int:
        return self.state.stage_visits.get(stage, 0)

    # -- agents ------------------------------------------------------------

    def converse(
        self,
        role: Role,
        stage: Stage,
        phase: Phase | Callable[[Reply], Phase],
        values: dict,
        expected: Iterable[PayloadKind] = (),
        check=None,
    ) -> tuple[Reply, Message]:
        """Ask ``role``, post every reply it produced, and return the accepted one."""
        round_no = self.visit(stage)
        values = {"spec": self.state.inputs.spec_text, **values}
        transcript = self.runtime.transcript(role, values)
        try:
            reply = self.runtime.exchange(
                role, transcript, stage=stage, round_no=round_no,
                counts=self.state.call_counts, expected=expected, check=check,
            )
        except ProtocolBreakdown as exc:
            fallback = phase if isinstance(phase, Phase) else Phase.COMMUNICATE
            for text in exc.replies:
                self.post(stage, round_no, role, fallback, text)
                self.note(stage, f"reply from {role.value} rejected: {exc.reason}")
            raise
        final_phase = phase if isinstance(phase, Phase) else phase(reply)
        for text, problem in reply.rejected:
            self.post(stage, round_no, role, final_phase, text)
            self.note(stage, f"reply from {role.value} rejected: {problem}")
        msg = self.post(stage, round_no, role, final_phase, reply.prose, [p.as_dict() for p in reply.payloads])
        return reply, msg

    # -- versions and reports ----------------------------------------------

    def _emit_version(self, vid: int) -> None:
        v = self.state.version(vid)
        if self.directory is not None:
            path = self.directory / "versions" / f"v{vid}.v"
            path.parent.mkdir(exist_ok=True)
            path.write_text(v.code, encoding="utf-8")
        self.emit("version_recorded", version_id=vid, parent_id=v.parent_id, produced_by=v.produced_by)

    def record(self, code: str) -> int:
        vid = record_version(self.state, code)
        self._emit_version(vid)
        return vid

    def report_dir(self, vid: int) -> Path | None:
        if self.directory is None:
            return None
        path = self.directory / "reports" / f"v{vid}"
        path.mkdir(parents=True, exist_ok=True)
        return path

    def store_report(self, report: VerificationReport) -> None:
        self.state.reports[report.version_id] = report
        out = self.report_dir(report.version_id)
        if out is None:
            return
        (out / "report.json").write_text(report.model_dump_json(indent=2), encoding="utf-8")
        (out / "simulation.log").write_text(report.sim_log_excerpt, encoding="utf-8")
        if report.synth is not None:
            for name, text in report.synth.raw_sections.items():
                (out / f"{name}.txt").write_text(text, encoding="utf-8")

    # -- persistence -------------------------------------------------------

    def save(self) -> None:
        if self.directory is None:
            return
        doc = {
            "schema": SESSION_SCHEMA,
            "config": self.config.model_dump(mode="json"),
            "state": self.state.model_dump(mode="json"),
        }
        tmp = self.directory / (SESSION_FILE + ".tmp")
        tmp.write_text(json.dumps(doc, indent=2, sort_keys=True), encoding="utf-8")
        os.replace(tmp, self.directory / SESSION_FILE)

    def display_names(self) -> dict[str, str]:
        return {r.value: name for r, name in self.config.provider.display_names.items()}

    def render(self) -> str:
        text = render_markdown(self.log.events, self.display_names())
        if self.directory is not None:
            (self.directory / DOC_FILE).write_text(text, encoding="utf-8")
        return text


def load_session_file(directory: Path) -> tuple[SessionState, OrchestratorConfig]:
    path = Path(directory) / SESSION_FILE
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ResumeError(f"cannot read {path}: {exc}") from None
    if not isinstance(doc, dict) or doc.get("schema") != SESSION_SCHEMA:
        raise ResumeError(f"unsupported session schema in {path}")
    try:
        return SessionState.model_validate(doc["state"]), OrchestratorConfig.model_validate(doc["config"])
    except (KeyError, ValidationError) as exc:
        raise ResumeError(f"invalid session file: {exc}") from None

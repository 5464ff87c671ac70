"""Append-only JSONL transcript and its Markdown rendering.

The JSONL file is authoritative: its first line is ``{"schema": 1}`` and every
following line is one event. Markdown is derived from the events alone, so
re-rendering the same transcript always yields the same bytes.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Iterable

from rtlsquad.errors import DocError, ResumeError

SCHEMA = 1
EVENT_TYPES = {
    "message",
    "debate_round",
    "commits_proposed",
    "vote_tally",
    "plan_final",
    "version_recorded",
    "verification",
    "points_updated",
    "loop_transition",
    "termination",
}
BOUNDARY_EVENTS = {"loop_transition", "termination"}

STAGE_TITLES = {
    "exploration": "Exploration stage",
    "implementation": "Implementation stage",
    "verification": "Verification & evaluation stage",
}


def dump_event(event: dict) -> str:
    return json.dumps(event, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


class DecisionLog:
    """In-memory event list mirrored line-by-line to ``transcript.jsonl``."""

    def __init__(self, path: str | Path | None = None, events: Iterable[dict] = ()):
        self.path = Path(path) if path is not None else None
        self.events = list(events)
        if self.path is not None and not self.path.exists():
            self._write(dump_event({"schema": SCHEMA}) + "\n")

    def _write(self, text: str) -> None:
        try:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(text)
                fh.flush()
                os.fsync(fh.fileno())
        except OSError as exc:
            raise DocError(f"cannot write transcript {self.path}: {exc}") from exc

    def append(self, event: dict) -> None:
        if event.get("type") not in EVENT_TYPES:
            raise DocError(f"unknown event type {event.get('type')!r}")
        if self.path is not None:
            self._write(dump_event(event) + "\n")
        self.events.append(event)


def append_event(log: DecisionLog, event: dict) -> DecisionLog:
    log.append(event)
    return log


def render_jsonl(events: Iterable[dict]) -> str:
    return "".join(dump_event(e) + "\n" for e in [{"schema": SCHEMA}, *events])


def parse_jsonl(text: str) -> list[dict]:
    if not text:
        raise ResumeError("transcript is empty")
    if not text.endswith("\n"):
        raise ResumeError("transcript ends with a partial line")
    # split on \n only: bodies may hold U+2028 and friends unescaped
    lines = text[:-1].split("\n")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError:
        raise ResumeError("transcript header is not JSON") from None
    if not isinstance(header, dict) or header.get("schema") != SCHEMA:
        raise ResumeError(f"unsupported transcript schema {header!r}")
    events = []
    for n, line in enumerate(lines[1:], 2):
        try:
            event = json.loads(line)
        except json.JSONDecodeError:
            raise ResumeError(f"transcript line {n} is not valid JSON") from None
        if not isinstance(event, dict) or event.get("type") not in EVENT_TYPES:
            raise ResumeError(f"transcript line {n} is not a known event")
        events.append(event)
    return events


def read_transcript(path: str | Path) -> list[dict]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ResumeError(f"cannot read transcript: {exc}") from exc
    return parse_jsonl(text)


# -- markdown --------------------------------------------------------------


def _fmt(x) -> str:
    return f"{x:g}" if isinstance(x, float) else str(x)


def _quote(text: str) -> list[str]:
    return [f"> {ln}".rstrip() for ln in text.splitlines()] or [">"]


class _Renderer:
    def __init__(self, names: dict[str, str]):
        self.names = names
        self.out: list[str] = []
        self.section: tuple | None = None

    def name(self, role: str) -> str:
        return self.names.get(role, role)

    def para(self, *lines: str) -> None:
        self.out.extend(lines)
        self.out.append("")

    def enter(self, stage: str | None, round_no: int) -> None:
        if stage is None or self.section == (stage, round_no):
            return
        self.section = (stage, round_no)
        self.para(f"## {STAGE_TITLES.get(stage, stage)} (visit {round_no})")

    def blocks(self, blocks: list[dict]) -> None:
        bullets = []
        for b in blocks:
            kind = b.get("kind")
            if kind == "code":
                if bullets:
                    self.para(*bullets)
                    bullets = []
                self.para("```verilog", b["code"], "```")
            elif kind == "commit":
                action = b.get("action") or {}
                label = ("Exploration Action" if action.get("kind") == "expl" else "Optimization Action")
                if b["op"] == "add":
                    bullets.append(f"- proposes: {label}: {action['description']}")
                elif b["op"] == "modify":
                    bullets.append(f"- proposes: modify {b['action_id']} to {label}: {action['description']}")
                else:
                    bullets.append(f"- proposes: delete action {b['action_id']}")
            elif kind == "vote":
                reason = f" ({b['reason']})" if b.get("reason") else ""
                bullets.append(f"- vote on commit {b['commit_id']}: {b['decision']}{reason}")
            elif kind == "rating":
                bullets.append(f"- rating of {b['value']}/5")
            elif kind == "decision":
                best = f" (best v{b['best_version']})" if b.get("best_version") is not None else ""
                bullets.append(f"- decision: {b['decision']}{best}")
                if b.get("justification"):
                    bullets.append(f"  - justification: {b['justification']}")
            elif kind == "checklist":
                done = ", ".join(str(i) for i in b.get("completed", [])) or "none"
                bullets.append(f"- completed items: {done}")
                if b.get("feedback"):
                    bullets.append(f"- feedback: {b['feedback']}")
                for item in b.get("new_items", []):
                    bullets.append(f"- new task: {item}")
            elif kind == "data_request":
                bullets.append(f"- requests data: `{b['section']}`")
            elif kind == "poll":
                reason = f" ({b['reason']})" if b.get("reason") else ""
                bullets.append(f"- plan acceptable: {'yes' if b['acceptable'] else 'no'}{reason}")
        if bullets:
            self.para(*bullets)

    def message(self, e: dict) -> None:
        if e["stage"] is None and e["blocks"] and e["blocks"][0].get("kind") == "config":
            self.para("## Configuration")
            cfg = json.dumps(e["blocks"][0]["config"], indent=2, sort_keys=True, ensure_ascii=False)
            self.para(f"<!-- message #{e['seq']} -->", "```json", cfg, "```")
            return
        self.enter(e["stage"], e["round"])
        if e["author"] == "system":
            tag = "[tool]" if e["phase"] == "observe" else "**system:**"
            self.para(f"<!-- message #{e['seq']} -->", *_quote(f"{tag} {e['body']}"))
            return
        self.para(f"**{self.name(e['author'])}** · {e['phase']} · #{e['seq']}")
        if e["body"]:
            self.para(e["body"])
        self.blocks(e["blocks"])

    def event(self, e: dict) -> None:
        kind = e["type"]
        if kind == "message":
            self.message(e)
        elif kind == "debate_round":
            self.enter("exploration", e["visit"])
            order = ", ".join(self.name(r) for r in e["order"])
            self.para(f"### Debate round {e['round']}", f"Speaking order: {order}")
        elif kind == "commits_proposed":
            lines = ["**Current Commits**", ""]
            for c in e["commits"]:
                lines.append(f"- **Commit {c['number']}** (`{c['commit_id']}`): {c['description']}")
            self.para(*_quote("\n".join(lines)))
        elif kind == "vote_tally":
            self.para(*_quote(self._verdict(e)))
        elif kind == "plan_final":
            lines = [f"**Exploration plan** (revision {e['revision']}, cost {e['cost']} of budget {e['budget']})"]
            lines += [f"- [{a['kind']}] {a['action_id']}: {a['description']}" for a in e["actions"]] or ["- (empty)"]
            self.para(*lines)
        elif kind == "version_recorded":
            parent = "none" if e["parent_id"] is None else f"v{e['parent_id']}"
            self.para(f"*Recorded version v{e['version_id']} (parent {parent}).*")
        elif kind == "verification":
            self.enter("verification", e["round"])
            text = f"Verification of v{e['version_id']}: {e['status']}"
            m = e.get("metrics")
            if m:
                text += (
                    f" (power {_fmt(m['power_uw'])} uW, critical path {_fmt(m['critical_path_ns'])} ns,"
                    f" area {_fmt(m['area_um2'])} um^2)"
                )
            for d in e.get("defects", []):
                text += f"\n- defect: {d}"
            self.para(*_quote(text))
        elif kind == "points_updated":
            self.para(*_quote(
                f"Exploration points: p = {_fmt(e['p'])}, rating {e['r']}/5 -> "
                f"p_hat = {_fmt(e['p_hat'])}, next p = {_fmt(e['p_next'])}"
            ))
        elif kind == "loop_transition":
            loop = f", {e['loop']} loop" if e.get("loop") else ""
            self.para(f"*Transition: {e['from']} -> {e['to']}{loop} (k = {e['k']}, j = {e['j']})*")
        elif kind == "termination":
            self.section = None
            version = "" if e.get("version_id") is None else f"v{e['version_id']}"
            self.para("## Outcome", f"{e['outcome']} {version}".rstrip() + (f": {e['reason']}" if e.get("reason") else ""))

    @staticmethod
    def _verdict(e: dict) -> str:
        cid = e["commit_id"]
        if e["outcome"] == "applied":
            what = {
                "add": "add a new action into Exploration plan",
                "modify": f"modify action {e.get('action_id')} in Exploration plan",
                "delete": f"delete action {e.get('action_id')} from Exploration plan",
            }[e["op"]]
            return f"[x] Commit {cid} Accepted, {what}."
        accepts = sum(v == "accept" for v in e["votes"].values())
        text = f"[ ] Commit {cid} Rejected ({accepts} accept, {len(e['votes']) - accepts} reject)."
        if e.get("note"):
            text += f" {e['note']}"
        for role, vote in sorted(e["votes"].items()):
            if vote == "reject" and e.get("reasons", {}).get(role):
                text += f"\n- {role}: {e['reasons'][role]}"
        return text


def render_markdown(events: Iterable[dict], display_names: dict[str, str] | None = None) -> str:
    r = _Renderer(display_names or {})
    r.para("# Decision path")
    for e in events:
        r.event(e)
    return "\n".join(r.out).rstrip("\n") + "\n"

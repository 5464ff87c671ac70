"""A rule-based agent backend used to author and drive scripted scenarios.

Each role answers from what its prompt shows: experts vote accept on every
commit they owe, the power expert proposes one opt action per debate, the
programmer emits the next queued module, the reviewer ticks every pending item
and the analyst follows a queued list of verdicts.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from rtlsquad.agents import AgentRuntime, CallKey, ChatTurn, RoleConfig
from rtlsquad.model import Role

OWED = re.compile(r"^- ([0-9a-f]{4}) \(proposed by", re.MULTILINE)
PENDING = re.compile(r"^(\d+)\. \[pending\]", re.MULTILINE)


def block(payload: dict) -> str:
    return "```rtlsquad\n" + json.dumps(payload, sort_keys=True) + "\n```"


def module(name: str, *, power=10.0, perf=1.0, area=100.0, passed=True, compile_ok=True, note="") -> str:
    directive = f"// MOCK: compile={str(compile_ok).lower()} pass={str(passed).lower()} power={power} perf={perf} area={area}"
    body = f"  // {note}\n" if note else ""
    return f"{directive}\nmodule {name}(input clk, input rst_n, output reg [7:0] q);\n{body}endmodule"


@dataclass
class Verdict:
    rating: int
    decision: str = "continue"
    best: int | None = None
    request: str | None = None
    text: str = ""


@dataclass
class PolicyBackend:
    codes: list[str]
    verdicts: list[Verdict]
    proposals: list[dict] = field(default_factory=lambda: [
        {"kind": "opt", "description": "Clock-gate the accumulator register while valid_in is low."},
    ])
    rejects: set[str] = field(default_factory=set)
    _code_i: int = 0
    _verdict_i: int = 0
    _proposed: set[int] = field(default_factory=set)

    def complete(self, role: RoleConfig, transcript: list[ChatTurn], key: CallKey) -> str:
        user = transcript[-1].content
        handler = getattr(self, f"_{role.role_id.value}", None) or self._expert
        return handler(user, key)

    # -- roles -------------------------------------------------------------

    def _expert(self, user: str, key: CallKey) -> str:
        if "Answer with a poll block" in user:
            return "The plan looks sound to me.\n\n" + block({"kind": "poll", "acceptable": True})
        if "Propose exactly one incremental" in user:
            return "One small step then.\n\n" + block(
                {"kind": "commit", "op": "add", "action": {"kind": "opt", "description": "Trim one pipeline register."}}
            )
        parts = []
        for cid in OWED.findall(user):
            decision = "reject" if cid in self.rejects else "accept"
            parts.append(block({"kind": "vote", "commit_id": cid, "decision": decision,
                                "reason": "risk of data hazards" if decision == "reject" else "worth trying"}))
        if key.role is Role.POWER_EXPERT and key.round not in self._proposed:
            self._proposed.add(key.round)
            proposal = self.proposals[(key.round - 1) % len(self.proposals)]
            parts.append(block({"kind": "commit", "op": "add", "action": proposal}))
            return "I suggest this change to cut dynamic power.\n\n" + "\n\n".join(parts)
        return "No further changes from me.\n\n" + "\n\n".join(parts) if parts else "No further changes from me."

    def _programmer(self, user: str, key: CallKey) -> str:
        code = self.codes[self._code_i]
        self._code_i += 1
        return "Steps: 1. update the datapath 2. keep the interface.\n\n```verilog\n" + code + "\n```"

    def _reviewer(self, user: str, key: CallKey) -> str:
        done = [int(x) for x in PENDING.findall(user.split("Candidate code")[0])]
        return "All tasks are addressed.\n\n" + block({"kind": "checklist", "completed": done})

    def _observer(self, user: str, key: CallKey) -> str:
        excerpt = user.split("Report material for version", 1)[-1].split("\n", 1)[-1]
        lines = [ln.strip() for ln in excerpt.splitlines() if ":" in ln or "=" in ln][:6]
        return "Findings: " + "; ".join(lines)

    def _analyst(self, user: str, key: CallKey) -> str:
        v = self.verdicts[self._verdict_i]
        if v.request and f"[{v.request}]" not in user:
            return f"Please provide the {v.request} data.\n\n" + block({"kind": "data_request", "section": v.request})
        self._verdict_i += 1
        decision = {"kind": "decision", "decision": v.decision}
        if v.best is not None:
            decision["best_version"] = v.best
        text = v.text or f"The current design earns a rating of {v.rating}/5."
        return text + "\n\n" + block({"kind": "rating", "value": v.rating}) + "\n\n" + block(decision)


def runtime(backend) -> AgentRuntime:
    return AgentRuntime(backend)


class FnBackend:
    """Answer with ``fn(role, user_message, key)``; records every call."""

    def __init__(self, fn):
        self.fn = fn
        self.calls: list[tuple[Role, str, CallKey]] = []

    def complete(self, role: RoleConfig, transcript: list[ChatTurn], key: CallKey) -> str:
        self.calls.append((role.role_id, transcript[-1].content, key))
        return self.fn(role.role_id, transcript[-1].content, key)

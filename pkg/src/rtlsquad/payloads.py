"""Machine-readable blocks embedded in agent replies.

Agents answer in prose and attach fenced blocks: ```rtlsquad blocks hold one
JSON object with a ``kind`` field, ```verilog blocks hold a complete module.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import jsonschema

from rtlsquad.errors import MalformedPayload


class PayloadKind(str, Enum):
    COMMIT = "commit"
    VOTE = "vote"
    RATING = "rating"
    CODE = "code"
    CHECKLIST = "checklist"
    DATA_REQUEST = "data_request"
    DECISION = "decision"
    POLL = "poll"


_ACTION = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["expl", "opt"]},
        "description": {"type": "string", "minLength": 1, "pattern": r"\S"},
    },
    "required": ["kind", "description"],
    "additionalProperties": False,
}

SCHEMAS: dict[PayloadKind, dict] = {
    PayloadKind.COMMIT: {
        "type": "object",
        "properties": {
            "op": {"enum": ["add", "modify", "delete"]},
            "action_id": {"type": "string", "minLength": 1},
            "action": _ACTION,
            "rationale": {"type": "string"},
        },
        "required": ["op"],
        "additionalProperties": False,
        "allOf": [
            {"if": {"properties": {"op": {"const": "add"}}}, "then": {"required": ["action"]}},
            {
                "if": {"properties": {"op": {"const": "modify"}}},
                "then": {"required": ["action_id", "action"]},
            },
            {"if": {"properties": {"op": {"const": "delete"}}}, "then": {"required": ["action_id"]}},
        ],
    },
    PayloadKind.VOTE: {
        "type": "object",
        "properties": {
            "commit_id": {"type": "string", "pattern": "^[0-9a-f]{4}$"},
            "decision": {"enum": ["accept", "reject"]},
            "reason": {"type": "string"},
        },
        "required": ["commit_id", "decision"],
        "additionalProperties": False,
    },
    PayloadKind.RATING: {
        "type": "object",
        "properties": {"value": {"type": "integer", "minimum": 1, "maximum": 5}},
        "required": ["value"],
        "additionalProperties": False,
    },
    PayloadKind.CODE: {
        "type": "object",
        "properties": {"code": {"type": "string", "minLength": 1, "not": {"pattern": "```"}}},
        "required": ["code"],
        "additionalProperties": False,
    },
    PayloadKind.CHECKLIST: {
        "type": "object",
        "properties": {
            "completed": {"type": "array", "items": {"type": "integer"}},
            "feedback": {"type": "string"},
            "new_items": {"type": "array", "items": {"type": "string", "minLength": 1}},
        },
        "required": ["completed"],
        "additionalProperties": False,
    },
    PayloadKind.DATA_REQUEST: {
        "type": "object",
        "properties": {
            "section": {"type": "string", "minLength": 1},
            "detail": {"type": "string"},
        },
        "required": ["section"],
        "additionalProperties": False,
    },
    PayloadKind.DECISION: {
        "type": "object",
        "properties": {
            "decision": {"enum": ["continue", "terminate"]},
            "best_version": {"type": "integer", "minimum": 0},
            "justification": {"type": "string"},
        },
        "required": ["decision"],
        "additionalProperties": False,
    },
    PayloadKind.POLL: {
        "type": "object",
        "properties": {
            "acceptable": {"type": "boolean"},
            "reason": {"type": "string"},
        },
        "required": ["acceptable"],
        "additionalProperties": False,
    },
}

SCHEMA_HINTS: dict[PayloadKind, str] = {
    PayloadKind.COMMIT: '{"kind": "commit", "op": "add", "action": {"kind": "opt", "description": "..."}, "rationale": "..."}',
    PayloadKind.VOTE: '{"kind": "vote", "commit_id": "79b4", "decision": "accept", "reason": "..."}',
    PayloadKind.RATING: '{"kind": "rating", "value": 4}',
    PayloadKind.CODE: "a ```verilog fenced block with the complete module source",
    PayloadKind.CHECKLIST: '{"kind": "checklist", "completed": [1, 2], "feedback": "...", "new_items": []}',
    PayloadKind.DATA_REQUEST: '{"kind": "data_request", "section": "power"}',
    PayloadKind.DECISION: '{"kind": "decision", "decision": "continue", "justification": "..."}',
    PayloadKind.POLL: '{"kind": "poll", "acceptable": true, "reason": "..."}',
}

_FENCE = re.compile(r"```(rtlsquad|verilog)\b[ \t]*\n?(.*?)```", re.DOTALL)


@dataclass(frozen=True)
class Payload:
    kind: PayloadKind
    body: dict[str, Any] = field(default_factory=dict)

    def as_dict(self) -> dict[str, Any]:
        return {"kind": self.kind.value, **self.body}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> Payload:
        d = dict(d)
        return cls(PayloadKind(d.pop("kind")), d)


def validate_payload(kind: PayloadKind, body: dict, position: int = 0) -> None:
    try:
        jsonschema.validate(body, SCHEMAS[kind])
    except jsonschema.ValidationError as exc:
        raise MalformedPayload(kind.value, position, exc.message) from None


def _parse_block(tag: str, content: str, position: int) -> Payload:
    if tag == "verilog":
        body = {"code": content.strip()}
        validate_payload(PayloadKind.CODE, body, position)
        return Payload(PayloadKind.CODE, body)
    try:
        obj = json.loads(content)
    except json.JSONDecodeError as exc:
        raise MalformedPayload(None, position, f"invalid JSON ({exc.msg})") from None
    if not isinstance(obj, dict):
        raise MalformedPayload(None, position, "block must hold one JSON object")
    raw_kind = obj.pop("kind", None)
    try:
        kind = PayloadKind(raw_kind)
    except ValueError:
        raise MalformedPayload(str(raw_kind), position, "unknown payload kind") from None
    if kind is PayloadKind.CODE:
        raise MalformedPayload(kind.value, position, "code goes in a ```verilog block")
    validate_payload(kind, obj, position)
    return Payload(kind, obj)


def split_reply(reply: str) -> tuple[str, list[Payload]]:
    """Separate prose from fenced payloads; raises MalformedPayload."""
    payloads = [_parse_block(m.group(1), m.group(2), i) for i, m in enumerate(_FENCE.finditer(reply))]
    prose = _FENCE.sub("", reply)
    prose = re.sub(r"\n{3,}", "\n\n", prose).strip()
    return prose, payloads


def extract_payloads(reply: str) -> list[Payload]:
    return split_reply(reply)[1]


def render_payload(payload: Payload) -> str:
    if payload.kind is PayloadKind.CODE:
        return f"```verilog\n{payload.body['code']}\n```"
    return "```rtlsquad\n" + json.dumps(payload.as_dict(), ensure_ascii=False) + "\n```"


def schema_help(kinds) -> str:
    lines = ["Attach the machine-readable blocks in this form:"]
    for kind in kinds:
        hint = SCHEMA_HINTS[kind]
        lines.append(f"- {kind.value}: {hint if kind is PayloadKind.CODE else '```rtlsquad ' + hint + ' ```'}")
    return "\n".join(lines)

"""Role-configured chat agents and the backends that answer them."""

from __future__ import annotations

import json
import logging
import os
import re
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Literal, Protocol

import httpx
from pydantic import BaseModel, Field

from rtlsquad.errors import (
    EmptyReply,
    MalformedPayload,
    ProtocolBreakdown,
    ProviderError,
    ScriptExhausted,
)
from rtlsquad.model import Role, Stage
from rtlsquad.payloads import Payload, PayloadKind, schema_help, split_reply

log = logging.getLogger(__name__)

API_KEY_ENV = "RTLSQUAD_API_KEY"
MAX_ATTEMPTS = 3
AGENT_ROLES = tuple(r for r in Role if r is not Role.SYSTEM)


@dataclass(frozen=True)
class ChatTurn:
    speaker: Literal["system", "user", "assistant"]
    content: str

    def __post_init__(self):
        if not self.content:
            raise ValueError("chat turn content must be non-empty")


@dataclass(frozen=True)
class CallKey:
    role: Role
    stage: Stage
    round: int
    index: int

    def as_dict(self) -> dict:
        return {"role": self.role.value, "stage": self.stage.value, "round": self.round, "index": self.index}


@dataclass
class RoleConfig:
    role_id: Role
    system_prompt: str
    task_prompt: str = "{context}"
    temperature: float = 0.8
    max_reply_tokens: int = 2048
    model: str | None = None


class RoleOverride(BaseModel):
    temperature: float | None = None
    max_reply_tokens: int | None = None
    model: str | None = None


class ProviderConfig(BaseModel):
    backend: Literal["scripted", "remote"] = "scripted"
    script_path: str | None = None
    endpoint: str = "https://api.openai.com/v1"
    model: str = "deepseek-chat"
    temperature: float = 0.8
    max_reply_tokens: int = 2048
    timeout_s: float = 120.0
    role_overrides: dict[Role, RoleOverride] = Field(default_factory=dict)
    display_names: dict[Role, str] = Field(default_factory=dict)


# -- prompts ---------------------------------------------------------------

_PLACEHOLDER = re.compile(r"\{([a-z_]+)\}")


def fill(template: str, values: dict[str, object]) -> str:
    """Substitute ``{name}`` placeholders; unknown names and JSON braces are left alone."""
    return _PLACEHOLDER.sub(lambda m: str(values[m.group(1)]) if m.group(1) in values else m.group(0), template)


def load_prompts(override_dir: str | Path | None = None) -> dict[str, str]:
    """Bundled templates, replaced file-by-file by any found in ``override_dir``."""
    prompts = {}
    for entry in resources.files("rtlsquad").joinpath("prompts").iterdir():
        if entry.name.endswith(".txt"):
            prompts[entry.name[:-4]] = entry.read_text(encoding="utf-8")
    if override_dir is not None and Path(override_dir).is_dir():
        for path in Path(override_dir).glob("*.txt"):
            prompts[path.stem] = path.read_text(encoding="utf-8")
    return prompts


def build_roles(provider: ProviderConfig, prompts: dict[str, str] | None = None) -> dict[Role, RoleConfig]:
    prompts = prompts if prompts is not None else load_prompts()
    roles = {}
    for role in AGENT_ROLES:
        over = provider.role_overrides.get(role, RoleOverride())
        roles[role] = RoleConfig(
            role_id=role,
            system_prompt=prompts[role.value],
            task_prompt=prompts.get(f"{role.value}_task", "{context}"),
            temperature=over.temperature if over.temperature is not None else provider.temperature,
            max_reply_tokens=over.max_reply_tokens or provider.max_reply_tokens,
            model=over.model,
        )
    return roles


# -- backends --------------------------------------------------------------


class Backend(Protocol):
    def complete(self, role: RoleConfig, transcript: list[ChatTurn], key: CallKey) -> str: ...


class ScriptedBackend:
    """Replays canned replies keyed by (role, stage, round, index).

    JSONL records look like ``{"key": {"role": ..., "stage": ..., "round": 1,
    "index": 1}, "reply": "..."}``. ``round`` counts visits to the stage and
    ``index`` counts calls made by the role within that visit, both from 1.
    """

    def __init__(self, replies: dict[CallKey, str]):
        self.replies = dict(replies)

    @classmethod
    def from_records(cls, records: Iterable[dict]) -> ScriptedBackend:
        replies = {}
        for n, rec in enumerate(records, 1):
            try:
                k = rec["key"]
                key = CallKey(Role(k["role"]), Stage(k["stage"]), int(k["round"]), int(k["index"]))
                reply = rec["reply"]
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"script record {n}: {exc}") from None
            if key in replies:
                raise ValueError(f"script record {n}: duplicate key {key.as_dict()}")
            replies[key] = str(reply)
        return cls(replies)

    @classmethod
    def from_jsonl(cls, path: str | Path) -> ScriptedBackend:
        with open(path, encoding="utf-8") as fh:
            return cls.from_records(json.loads(line) for line in fh if line.strip())

    def complete(self, role: RoleConfig, transcript: list[ChatTurn], key: CallKey) -> str:
        try:
            return self.replies[key]
        except KeyError:
            raise ScriptExhausted(key.as_dict()) from None


class RecordingBackend:
    """Pass calls through to ``inner`` and append each one as a script record."""

    def __init__(self, inner: Backend, path: str | Path):
        self.inner = inner
        self.path = Path(path)

    def complete(self, role: RoleConfig, transcript: list[ChatTurn], key: CallKey) -> str:
        text = self.inner.complete(role, transcript, key)
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps({"key": key.as_dict(), "reply": text}, ensure_ascii=False) + "\n")
        return text


class RemoteBackend:
    """OpenAI-compatible ``/chat/completions`` client with bounded retries."""

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key: str | None = None,
        timeout_s: float = 120.0,
        client: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
        backoff_s: float = 1.0,
    ):
        self.url = endpoint.rstrip("/") + "/chat/completions"
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        self.client = client or httpx.Client(timeout=timeout_s)
        self.sleep = sleep
        self.backoff_s = backoff_s
        self.last_retry_count = 0

    def _request(self, role: RoleConfig, transcript: list[ChatTurn]) -> dict:
        body = {
            "model": role.model or self.model,
            "messages": [{"role": t.speaker, "content": t.content} for t in transcript],
            "temperature": role.temperature,
        }
        if role.max_reply_tokens:
            body["max_tokens"] = role.max_reply_tokens
        return body

    def complete(self, role: RoleConfig, transcript: list[ChatTurn], key: CallKey | None = None) -> str:
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        body = self._request(role, transcript)
        last_error = "no attempt made"
        for attempt in range(MAX_ATTEMPTS):
            if attempt:
                self.sleep(self.backoff_s * 2 ** (attempt - 1))
            try:
                resp = self.client.post(self.url, json=body, headers=headers)
            except httpx.HTTPError as exc:
                last_error = f"{type(exc).__name__}: {exc}"
                log.warning("provider call failed (attempt %d): %s", attempt + 1, last_error)
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last_error = f"HTTP {resp.status_code}"
                log.warning("provider call failed (attempt %d): %s", attempt + 1, last_error)
                continue
            if resp.status_code >= 400:
                raise ProviderError(f"HTTP {resp.status_code}: {resp.text[:200]}", retry_count=attempt)
            self.last_retry_count = attempt
            try:
                text = resp.json()["choices"][0]["message"]["content"] or ""
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise ProviderError(f"unexpected response shape: {exc}", retry_count=attempt) from None
            return text
        self.last_retry_count = MAX_ATTEMPTS - 1
        raise ProviderError(f"gave up after {MAX_ATTEMPTS} attempts ({last_error})", retry_count=MAX_ATTEMPTS - 1)


# -- runtime ---------------------------------------------------------------


@dataclass
class Reply:
    text: str
    prose: str
    payloads: list[Payload]
    rejected: list[tuple[str, str]] = field(default_factory=list)

    def of(self, kind: PayloadKind) -> list[Payload]:
        return [p for p in self.payloads if p.kind is kind]


Check = Callable[[list[Payload]], "str | None"]


class AgentRuntime:
    def __init__(self, backend: Backend, roles: dict[Role, RoleConfig] | None = None):
        self.backend = backend
        self.roles = roles if roles is not None else build_roles(ProviderConfig())
        self.calls = 0

    def transcript(self, role: Role, values: dict[str, object]) -> list[ChatTurn]:
        cfg = self.roles[role]
        return [
            ChatTurn("system", fill(cfg.system_prompt, values)),
            ChatTurn("user", fill(cfg.task_prompt, values)),
        ]

    @staticmethod
    def next_key(role: Role, stage: Stage, round_no: int, counts: dict[str, int]) -> CallKey:
        slot = f"{role.value}|{stage.value}|{round_no}"
        counts[slot] = counts.get(slot, 0) + 1
        return CallKey(role, stage, round_no, counts[slot])

    def complete(self, role: Role, transcript: list[ChatTurn], key: CallKey) -> str:
        if not transcript or transcript[0].speaker != "system":
            raise ValueError("transcript must open with the role's system prompt")
        self.calls += 1
        text = self.backend.complete(self.roles[role], transcript, key)
        if not text or not text.strip():
            raise EmptyReply(f"{role.value} returned an empty reply")
        return text

    def exchange(
        self,
        role: Role,
        transcript: list[ChatTurn],
        *,
        stage: Stage,
        round_no: int,
        counts: dict[str, int],
        expected: Iterable[PayloadKind] = (),
        check: Check | None = None,
    ) -> Reply:
        """One call plus at most one corrective retry."""
        expected = list(expected)
        transcript = list(transcript)
        rejected: list[tuple[str, str]] = []
        for attempt in range(2):
            text = self.complete(role, transcript, self.next_key(role, stage, round_no, counts))
            problem = None
            try:
                prose, payloads = split_reply(text)
            except MalformedPayload as exc:
                problem = str(exc)
            else:
                kinds = {p.kind for p in payloads}
                missing = [k.value for k in expected if k not in kinds]
                if missing:
                    problem = "missing required block(s): " + ", ".join(missing)
                elif check is not None:
                    problem = check(payloads)
            if problem is None:
                return Reply(text, prose, payloads, rejected)
            rejected.append((text, problem))
            if attempt == 0:
                hint = schema_help(expected) if expected else "Follow the block formats from your instructions."
                transcript += [
                    ChatTurn("assistant", text),
                    ChatTurn("user", f"Your reply could not be processed: {problem}.\n{hint}\nPlease answer again."),
                ]
        raise ProtocolBreakdown(role.value, problem, [t for t, _ in rejected])

    def ask_with_repair(self, role: Role, transcript: list[ChatTurn], expected_kinds, **kw) -> Reply:
        expected_kinds = list(expected_kinds)
        if not expected_kinds:
            raise ValueError("expected_kinds must be non-empty")
        return self.exchange(role, transcript, expected=expected_kinds, **kw)

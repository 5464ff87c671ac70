"""Exception hierarchy shared by every stage of a run."""

from __future__ import annotations


class RtlSquadError(Exception):
    """Base class for all errors raised by the package."""


class InvalidInput(RtlSquadError, ValueError):
    pass


class InvalidRating(RtlSquadError, ValueError):
    pass


class InvalidNormalizer(RtlSquadError, ValueError):
    pass


class ConfigError(RtlSquadError, ValueError):
    pass


# -- agent runtime ---------------------------------------------------------


class ProviderError(RtlSquadError):
    def __init__(self, message: str, retry_count: int = 0):
        super().__init__(message)
        self.retry_count = retry_count


class EmptyReply(ProviderError):
    pass


class ScriptExhausted(RtlSquadError):
    def __init__(self, key):
        super().__init__(f"no scripted reply for {key}")
        self.key = key


class MalformedPayload(RtlSquadError):
    def __init__(self, kind: str | None, position: int, detail: str):
        super().__init__(f"malformed {kind or 'unknown'} payload at block {position}: {detail}")
        self.kind = kind
        self.position = position
        self.detail = detail


class ProtocolBreakdown(RtlSquadError):
    def __init__(self, role, reason: str, replies: list[str] | None = None):
        super().__init__(f"{role}: {reason}")
        self.role = role
        self.reason = reason
        self.replies = list(replies or [])


# -- squads ----------------------------------------------------------------


class StageFailed(RtlSquadError):
    pass


class ExplorationFailed(StageFailed):
    pass


class ImplementationFailed(StageFailed):
    pass


class VerificationStageFailed(StageFailed):
    pass


class IncompleteBallot(RtlSquadError):
    pass


class UnknownAction(RtlSquadError):
    pass


class OverBudget(RtlSquadError):
    pass


class NothingToDo(RtlSquadError):
    pass


class NoCandidate(RtlSquadError):
    pass


class SectionUnavailable(RtlSquadError):
    def __init__(self, section: str, available):
        available = sorted(available)
        super().__init__(
            f"report section {section!r} is not available (have: {', '.join(available) or 'none'})"
        )
        self.section = section
        self.available = available


# -- EDA -------------------------------------------------------------------


class ToolError(RtlSquadError):
    pass


class IndeterminateResult(RtlSquadError):
    pass


class ParseError(RtlSquadError):
    def __init__(self, message: str, line: str | None = None):
        super().__init__(message if line is None else f"{message}: {line!r}")
        self.line = line


# -- persistence -----------------------------------------------------------


class DocError(RtlSquadError):
    pass


class ResumeError(RtlSquadError):
    pass

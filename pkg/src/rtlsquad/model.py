"""Shared value types and the serializable session state."""

from __future__ import annotations

import hashlib
import json
import math
from enum import Enum
from typing import Annotated, Any, Literal, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from rtlsquad.errors import InvalidInput


class Stage(str, Enum):
    EXPLORATION = "exploration"
    IMPLEMENTATION = "implementation"
    VERIFICATION = "verification"


class Role(str, Enum):
    PROGRAMMER = "programmer"
    REVIEWER = "reviewer"
    OBSERVER = "observer"
    ANALYST = "analyst"
    POWER_EXPERT = "power_expert"
    PERF_EXPERT = "perf_expert"
    AREA_EXPERT = "area_expert"
    SYSTEM = "system"


SQUADS: dict[Stage, tuple[Role, ...]] = {
    Stage.EXPLORATION: (Role.POWER_EXPERT, Role.PERF_EXPERT, Role.AREA_EXPERT),
    Stage.IMPLEMENTATION: (Role.PROGRAMMER, Role.REVIEWER),
    Stage.VERIFICATION: (Role.OBSERVER, Role.ANALYST),
}
EXPERTS = SQUADS[Stage.EXPLORATION]


def squad_of(role: Role) -> Stage:
    for stage, members in SQUADS.items():
        if role in members:
            return stage
    raise KeyError(role)


class Phase(str, Enum):
    COMMUNICATE = "communicate"
    COMMIT = "commit"
    REVIEW = "review"
    GENERATE = "generate"
    FEEDBACK = "feedback"
    OBSERVE = "observe"
    ANALYZE = "analyze"
    SYSTEM = "system"


class Verified(str, Enum):
    UNCHECKED = "unchecked"
    PASSED = "passed"
    FAILED = "failed"
    # an unverified version replaced by a newer one in the same implementation stage
    SUPERSEDED = "superseded"


class ActionKind(str, Enum):
    EXPL = "expl"
    OPT = "opt"

    @property
    def cost(self) -> int:
        return 2 if self is ActionKind.EXPL else 1

    @property
    def label(self) -> str:
        return "Exploration Action" if self is ActionKind.EXPL else "Optimization Action"


class _Model(BaseModel):
    model_config = ConfigDict(validate_assignment=True, use_enum_values=False)


class DesignInputs(_Model):
    spec_text: str
    testbench_text: str
    initial_code: str | None = None

    @field_validator("spec_text", "testbench_text")
    @classmethod
    def _non_empty(cls, v: str) -> str:
        if not v.strip():
            raise ValueError("must be non-empty")
        return v


class PpaMetrics(_Model):
    power_uw: float
    critical_path_ns: float
    area_um2: float
    slack_ns: float | None = None

    @model_validator(mode="after")
    def _check(self) -> PpaMetrics:
        for name in ("power_uw", "critical_path_ns", "area_um2"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
        if self.slack_ns is not None and not math.isfinite(self.slack_ns):
            raise ValueError("slack_ns must be finite")
        return self

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.power_uw, self.critical_path_ns, self.area_um2)


class RtlVersion(_Model):
    version_id: int = Field(ge=0)
    code: str
    parent_id: int | None = None
    verified: Verified = Verified.UNCHECKED
    metrics: PpaMetrics | None = None
    produced_by: Literal["initial", "implementation"] = "implementation"

    @model_validator(mode="after")
    def _check(self) -> RtlVersion:
        if self.parent_id is not None and self.parent_id >= self.version_id:
            raise ValueError("parent_id must precede version_id")
        if self.metrics is not None and self.verified is not Verified.PASSED:
            raise ValueError("metrics are only recorded for passed versions")
        return self


class ExplAction(_Model):
    action_id: str
    kind: ActionKind
    description: str

    @field_validator("description")
    @classmethod
    def _non_empty(cls, v: str) -> str:
        if not v.strip():
            raise ValueError("description must be non-empty")
        return v

    @property
    def cost(self) -> int:
        return self.kind.cost

    def label(self) -> str:
        return f"{self.kind.label}: {self.description}"


class ExplorationPlan(_Model):
    actions: list[ExplAction] = Field(default_factory=list)
    revision: int = 0

    @field_validator("actions")
    @classmethod
    def _unique(cls, v: list[ExplAction]) -> list[ExplAction]:
        ids = [a.action_id for a in v]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate action_id in plan")
        return v

    @property
    def total_cost(self) -> int:
        return sum(a.cost for a in self.actions)

    def find(self, action_id: str) -> ExplAction | None:
        return next((a for a in self.actions if a.action_id == action_id), None)


class AddAction(_Model):
    op: Literal["add"] = "add"
    action: ExplAction


class ModifyAction(_Model):
    op: Literal["modify"] = "modify"
    action_id: str
    action: ExplAction


class DeleteAction(_Model):
    op: Literal["delete"] = "delete"
    action_id: str


Mutation = Annotated[Union[AddAction, ModifyAction, DeleteAction], Field(discriminator="op")]


def describe_mutation(mutation) -> str:
    if isinstance(mutation, AddAction):
        return mutation.action.label()
    if isinstance(mutation, ModifyAction):
        return f"Modify {mutation.action_id} to {mutation.action.label()}"
    return f"Delete action {mutation.action_id}"


class Vote(str, Enum):
    ACCEPT = "accept"
    REJECT = "reject"


class CommitOutcome(str, Enum):
    PENDING = "pending"
    APPLIED = "applied"
    REJECTED = "rejected"


class Commit(_Model):
    commit_id: str = Field(pattern=r"^[0-9a-f]{4}$")
    mutation: Mutation
    rationale: str = ""
    proposer: Role
    votes: dict[Role, Vote] = Field(default_factory=dict)
    reasons: dict[Role, str] = Field(default_factory=dict)
    outcome: CommitOutcome = CommitOutcome.PENDING
    note: str | None = None

    @model_validator(mode="after")
    def _proposer_accepts(self) -> Commit:
        if self.votes.get(self.proposer, Vote.ACCEPT) is not Vote.ACCEPT:
            raise ValueError("a proposer always accepts its own commit")
        return self

    @property
    def accept_count(self) -> int:
        return sum(v is Vote.ACCEPT for v in self.votes.values())


def make_commit_id(mutation, proposer: Role, revision: int, taken=()) -> str:
    """First four hex digits of a content hash; salted only on collision."""
    payload = {
        "mutation": mutation.model_dump(mode="json"),
        "proposer": proposer.value,
        "revision": revision,
    }
    salt = 0
    while True:
        if salt:
            payload["salt"] = salt
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        cid = hashlib.sha256(blob.encode()).hexdigest()[:4]
        if cid not in taken:
            return cid
        salt += 1


class ChecklistOrigin(_Model):
    source: Literal["plan", "fix", "spec"]
    ref: str


class ChecklistItem(_Model):
    item_id: int
    task: str
    origin: ChecklistOrigin
    status: Literal["pending", "done"] = "pending"

    @field_validator("task")
    @classmethod
    def _non_empty(cls, v: str) -> str:
        if not v.strip():
            raise ValueError("task must be non-empty")
        return v

    def __setattr__(self, name, value):
        if name == "status" and self.status == "done" and value != "done":
            raise ValueError("a done checklist item cannot be reopened")
        super().__setattr__(name, value)

    def mark_done(self) -> None:
        self.status = "done"


class AnalysisRecord(_Model):
    version_id: int
    rating: int = Field(ge=1, le=5)
    narrative: str
    metrics_snapshot: PpaMetrics
    requested_data: list[str] = Field(default_factory=list)
    plan_visit: int = 0


class Message(_Model):
    seq: int
    stage: Stage | None
    round: int
    author: Role
    phase: Phase
    body: str
    machine_blocks: list[dict[str, Any]] = Field(default_factory=list)

    @model_validator(mode="after")
    def _author_in_squad(self) -> Message:
        if self.author is not Role.SYSTEM:
            if self.stage is None or self.author not in SQUADS[self.stage]:
                raise ValueError(f"{self.author.value} does not belong to stage {self.stage}")
        return self


class PointsStep(_Model):
    k: int
    r: int
    p: float
    p_hat: float
    p_next: float


class ExplorationPoints(_Model):
    current: float
    history: list[PointsStep] = Field(default_factory=list)


class CompileError(_Model):
    file: str
    line: int
    text: str


class PowerFigure(_Model):
    value: float
    unit: str

    @property
    def uw(self) -> float:
        return self.value * _POWER_SCALE[self.unit]


_POWER_SCALE = {"W": 1e6, "mW": 1e3, "uW": 1.0, "nW": 1e-3, "pW": 1e-6}


class SynthReport(_Model):
    metrics: PpaMetrics
    combinational_cells: int | None = None
    sequential_cells: int | None = None
    total_cells: int | None = None
    power_detail: dict[str, PowerFigure] = Field(default_factory=dict)
    raw_sections: dict[str, str] = Field(default_factory=dict)


class VerificationReport(_Model):
    version_id: int
    compile_ok: bool
    compile_errors: list[CompileError] = Field(default_factory=list)
    sim_passed: bool | None = None
    sim_log_excerpt: str = ""
    defects: list[str] = Field(default_factory=list)
    synth: SynthReport | None = None

    @model_validator(mode="after")
    def _check(self) -> VerificationReport:
        if not self.compile_ok and self.sim_passed is not None:
            raise ValueError("simulation fields require a successful compile")
        if self.synth is not None and self.sim_passed is not True:
            raise ValueError("synthesis results require a passing simulation")
        return self

    @property
    def passed(self) -> bool:
        return self.compile_ok and self.sim_passed is True


class Step(str, Enum):
    IMPLEMENT_SPEC = "implement_spec"
    VERIFY = "verify"
    IMPLEMENT_FIX = "implement_fix"
    ANALYZE = "analyze"
    EXPLORE = "explore"
    IMPLEMENT_PLAN = "implement_plan"
    SELECT = "select"
    DONE = "done"


class Outcome(_Model):
    kind: Literal["accepted", "exhausted", "failed"]
    version_id: int | None = None
    reason: str | None = None

    def __str__(self) -> str:
        if self.kind == "failed":
            return f"Failed({self.reason})"
        return f"{self.kind.capitalize()}(v{self.version_id})"


class SessionState(_Model):
    inputs: DesignInputs
    versions: list[RtlVersion] = Field(default_factory=list)
    plan: ExplorationPlan = Field(default_factory=ExplorationPlan)
    checklist: list[ChecklistItem] = Field(default_factory=list)
    points: ExplorationPoints
    analyses: list[AnalysisRecord] = Field(default_factory=list)
    pool: list[Message] = Field(default_factory=list)
    outer_k: int = 0
    inner_j: int = 0
    fix_streak: int = 0
    rng_seed: int = 0
    next_step: Step = Step.IMPLEMENT_SPEC
    stage_visits: dict[Stage, int] = Field(default_factory=dict)
    call_counts: dict[str, int] = Field(default_factory=dict)
    reports: dict[int, VerificationReport] = Field(default_factory=dict)
    findings: str | None = None
    requested_sections: list[str] = Field(default_factory=list)
    stall_reset: int = 0
    continues: int = 0
    terminate_reason: str | None = None
    outcome: Outcome | None = None
    event_count: int = 0

    @model_validator(mode="after")
    def _check(self) -> SessionState:
        unchecked = [v for v in self.versions if v.verified is Verified.UNCHECKED]
        if len(unchecked) > 1:
            raise ValueError("at most one version may be unchecked")
        ids = [v.version_id for v in self.versions]
        if ids != list(range(len(ids))):
            raise ValueError("version ids must be 0..n-1")
        return self

    # -- convenience -------------------------------------------------------

    @property
    def latest(self) -> RtlVersion | None:
        return self.versions[-1] if self.versions else None

    def version(self, version_id: int) -> RtlVersion:
        try:
            return self.versions[version_id]
        except IndexError:
            raise KeyError(f"no version {version_id}") from None

    def passed_versions(self) -> list[RtlVersion]:
        return [v for v in self.versions if v.verified is Verified.PASSED]

    def next_seq(self) -> int:
        return self.pool[-1].seq + 1 if self.pool else 1


def new_session(inputs: DesignInputs | dict, seed: int, config) -> SessionState:
    """Fresh state; version 0 is created from the initial code when supplied."""
    try:
        if not isinstance(inputs, DesignInputs):
            inputs = DesignInputs(**inputs)
        else:
            inputs = DesignInputs(**inputs.model_dump())
    except ValueError as exc:
        raise InvalidInput(str(exc)) from exc
    state = SessionState(
        inputs=inputs,
        points=ExplorationPoints(current=config.points.p0),
        rng_seed=seed,
    )
    state.pool.append(
        Message(
            seq=1,
            stage=None,
            round=0,
            author=Role.SYSTEM,
            phase=Phase.SYSTEM,
            body="session configuration",
            machine_blocks=[{"kind": "config", "config": config.model_dump(mode="json")}],
        )
    )
    if inputs.initial_code is not None and inputs.initial_code.strip():
        record_version(state, inputs.initial_code, produced_by="initial")
        state.next_step = Step.VERIFY
    return state


_LATEST = object()


def record_version(state: SessionState, code: str, parent=_LATEST, produced_by="implementation") -> int:
    """Append a new unchecked version; parent defaults to the current latest."""
    if not code or not code.strip():
        raise InvalidInput("code must be non-empty")
    if parent is _LATEST:
        parent = state.latest.version_id if state.latest else None
    for v in state.versions:
        if v.verified is Verified.UNCHECKED:
            v.verified = Verified.SUPERSEDED
    vid = len(state.versions)
    state.versions.append(
        RtlVersion(version_id=vid, code=code, parent_id=parent, produced_by=produced_by)
    )
    return vid

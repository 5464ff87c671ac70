"""Programmer / reviewer loop driven by a checklist."""

from __future__ import annotations

from dataclasses import dataclass, field

from rtlsquad.errors import ImplementationFailed, NothingToDo, ProtocolBreakdown
from rtlsquad.model import (
    ChecklistItem,
    ChecklistOrigin,
    DesignInputs,
    ExplorationPlan,
    Phase,
    Role,
    Stage,
    VerificationReport,
)
from rtlsquad.payloads import PayloadKind

STAGE = Stage.IMPLEMENTATION
SPEC_TASK = "Implement the complete design described in the specification so that it passes the testbench."


@dataclass
class ReviewVerdict:
    completed_items: list[int]
    feedback: str
    all_done: bool
    new_items: list[int] = field(default_factory=list)


def build_checklist(source: ExplorationPlan | VerificationReport | DesignInputs) -> list[ChecklistItem]:
    if isinstance(source, ExplorationPlan):
        if not source.actions:
            raise NothingToDo("the exploration plan has no actions")
        return [
            ChecklistItem(item_id=i, task=a.label(), origin=ChecklistOrigin(source="plan", ref=a.action_id))
            for i, a in enumerate(source.actions, 1)
        ]
    if isinstance(source, VerificationReport):
        defects = list(dict.fromkeys(d for d in source.defects if d.strip()))
        if not defects:
            raise NothingToDo(f"verification report for v{source.version_id} lists no defects")
        return [
            ChecklistItem(item_id=i, task=f"Fix: {d}", origin=ChecklistOrigin(source="fix", ref=f"v{source.version_id}#{i}"))
            for i, d in enumerate(defects, 1)
        ]
    return [ChecklistItem(item_id=1, task=SPEC_TASK, origin=ChecklistOrigin(source="spec", ref="spec"))]


def checklist_text(items: list[ChecklistItem]) -> str:
    return "\n".join(f"{it.item_id}. [{it.status}] {it.task}" for it in items) or "(empty)"


def programmer_step(session, feedback: str) -> tuple[int, str]:
    st = session.state
    if not any(it.status == "pending" for it in st.checklist):
        raise ValueError("programmer_step needs at least one pending checklist item")
    latest = st.latest
    reply, _ = session.converse(
        Role.PROGRAMMER, STAGE, Phase.GENERATE,
        {
            "checklist": checklist_text(st.checklist),
            "code": latest.code if latest else "(none yet)",
            "version": latest.version_id if latest else "-",
            "feedback": feedback or "(none)",
            "context": "Summarize the pending tasks, plan your steps, then give the complete new module.",
        },
        expected=[PayloadKind.CODE],
    )
    code = reply.of(PayloadKind.CODE)[-1].body["code"]
    return session.record(code), reply.prose


def reviewer_step(session, version_id: int) -> ReviewVerdict:
    st = session.state
    known = {it.item_id for it in st.checklist}

    def check(payloads):
        lists = [p for p in payloads if p.kind is PayloadKind.CHECKLIST]
        if len(lists) != 1:
            return "give exactly one checklist block"
        unknown = sorted(set(lists[0].body["completed"]) - known)
        if unknown:
            return "unknown checklist item(s) " + ", ".join(map(str, unknown))
        return None

    code = st.version(version_id).code
    reply, _ = session.converse(
        Role.REVIEWER, STAGE, Phase.FEEDBACK,
        {
            "checklist": checklist_text(st.checklist),
            "code": code,
            "version": version_id,
            "context": "Review the candidate and mark the checklist items it completes.",
        },
        expected=[PayloadKind.CHECKLIST],
        check=check,
    )
    body = reply.of(PayloadKind.CHECKLIST)[0].body
    completed = sorted(set(body["completed"]))
    for it in st.checklist:
        if it.item_id in completed:
            it.mark_done()
    added = []
    for task in body.get("new_items", []):
        item_id = max(known, default=0) + 1
        known.add(item_id)
        st.checklist.append(ChecklistItem(
            item_id=item_id, task=task,
            origin=ChecklistOrigin(source="fix", ref=f"review v{version_id}"),
        ))
        added.append(item_id)
    feedback = "\n\n".join(t for t in (reply.prose, body.get("feedback", "")) if t)
    return ReviewVerdict(
        completed_items=completed,
        feedback=feedback,
        all_done=all(it.status == "done" for it in st.checklist),
        new_items=added,
    )


def run_implementation(session, checklist: list[ChecklistItem]) -> int:
    """Alternate programmer and reviewer until the checklist is done or the cap hits."""
    st = session.state
    st.checklist = list(checklist)
    session.begin_visit(STAGE)
    feedback = ""
    version_id = None
    try:
        for _ in range(session.config.max_impl_rounds):
            version_id, _narrative = programmer_step(session, feedback)
            verdict = reviewer_step(session, version_id)
            if verdict.all_done:
                return version_id
            feedback = verdict.feedback
    except ProtocolBreakdown as exc:
        raise ImplementationFailed(str(exc)) from exc
    pending = [it.item_id for it in st.checklist if it.status == "pending"]
    session.note(STAGE, f"implementation stopped after {session.config.max_impl_rounds} round(s) "
                        f"with item(s) {', '.join(map(str, pending))} still pending; passing v{version_id} on")
    return version_id

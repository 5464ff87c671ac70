"""The stage state machine: inner fix loop, outer optimization loop, termination."""

from __future__ import annotations

import logging
import sys
from enum import Enum
from typing import Callable

from rtlsquad.config import OrchestratorConfig
from rtlsquad.errors import RtlSquadError
from rtlsquad.exploration import run_exploration
from rtlsquad.implementation import build_checklist, run_implementation
from rtlsquad.model import Outcome, Stage, Step, Verified
from rtlsquad.session import Session
from rtlsquad.verification import (
    analyst_step,
    observer_step,
    select_best,
    trend_is_stalled,
    verify_version,
)

log = logging.getLogger(__name__)

UNFIXABLE = "UnfixableDesign"
INNER_STEPS = {Step.IMPLEMENT_FIX}
OUTER_STEPS = {Step.ANALYZE, Step.EXPLORE, Step.IMPLEMENT_PLAN}


class Choice(str, Enum):
    ACCEPT = "accept"
    CONTINUE = "continue"


def provider_call_bound(cfg: OrchestratorConfig) -> int:
    """Upper bound on provider calls for one session under ``cfg``.

    Every call may be followed by one corrective retry, hence the factors of 2.
    A debate round costs at most three turns plus three poll answers; an
    implementation round one programmer and one reviewer call; an analysis one
    observer summary, the analyst's turns and one observer answer per data
    request. Exploration and analysis happen at most once per outer iteration;
    implementation happens once for the spec or the plan, then up to
    ``max_inner_iters`` fix passes, per outer iteration plus the initial one.
    """
    o, i = cfg.max_outer_iters, cfg.max_inner_iters
    d, m, q = cfg.max_debate_rounds, cfg.max_impl_rounds, cfg.max_data_requests
    exploration = o * d * 2 * 6
    implementation = (o + 1) * (1 + i) * m * 2 * 2
    analysis = o * 2 * (1 + (1 + q) + q)
    return exploration + implementation + analysis


def prompt_accept(
    version_id: int,
    auto_accept: bool,
    input_fn: Callable[[str], str] | None = None,
    warn: Callable[[str], None] | None = None,
) -> Choice:
    """Ask whether to accept ``version_id``; anything but ``c``/``continue`` accepts."""
    warn = warn or log.warning
    if auto_accept:
        return Choice.ACCEPT
    if input_fn is None:
        if not sys.stdin.isatty():
            warn(f"no interactive terminal; accepting v{version_id}")
            return Choice.ACCEPT
        input_fn = input
    try:
        answer = input_fn(f"Best version is v{version_id}. Accept it [a] or continue optimizing [c]? ")
    except EOFError:
        warn(f"no answer on stdin; accepting v{version_id}")
        return Choice.ACCEPT
    return Choice.CONTINUE if answer.strip().lower() in ("c", "continue") else Choice.ACCEPT


class Orchestrator:
    def __init__(self, session: Session):
        self.session = session
        self.state = session.state
        self.cfg = session.config
        self.handlers = {
            Step.IMPLEMENT_SPEC: self.implement_spec,
            Step.VERIFY: self.verify,
            Step.IMPLEMENT_FIX: self.implement_fix,
            Step.ANALYZE: self.analyze,
            Step.EXPLORE: self.explore,
            Step.IMPLEMENT_PLAN: self.implement_plan,
            Step.SELECT: self.select,
        }

    # -- plumbing ----------------------------------------------------------

    def transition(self, to: Step) -> None:
        st = self.state
        frm = st.next_step
        if frm in INNER_STEPS or to in INNER_STEPS:
            loop = "inner"
        elif frm in OUTER_STEPS or to in OUTER_STEPS:
            loop = "outer"
        else:
            loop = None
        st.next_step = to
        self.session.emit("loop_transition", **{"from": frm.value, "to": to.value, "loop": loop,
                                                "k": st.outer_k, "j": st.inner_j})
        self.session.save()

    def finish(self, outcome: Outcome) -> Outcome:
        st = self.state
        st.outcome = outcome
        st.next_step = Step.DONE
        self.session.emit("termination", outcome=outcome.kind, version_id=outcome.version_id,
                          reason=outcome.reason)
        self.session.save()
        self.session.render()
        return outcome

    def run(self) -> Outcome:
        st = self.state
        if st.next_step is Step.DONE:
            self.session.render()
            return st.outcome
        while True:
            try:
                result = self.handlers[st.next_step]()
            except RtlSquadError as exc:
                log.error("session failed: %s", exc)
                return self.finish(Outcome(kind="failed", reason=f"{type(exc).__name__}: {exc}"))
            if isinstance(result, Outcome):
                return self.finish(result)
            self.transition(result)

    # -- steps -------------------------------------------------------------

    def implement_spec(self) -> Step:
        run_implementation(self.session, build_checklist(self.state.inputs))
        return Step.VERIFY

    def verify(self) -> Step | Outcome:
        st = self.state
        latest = st.latest
        report = verify_version(self.session, latest.version_id)
        if latest.verified is Verified.PASSED:
            st.fix_streak = 0
            return Step.ANALYZE
        if st.fix_streak >= self.cfg.max_inner_iters:
            self.session.note(Stage.VERIFICATION,
                              f"v{latest.version_id} still fails after {st.fix_streak} fix attempt(s)")
            return Outcome(kind="failed", reason=UNFIXABLE)
        st.fix_streak += 1
        st.inner_j += 1
        st.checklist = build_checklist(report)
        return Step.IMPLEMENT_FIX

    def implement_fix(self) -> Step:
        st = self.state
        items = st.checklist or build_checklist(st.reports[st.latest.version_id])
        run_implementation(self.session, items)
        return Step.VERIFY

    def analyze(self) -> Step:
        st = self.state
        report = st.reports[st.latest.version_id]
        st.outer_k += 1
        findings = observer_step(self.session, report)
        st.findings = findings
        _record, decision = analyst_step(self.session, report, findings)
        if decision.terminate:
            st.terminate_reason = "analyst"
        elif st.outer_k >= self.cfg.max_outer_iters:
            st.terminate_reason = "cap"
        elif st.outer_k >= self.cfg.min_outer_iters and trend_is_stalled(
            st.analyses[st.stall_reset:], self.cfg.stall_window, self.cfg.stall_eps_rel
        ):
            st.terminate_reason = "stall"
            self.session.note(Stage.VERIFICATION, "metrics have stalled; stopping the optimization loop")
        else:
            return Step.EXPLORE
        return Step.SELECT

    def explore(self) -> Step:
        plan = run_exploration(self.session)
        if not plan.actions:
            self.state.terminate_reason = "empty plan"
            return Step.SELECT
        return Step.IMPLEMENT_PLAN

    def implement_plan(self) -> Step:
        run_implementation(self.session, build_checklist(self.state.plan))
        return Step.VERIFY

    def select(self) -> Step | Outcome:
        st = self.state
        best = select_best(st.versions)
        reason = st.terminate_reason
        if reason in ("cap", "empty plan"):
            return Outcome(kind="exhausted", version_id=best, reason=reason)
        choice = prompt_accept(
            best, self.cfg.auto_accept, self.session.input_fn,
            warn=lambda text: (log.warning(text), self.session.note(None, text)),
        )
        if choice is Choice.ACCEPT:
            return Outcome(kind="accepted", version_id=best, reason=reason)
        if st.outer_k >= self.cfg.max_outer_iters:
            self.session.note(None, f"outer iteration cap of {self.cfg.max_outer_iters} reached; cannot continue")
            return Outcome(kind="exhausted", version_id=best, reason="cap")
        st.continues += 1
        st.stall_reset = len(st.analyses)
        st.terminate_reason = None
        self.session.note(None, f"user chose to continue optimizing past v{best}")
        return Step.EXPLORE


def run(session: Session) -> Outcome:
    return Orchestrator(session).run()

"""Three-expert debate that turns an exploration budget into a plan.

Each debate round the power, performance and area experts speak once in a
seeded random order. A turn may discuss, propose commits and must vote on
every pending commit owed by that expert. Commits proposed earlier in the
turn order are voted on in the same round; the rest are voted on during the
next cycle. A commit resolves as soon as all three experts have voted (the
proposer implicitly accepts). After a round without new commits every expert
is polled; the stage ends once all three find the plan acceptable.
"""

from __future__ import annotations

import json
import random

from rtlsquad.errors import ExplorationFailed, IncompleteBallot, OverBudget, ProtocolBreakdown, UnknownAction
from rtlsquad.model import (
    EXPERTS,
    ActionKind,
    AddAction,
    Commit,
    CommitOutcome,
    DeleteAction,
    ExplAction,
    ExplorationPlan,
    ModifyAction,
    Phase,
    Role,
    Stage,
    Vote,
    describe_mutation,
    make_commit_id,
)
from rtlsquad.payloads import Payload, PayloadKind
from rtlsquad.points import budget

STAGE = Stage.EXPLORATION


def speaking_order(seed: int, visit: int, round_no: int) -> list[Role]:
    order = list(EXPERTS)
    random.Random(f"{seed}:{visit}:{round_no}").shuffle(order)
    return order


def tally_votes(commit: Commit) -> CommitOutcome:
    missing = [e.value for e in EXPERTS if e not in commit.votes]
    if missing:
        raise IncompleteBallot(f"commit {commit.commit_id} lacks votes from {', '.join(missing)}")
    return CommitOutcome.APPLIED if commit.accept_count >= 2 else CommitOutcome.REJECTED


def apply_commit(plan: ExplorationPlan, commit: Commit, limit: int) -> ExplorationPlan:
    """Return the plan with ``commit`` applied; ``limit`` is the integer budget."""
    if commit.outcome is not CommitOutcome.APPLIED:
        raise ValueError(f"commit {commit.commit_id} has not been accepted")
    m = commit.mutation
    actions = list(plan.actions)
    if isinstance(m, AddAction):
        new = m.action.model_copy(update={"action_id": m.action.action_id or commit.commit_id})
        if plan.find(new.action_id) is not None:
            raise UnknownAction(f"action {new.action_id} already exists")
        if plan.total_cost + new.cost > limit:
            raise OverBudget(f"adding {new.kind.value} would cost {plan.total_cost + new.cost} > budget {limit}")
        actions.append(new)
    else:
        idx = next((i for i, a in enumerate(actions) if a.action_id == m.action_id), None)
        if idx is None:
            raise UnknownAction(f"no action {m.action_id} in the plan")
        if isinstance(m, ModifyAction):
            new = m.action.model_copy(update={"action_id": m.action_id})
            cost = plan.total_cost - actions[idx].cost + new.cost
            if cost > limit:
                raise OverBudget(f"modification would cost {cost} > budget {limit}")
            actions[idx] = new
        else:
            del actions[idx]
    return ExplorationPlan(actions=actions, revision=plan.revision + 1)


def mutation_from_payload(p: Payload):
    b = p.body
    action = ExplAction(action_id="", kind=ActionKind(b["action"]["kind"]),
                        description=b["action"]["description"]) if "action" in b else None
    if b["op"] == "add":
        return AddAction(action=action)
    if b["op"] == "modify":
        return ModifyAction(action_id=b["action_id"], action=action)
    return DeleteAction(action_id=b["action_id"])


def _plan_text(plan: ExplorationPlan) -> str:
    if not plan.actions:
        return "(empty)"
    return "\n".join(f"- {a.action_id} [{a.kind.value}, {a.cost} pt]: {a.description}" for a in plan.actions)


def _pool_text(session, visit: int) -> str:
    lines = []
    for m in session.state.pool:
        if m.stage is STAGE and m.round == visit:
            blocks = "".join(f"\n  {json.dumps(b, ensure_ascii=False)}" for b in m.machine_blocks)
            lines.append(f"{m.author.value} ({m.phase.value}): {m.body}{blocks}")
    return "\n".join(lines) or "(nothing yet)"


class Debate:
    def __init__(self, session):
        self.session = session
        self.state = session.state
        self.cfg = session.config
        self.visit = session.begin_visit(STAGE)
        self.plan = ExplorationPlan()
        self.limit = budget(self.state.points.current)
        self.pending: list[Commit] = []
        self.owed: dict[str, set[Role]] = {}
        self.commits: list[Commit] = []
        self.numbers: dict[str, int] = {}

    # -- prompt context ----------------------------------------------------

    def values(self, context: str) -> dict:
        st = self.state
        base = st.passed_versions()[-1] if st.passed_versions() else st.latest
        memories = st.analyses[-1].narrative if st.analyses else "(no analysis yet)"
        return {
            "code": base.code if base else "(no code yet)",
            "version": base.version_id if base else "-",
            "memories": memories,
            "points": f"{st.points.current:g}",
            "budget": self.limit,
            "plan": _plan_text(self.plan),
            "plan_cost": self.plan.total_cost,
            "pool": _pool_text(self.session, self.visit),
            "context": context,
        }

    # -- turns -------------------------------------------------------------

    def _turn_check(self, expert: Role, owed: list[Commit]):
        owed_ids = {c.commit_id for c in owed}

        def check(payloads: list[Payload]) -> str | None:
            seen = set()
            for p in payloads:
                if p.kind is PayloadKind.VOTE:
                    cid = p.body["commit_id"]
                    if cid not in owed_ids:
                        return f"commit {cid} is not awaiting your vote"
                    if cid in seen:
                        return f"more than one vote on commit {cid}"
                    seen.add(cid)
                elif p.kind is PayloadKind.COMMIT:
                    if p.body["op"] != "add" and self.plan.find(p.body["action_id"]) is None:
                        return f"no action {p.body['action_id']} in the current plan"
                else:
                    return f"{p.kind.value} blocks are not used in the exploration debate"
            missing = sorted(owed_ids - seen)
            if missing:
                return "missing vote(s) on commit(s) " + ", ".join(missing)
            return None

        return check

    def turn(self, expert: Role, round_no: int) -> int:
        owed = [c for c in self.pending if expert in self.owed[c.commit_id]]
        lines = [f"Debate round {round_no}. Discuss the plan and propose commits if you see worthwhile changes."]
        if owed:
            lines.append("You must vote on these pending commits:")
            lines += [f"- {c.commit_id} (proposed by {c.proposer.value}): {describe_mutation(c.mutation)}" for c in owed]
        reply, _ = self.session.converse(
            expert, STAGE,
            lambda r: Phase.COMMIT if r.of(PayloadKind.COMMIT) else (Phase.REVIEW if r.of(PayloadKind.VOTE) else Phase.COMMUNICATE),
            self.values("\n".join(lines)),
            expected=[PayloadKind.VOTE] if owed else [],
            check=self._turn_check(expert, owed),
        )
        by_id = {c.commit_id: c for c in owed}
        for p in reply.of(PayloadKind.VOTE):
            commit = by_id[p.body["commit_id"]]
            commit.votes[expert] = Vote(p.body["decision"])
            if p.body.get("reason"):
                commit.reasons[expert] = p.body["reason"]
            self.owed[commit.commit_id].discard(expert)
            if not self.owed[commit.commit_id]:
                self.resolve(commit)
        proposed = reply.of(PayloadKind.COMMIT)
        for p in proposed:
            self.propose(expert, p)
        if proposed:
            self.session.emit("commits_proposed", visit=self.visit, round=round_no, commits=[
                {"number": self.numbers[c.commit_id], "commit_id": c.commit_id,
                 "proposer": c.proposer.value, "description": describe_mutation(c.mutation)}
                for c in self.pending
            ])
        return len(proposed)

    def propose(self, expert: Role, p: Payload) -> Commit:
        mutation = mutation_from_payload(p)
        taken = {c.commit_id for c in self.commits}
        cid = make_commit_id(mutation, expert, self.plan.revision, taken)
        commit = Commit(commit_id=cid, mutation=mutation, rationale=p.body.get("rationale", ""),
                        proposer=expert, votes={expert: Vote.ACCEPT})
        self.commits.append(commit)
        self.numbers[cid] = len(self.commits)
        self.pending.append(commit)
        self.owed[cid] = {e for e in EXPERTS if e is not expert}
        return commit

    def resolve(self, commit: Commit, note: str | None = None) -> None:
        self.pending.remove(commit)
        if note is None:
            commit.outcome = tally_votes(commit)
            if commit.outcome is CommitOutcome.APPLIED:
                try:
                    self.plan = apply_commit(self.plan, commit, self.limit)
                except (OverBudget, UnknownAction) as exc:
                    commit.outcome = CommitOutcome.REJECTED
                    note = str(exc)
        else:
            commit.outcome = CommitOutcome.REJECTED
        commit.note = note
        m = commit.mutation
        self.session.emit(
            "vote_tally",
            commit_id=commit.commit_id,
            op=m.op,
            action_id=getattr(m, "action_id", None) or commit.commit_id,
            description=describe_mutation(m),
            votes={r.value: v.value for r, v in sorted(commit.votes.items(), key=lambda kv: kv[0].value)},
            reasons={r.value: t for r, t in sorted(commit.reasons.items(), key=lambda kv: kv[0].value)},
            outcome=commit.outcome.value,
            note=note,
            plan_revision=self.plan.revision,
            plan_cost=self.plan.total_cost,
        )
        if note:
            self.session.note(STAGE, f"commit {commit.commit_id} rejected: {note}")

    def poll(self, order: list[Role]) -> bool:
        verdicts = []
        for expert in order:
            reply, _ = self.session.converse(
                expert, STAGE, Phase.REVIEW,
                self.values("No new commits were proposed this round. Is the current exploration plan "
                            "acceptable? Answer with a poll block."),
                expected=[PayloadKind.POLL],
                check=lambda ps: None if len([p for p in ps if p.kind is PayloadKind.POLL]) == 1
                else "give exactly one poll block and nothing else",
            )
            verdicts.append(reply.of(PayloadKind.POLL)[0].body["acceptable"])
        return all(verdicts)

    def forced(self) -> ExplorationPlan:
        self.session.note(STAGE, "exploration budget is 0; asking the first speaker for one opt action")
        expert = speaking_order(self.state.rng_seed, self.visit, 1)[0]

        def check(ps):
            commits = [p for p in ps if p.kind is PayloadKind.COMMIT]
            if len(commits) != 1 or commits[0].body["op"] != "add" or commits[0].body["action"]["kind"] != "opt":
                return "propose exactly one add commit with an opt action"
            return None

        reply, _ = self.session.converse(
            expert, STAGE, Phase.COMMIT,
            self.values("The exploration budget is exhausted. Propose exactly one incremental (opt) action "
                        "as an add commit."),
            expected=[PayloadKind.COMMIT], check=check,
        )
        mutation = mutation_from_payload(reply.of(PayloadKind.COMMIT)[0])
        cid = make_commit_id(mutation, expert, self.plan.revision)
        action = mutation.action.model_copy(update={"action_id": cid})
        self.plan = ExplorationPlan(actions=[action], revision=self.plan.revision + 1)
        self.session.note(STAGE, f"forced action {cid} added without a vote: {action.label()}")
        return self.finish()

    def finish(self) -> ExplorationPlan:
        self.state.plan = self.plan
        self.session.emit(
            "plan_final", visit=self.visit, revision=self.plan.revision, cost=self.plan.total_cost,
            budget=self.limit, actions=[a.model_dump(mode="json") for a in self.plan.actions],
        )
        return self.plan

    def run(self) -> ExplorationPlan:
        if self.limit == 0:
            if self.cfg.force_min_action:
                return self.forced()
            self.session.note(STAGE, "exploration budget is 0; no actions can be planned")
            return self.finish()
        for round_no in range(1, self.cfg.max_debate_rounds + 1):
            order = speaking_order(self.state.rng_seed, self.visit, round_no)
            self.session.emit("debate_round", visit=self.visit, round=round_no, order=[r.value for r in order])
            new = sum(self.turn(expert, round_no) for expert in order)
            if new == 0 and not self.pending and self.poll(order):
                return self.finish()
        for commit in list(self.pending):
            self.resolve(commit, note="ballot incomplete when the debate cap was reached")
        self.session.note(STAGE, f"debate stopped after {self.cfg.max_debate_rounds} round(s); "
                                 "continuing with the plan as it stands")
        return self.finish()


def run_exploration(session) -> ExplorationPlan:
    try:
        return Debate(session).run()
    except ProtocolBreakdown as exc:
        raise ExplorationFailed(str(exc)) from exc

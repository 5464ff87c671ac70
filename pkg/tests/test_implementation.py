import pytest

from rtlsquad.config import build_config
from rtlsquad.errors import ImplementationFailed, NothingToDo
from rtlsquad.implementation import build_checklist, programmer_step, reviewer_step, run_implementation
from rtlsquad.model import DesignInputs, ExplAction, ExplorationPlan, Phase, Role, Stage, VerificationReport
from tests.conftest import bare_session
from tests.policy import FnBackend, block

V1 = "module accu(input clk);\n  always @(posedge clk) begin end\n  always @(posedge clk) begin end\nendmodule"
V2 = "module accu(input clk);\n  // Combined count and accumulation logic\n  always @(posedge clk) begin end\nendmodule"
INPUTS = {"spec_text": "accumulator", "testbench_text": "module tb; endmodule", "initial_code": "module accu; endmodule"}


def plan2():
    return ExplorationPlan(actions=[
        ExplAction(action_id="a1", kind="expl", description="restructure pipeline"),
        ExplAction(action_id="b2", kind="opt", description="clock gating"),
    ])


def test_checklist_from_plan():
    items = build_checklist(plan2())
    assert [i.item_id for i in items] == [1, 2]
    assert [i.origin.source for i in items] == ["plan", "plan"]
    assert [i.origin.ref for i in items] == ["a1", "b2"]
    assert all(i.status == "pending" for i in items)


def test_checklist_from_fix_report():
    report = VerificationReport(version_id=3, compile_ok=False,
                                defects=["compile error: accu.v:12: syntax error", "MISMATCH at t=40",
                                         "MISMATCH at t=40"])
    items = build_checklist(report)
    assert len(items) == 2 and {i.origin.source for i in items} == {"fix"}


def test_checklist_from_spec_and_empty_sources():
    assert build_checklist(DesignInputs(spec_text="s", testbench_text="t"))[0].origin.source == "spec"
    with pytest.raises(NothingToDo):
        build_checklist(ExplorationPlan())
    with pytest.raises(NothingToDo):
        build_checklist(VerificationReport(version_id=0, compile_ok=True, sim_passed=True))


def example_a(role, user, key):
    """Programmer writes V1, reviewer objects, programmer refactors, reviewer signs off."""
    if role is Role.PROGRAMMER:
        code = V1 if key.index == 1 else V2
        steps = "I will follow structured steps: 1. accumulator register 2. count logic 3. output logic."
        return f"{steps}\n```verilog\n{code}\n```"
    if key.index == 1:
        return "@programmer please address valid_out.\n" + block(
            {"kind": "checklist", "completed": [], "feedback": "valid_out must wait for four inputs"})
    return "Looks right now.\n" + block({"kind": "checklist", "completed": [1, 2]})


def _session(fn, **cfg):
    s = bare_session(FnBackend(fn), build_config({"seed": 7, **cfg}), INPUTS)
    s.state.versions[0].verified = "passed"
    s.state.versions[0].metrics = {"power_uw": 1, "critical_path_ns": 1, "area_um2": 1}
    return s


def test_two_round_fixture():
    s = _session(example_a)
    vid = run_implementation(s, build_checklist(plan2()))
    assert vid == 2
    msgs = [m for m in s.state.pool if m.stage is Stage.IMPLEMENTATION]
    assert [m.phase for m in msgs] == [Phase.GENERATE, Phase.FEEDBACK, Phase.GENERATE, Phase.FEEDBACK]
    assert all(i.status == "done" for i in s.state.checklist)
    assert s.state.version(2).code == V2 and s.state.version(2).parent_id == 1
    assert s.state.version(1).parent_id == 0
    assert "structured steps" in msgs[0].body


def test_done_on_first_review():
    s = _session(lambda role, user, key: f"```verilog\n{V1}\n```" if role is Role.PROGRAMMER
                 else block({"kind": "checklist", "completed": [1, 2]}))
    assert run_implementation(s, build_checklist(plan2())) == 1
    assert s.runtime.calls == 2


def test_round_cap_leaves_items_pending():
    s = _session(example_a, max_impl_rounds=1)
    assert run_implementation(s, build_checklist(plan2())) == 1
    assert any(i.status == "pending" for i in s.state.checklist)
    assert "still pending" in s.state.pool[-1].body and s.state.pool[-1].author is Role.SYSTEM


def test_unknown_item_triggers_repair():
    def fn(role, user, key):
        if role is Role.PROGRAMMER:
            return f"```verilog\n{V1}\n```"
        return block({"kind": "checklist", "completed": [9] if key.index == 1 else [1, 2]})

    s = _session(fn)
    assert run_implementation(s, build_checklist(plan2())) == 1
    notes = [m.body for m in s.state.pool if m.author is Role.SYSTEM]
    assert any("unknown checklist item(s) 9" in n for n in notes)


def test_reviewer_may_add_items():
    def fn(role, user, key):
        if role is Role.PROGRAMMER:
            return f"```verilog\n{V1}\n```"
        if key.index == 1:
            return block({"kind": "checklist", "completed": [1, 2], "new_items": ["reset valid_out"]})
        return block({"kind": "checklist", "completed": [3]})

    s = _session(fn)
    assert run_implementation(s, build_checklist(plan2())) == 2
    assert [i.origin.source for i in s.state.checklist] == ["plan", "plan", "fix"]


def test_programmer_without_code_fails_stage():
    s = _session(lambda role, user, key: "I forgot the code")
    with pytest.raises(ImplementationFailed):
        run_implementation(s, build_checklist(plan2()))


def test_programmer_step_needs_pending_item():
    s = _session(example_a)
    s.state.checklist = build_checklist(plan2())
    for it in s.state.checklist:
        it.mark_done()
    with pytest.raises(ValueError):
        programmer_step(s, "")


def test_reviewer_verdict_all_done_matches_checklist():
    s = _session(example_a)
    s.state.checklist = build_checklist(plan2())
    s.begin_visit(Stage.IMPLEMENTATION)
    vid, _ = programmer_step(s, "")
    verdict = reviewer_step(s, vid)
    assert verdict.all_done is False and verdict.completed_items == []
    assert "valid_out" in verdict.feedback

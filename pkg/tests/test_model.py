import pytest
from hypothesis import given
from hypothesis import strategies as st

from rtlsquad.config import OrchestratorConfig
from rtlsquad.errors import InvalidInput
from rtlsquad.model import (
    ActionKind,
    AddAction,
    ChecklistItem,
    ChecklistOrigin,
    Commit,
    DeleteAction,
    ExplAction,
    ExplorationPlan,
    Message,
    Phase,
    PowerFigure,
    PpaMetrics,
    Role,
    SessionState,
    Stage,
    Verified,
    Vote,
    make_commit_id,
    new_session,
    record_version,
)

CFG = OrchestratorConfig()


def test_new_session_without_code():
    st_ = new_session({"spec_text": "adder", "testbench_text": "tb"}, 7, CFG)
    assert st_.versions == []
    assert st_.points.current == 6.0
    assert len(st_.pool) == 1 and st_.pool[0].author is Role.SYSTEM
    assert st_.pool[0].machine_blocks[0]["kind"] == "config"


def test_new_session_with_code():
    st_ = new_session({"spec_text": "adder", "testbench_text": "tb", "initial_code": "module a; endmodule"}, 7, CFG)
    assert [v.version_id for v in st_.versions] == [0]
    assert st_.versions[0].verified is Verified.UNCHECKED
    assert st_.versions[0].produced_by == "initial"


@pytest.mark.parametrize("spec,tb", [("", "tb"), ("adder", ""), ("   ", "tb")])
def test_new_session_rejects_empty_inputs(spec, tb):
    with pytest.raises(InvalidInput):
        new_session({"spec_text": spec, "testbench_text": tb}, 7, CFG)


def test_record_version_ids_and_parents():
    st_ = new_session({"spec_text": "adder", "testbench_text": "tb"}, 7, CFG)
    assert record_version(st_, "module a; endmodule") == 0
    assert record_version(st_, "module b; endmodule") == 1
    assert st_.versions[1].parent_id == 0
    with pytest.raises(InvalidInput):
        record_version(st_, "")


def test_record_version_supersedes_unchecked():
    st_ = new_session({"spec_text": "adder", "testbench_text": "tb"}, 7, CFG)
    record_version(st_, "module a; endmodule")
    record_version(st_, "module b; endmodule")
    assert [v.verified for v in st_.versions] == [Verified.SUPERSEDED, Verified.UNCHECKED]


@given(st.lists(st.text(min_size=1).filter(str.strip), max_size=12))
def test_version_ids_have_no_gaps(codes):
    st_ = new_session({"spec_text": "adder", "testbench_text": "tb"}, 7, CFG)
    for c in codes:
        record_version(st_, c)
    assert [v.version_id for v in st_.versions] == list(range(len(codes)))
    assert sum(v.verified is Verified.UNCHECKED for v in st_.versions) <= 1
    SessionState.model_validate(st_.model_dump())


def test_metrics_only_when_passed():
    with pytest.raises(ValueError):
        from rtlsquad.model import RtlVersion
        RtlVersion(version_id=0, code="x", metrics=PpaMetrics(power_uw=1, critical_path_ns=1, area_um2=1))


@pytest.mark.parametrize("bad", [{"power_uw": -1}, {"area_um2": float("inf")}, {"critical_path_ns": float("nan")}])
def test_ppa_metrics_validation(bad):
    fields = {"power_uw": 1.0, "critical_path_ns": 1.0, "area_um2": 1.0, **bad}
    with pytest.raises(ValueError):
        PpaMetrics(**fields)


def test_action_costs_and_labels():
    assert ActionKind.EXPL.cost == 2 and ActionKind.OPT.cost == 1
    a = ExplAction(action_id="79b4", kind="opt", description="clock gating")
    assert a.cost == 1 and a.label().startswith("Optimization Action")
    with pytest.raises(ValueError):
        ExplAction(action_id="x", kind="expl", description=" ")


@given(st.lists(st.sampled_from(["expl", "opt"]), max_size=10))
def test_plan_cost(kinds):
    plan = ExplorationPlan(actions=[ExplAction(action_id=str(i), kind=k, description="d") for i, k in enumerate(kinds)])
    assert plan.total_cost == 2 * kinds.count("expl") + kinds.count("opt")


def test_plan_ids_unique():
    a = ExplAction(action_id="a", kind="opt", description="d")
    with pytest.raises(ValueError):
        ExplorationPlan(actions=[a, a])


def test_commit_proposer_must_accept():
    m = AddAction(action=ExplAction(action_id="x", kind="opt", description="d"))
    with pytest.raises(ValueError):
        Commit(commit_id="abcd", mutation=m, proposer=Role.POWER_EXPERT, votes={Role.POWER_EXPERT: Vote.REJECT})
    c = Commit(commit_id="abcd", mutation=m, proposer=Role.POWER_EXPERT, votes={Role.POWER_EXPERT: Vote.ACCEPT})
    assert c.accept_count == 1


def test_commit_id_stable_and_salted():
    m = DeleteAction(action_id="79b4")
    cid = make_commit_id(m, Role.AREA_EXPERT, 3)
    assert cid == make_commit_id(m, Role.AREA_EXPERT, 3)
    assert len(cid) == 4 and int(cid, 16) >= 0
    other = make_commit_id(m, Role.AREA_EXPERT, 3, taken={cid})
    assert other != cid and len(other) == 4


def test_checklist_status_only_moves_forward():
    it = ChecklistItem(item_id=1, task="t", origin=ChecklistOrigin(source="plan", ref="a"))
    it.mark_done()
    assert it.status == "done"
    with pytest.raises(ValueError):
        it.status = "pending"


def test_message_author_must_belong_to_squad():
    Message(seq=1, stage=Stage.EXPLORATION, round=1, author=Role.POWER_EXPERT, phase=Phase.COMMIT, body="x")
    Message(seq=1, stage=Stage.EXPLORATION, round=1, author=Role.SYSTEM, phase=Phase.SYSTEM, body="x")
    with pytest.raises(ValueError):
        Message(seq=1, stage=Stage.EXPLORATION, round=1, author=Role.PROGRAMMER, phase=Phase.GENERATE, body="x")


@pytest.mark.parametrize("value,unit,uw", [(4.6652e-3, "mW", 4.6652), (28.045, "nW", 0.028045), (1, "W", 1e6)])
def test_power_units(value, unit, uw):
    assert PowerFigure(value=value, unit=unit).uw == pytest.approx(uw, rel=1e-12)

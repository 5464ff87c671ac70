import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rtlsquad.errors import InvalidNormalizer, NoCandidate, SectionUnavailable, ToolError, VerificationStageFailed
from rtlsquad.model import AnalysisRecord, PpaMetrics, Role, RtlVersion, Verified
from rtlsquad.verification import (
    analyst_step,
    observer_step,
    scalarize,
    scores_stalled,
    select_best,
    trend_is_stalled,
    verify_version,
)
from tests.conftest import bare_session
from tests.policy import FnBackend, block, module


def ppa(p, c, a):
    return PpaMetrics(power_uw=p, critical_path_ns=c, area_um2=a)


def session_with(code, fn=None):
    s = bare_session(FnBackend(fn or (lambda role, user, key: "ok")))
    vid = s.record(code)
    return s, vid


def test_verify_pass_records_metrics():
    s, vid = session_with(module("accu", power=12, perf=2, area=100))
    report = verify_version(s, vid)
    assert report.passed and s.state.version(vid).verified is Verified.PASSED
    assert s.state.version(vid).metrics.as_tuple() == (12, 2, 100)
    assert s.log.events[-1]["type"] == "verification" and s.log.events[-1]["status"] == "passed"


def test_verify_simulation_failure():
    s, vid = session_with(module("accu", passed=False))
    report = verify_version(s, vid)
    assert not report.passed and report.defects == ["simulation mismatch (mock)"]
    assert s.state.version(vid).verified is Verified.FAILED and s.state.version(vid).metrics is None


def test_verify_compile_failure():
    s, vid = session_with(module("accu", compile_ok=False))
    report = verify_version(s, vid)
    assert not report.compile_ok and report.sim_passed is None
    assert report.defects[0].startswith("compile error: design.v:1")


def test_tool_error_leaves_version_unchecked():
    s, vid = session_with(module("accu"))

    def boom(code, out_dir=None):
        raise ToolError("synthesis crashed")

    s.eda.synthesize = boom
    with pytest.raises(ToolError):
        verify_version(s, vid)
    assert s.state.version(vid).verified is Verified.UNCHECKED


def test_scalarize_examples():
    assert scalarize(ppa(12, 2, 100), ppa(12, 2, 100)) == pytest.approx(1.0)
    assert scalarize(ppa(6, 1, 50), ppa(12, 2, 100)) == pytest.approx(0.5)
    with pytest.raises(InvalidNormalizer):
        scalarize(ppa(1, 1, 1), ppa(0, 1, 1))


def _v(vid, metrics=None, verified=Verified.PASSED):
    return RtlVersion(version_id=vid, code="x", verified=verified if metrics or verified is not Verified.PASSED
                      else Verified.FAILED, metrics=metrics)


def test_select_best_examples():
    vs = [_v(0, ppa(10, 2, 100)), _v(1, ppa(8, 2, 90)), _v(2, None, Verified.FAILED)]
    assert select_best(vs) == 1
    tied = [_v(0, ppa(1, 1, 1)), _v(1, ppa(1, 1, 1))]
    assert select_best(tied) == 0
    with pytest.raises(NoCandidate):
        select_best([_v(0, None, Verified.FAILED)])


def _oracle_best(versions):
    passed = [v for v in versions if v.verified is Verified.PASSED]
    cols = [[Fraction(v.metrics.as_tuple()[i]) for v in passed] for i in range(3)]
    norms = [min(c) for c in cols]
    score = {v.version_id: sum(Fraction(m) / n for m, n in zip(v.metrics.as_tuple(), norms)) / 3 for v in passed}
    return min(score, key=lambda vid: (score[vid], vid))


def test_select_best_matches_brute_force():
    rng = random.Random(3)
    for _ in range(1000):
        vs = []
        for vid in range(rng.randint(1, 8)):
            if rng.random() < 0.3:
                vs.append(_v(vid, None, rng.choice([Verified.FAILED, Verified.UNCHECKED])))
            else:
                vs.append(_v(vid, ppa(rng.randint(1, 50), rng.randint(1, 10) / 2, rng.randint(10, 500))))
        if not any(v.verified is Verified.PASSED for v in vs):
            continue
        best = select_best(vs)
        assert best == _oracle_best(vs)
        chosen = next(v for v in vs if v.version_id == best).metrics.as_tuple()
        for v in vs:
            if v.verified is Verified.PASSED:
                other = v.metrics.as_tuple()
                assert not all(o < c for o, c in zip(other, chosen))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 100), st.integers(1, 100), st.integers(1, 100)), min_size=1, max_size=6))
def test_selected_version_passed_and_not_dominated(rows):
    vs = [_v(i, ppa(*r)) for i, r in enumerate(rows)]
    best = select_best(vs)
    chosen = rows[best]
    assert not any(all(o < c for o, c in zip(r, chosen)) for r in rows)


def test_stall_examples():
    # 0.9 -> 0.89 is a 1.1% gain, which is not below 1%
    assert scores_stalled([1.0, 0.9, 0.89, 0.895], 2, 0.01) is False
    assert scores_stalled([1.0, 0.9, 0.899, 0.8995], 2, 0.01) is True
    assert scores_stalled([1.0, 0.9], 2, 0.01) is False
    with pytest.raises(ValueError):
        scores_stalled([1, 2, 3], 1, 0.01)


def test_trend_uses_scalarized_snapshots():
    def rec(m):
        return AnalysisRecord(version_id=0, rating=3, narrative="n", metrics_snapshot=m)

    flat = [rec(ppa(10, 1, 100)), rec(ppa(10, 1, 100)), rec(ppa(10, 1, 100))]
    assert trend_is_stalled(flat, 2, 0.01)
    improving = [rec(ppa(10, 1, 100)), rec(ppa(8, 1, 100)), rec(ppa(5, 1, 100))]
    assert not trend_is_stalled(improving, 2, 0.01)


def _passed_session(fn):
    s, vid = session_with(module("accu", power=12, perf=2, area=100), fn)
    report = verify_version(s, vid)
    return s, report


def test_observer_answers_requested_section():
    s, report = _passed_session(lambda role, user, key: "Dynamic power is 12 uW.")
    answer = observer_step(s, report, request="power")
    assert "12 uW" in answer
    assert any("`power` report of v" in m.body for m in s.state.pool if m.author is Role.SYSTEM)
    with pytest.raises(SectionUnavailable) as exc:
        observer_step(s, report, request="thermal")
    assert "qor" in str(exc.value)


def analyst_fn(requests, rating=4, decision="continue"):
    def fn(role, user, key):
        if role is Role.OBSERVER:
            return "observed"
        if key.index <= len(requests):
            return "Need more data.\n" + block({"kind": "data_request", "section": requests[key.index - 1]})
        return "Rated.\n" + block({"kind": "rating", "value": rating}) + "\n" + block(
            {"kind": "decision", "decision": decision})
    return fn


def test_analyst_data_request_flow():
    s, report = _passed_session(analyst_fn(["power", "thermal"]))
    s.state.outer_k = 1
    record, decision = analyst_step(s, report, "findings")
    assert record.requested_data == ["power", "thermal"] and record.rating == 4
    assert not decision.terminate
    notes = [m.body for m in s.state.pool if m.author is Role.SYSTEM]
    assert any("thermal" in n for n in notes)


def test_analyst_rating_updates_points_once():
    s, report = _passed_session(analyst_fn([], rating=2))
    s.state.outer_k = 1
    before = s.state.points.current
    analyst_step(s, report, "findings")
    hist = s.state.points.history
    assert len(hist) == 1
    # oracle: 0.4 * (2.375 - 0.75) * 6 + 0.6 * 6
    assert before == 6.0 and hist[0].p_next == pytest.approx(7.5)
    assert s.log.events[-1]["type"] == "points_updated"


def test_invalid_rating_breaks_down():
    s, report = _passed_session(analyst_fn([], rating=0))
    s.state.outer_k = 1
    with pytest.raises(VerificationStageFailed):
        analyst_step(s, report, "findings")
    assert s.state.points.history == []


def test_best_version_must_have_passed():
    def fn(role, user, key):
        return block({"kind": "rating", "value": 3}) + "\n" + block(
            {"kind": "decision", "decision": "terminate", "best_version": 9})

    s, report = _passed_session(fn)
    with pytest.raises(VerificationStageFailed):
        analyst_step(s, report, "findings")

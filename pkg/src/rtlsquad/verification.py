"""Verification and evaluation: run the tools, then the observer/analyst dialogue."""

from __future__ import annotations

from dataclasses import dataclass

from rtlsquad.errors import (
    IndeterminateResult,
    InvalidNormalizer,
    NoCandidate,
    ProtocolBreakdown,
    SectionUnavailable,
    VerificationStageFailed,
)
from rtlsquad.model import (
    AnalysisRecord,
    Phase,
    PpaMetrics,
    Role,
    RtlVersion,
    Stage,
    VerificationReport,
    Verified,
)
from rtlsquad.payloads import PayloadKind
from rtlsquad.points import apply_rating
from rtlsquad.reports import failure_lines

STAGE = Stage.VERIFICATION
LOG_EXCERPT_LINES = 40


@dataclass
class StageDecision:
    decision: str
    justification: str = ""
    best_version: int | None = None

    @property
    def terminate(self) -> bool:
        return self.decision == "terminate"


# -- scoring ---------------------------------------------------------------


def scalarize(metrics: PpaMetrics, normalizers: PpaMetrics) -> float:
    """Equal-weight mean of normalized power, critical path and area (lower is better)."""
    norms = normalizers.as_tuple()
    if any(n <= 0 for n in norms):
        raise InvalidNormalizer(f"normalizers must be positive, got {norms}")
    return sum(m / n for m, n in zip(metrics.as_tuple(), norms)) / 3.0


def normalizers_for(metrics: list[PpaMetrics]) -> PpaMetrics:
    """Per-metric minimum; a metric whose minimum is zero falls back to its maximum, then 1."""
    cols = list(zip(*(m.as_tuple() for m in metrics)))
    picked = []
    for col in cols:
        lo, hi = min(col), max(col)
        picked.append(lo if lo > 0 else (hi if hi > 0 else 1.0))
    return PpaMetrics(power_uw=picked[0], critical_path_ns=picked[1], area_um2=picked[2])


def select_best(versions: list[RtlVersion]) -> int:
    passed = [v for v in versions if v.verified is Verified.PASSED and v.metrics is not None]
    if not passed:
        raise NoCandidate("no version has passed verification")
    norms = normalizers_for([v.metrics for v in passed])
    return min(passed, key=lambda v: (scalarize(v.metrics, norms), v.version_id)).version_id


def scores_stalled(scores: list[float], window: int, eps_rel: float) -> bool:
    """Best of the last ``window`` scores improves on the earlier best by less than ``eps_rel``."""
    if window < 2:
        raise ValueError("window must be >= 2")
    if len(scores) <= window:
        return False
    before, recent = min(scores[:-window]), min(scores[-window:])
    if before <= 0:
        return True
    return (before - recent) / before < eps_rel


def trend_is_stalled(history: list[AnalysisRecord], window: int, eps_rel: float) -> bool:
    if len(history) <= window:
        return False
    snaps = [h.metrics_snapshot for h in history]
    norms = normalizers_for(snaps)
    return scores_stalled([scalarize(m, norms) for m in snaps], window, eps_rel)


# -- tools -----------------------------------------------------------------


def verify_version(session, version_id: int) -> VerificationReport:
    """Compile, simulate and (on a pass) synthesize one unchecked version."""
    st = session.state
    version = st.version(version_id)
    if version.verified is not Verified.UNCHECKED:
        raise ValueError(f"v{version_id} is already {version.verified.value}")
    eda, cfg = session.eda, session.config.eda
    tb = st.inputs.testbench_text
    session.begin_visit(STAGE)
    out_dir = session.report_dir(version_id)

    ok, errors = eda.compile(version.code, tb, out_dir)
    if not ok:
        report = VerificationReport(
            version_id=version_id, compile_ok=False, compile_errors=errors,
            defects=[f"compile error: {e.file}:{e.line}: {e.text}" for e in errors] or ["compile failed"],
        )
    else:
        try:
            passed, sim_log = eda.simulate(version.code, tb, out_dir)
            indeterminate = False
        except IndeterminateResult:
            passed, sim_log, indeterminate = False, "", True
        excerpt = "\n".join(sim_log.splitlines()[-LOG_EXCERPT_LINES:])
        if passed:
            synth = eda.synthesize(version.code, out_dir)
            report = VerificationReport(version_id=version_id, compile_ok=True, sim_passed=True,
                                        sim_log_excerpt=excerpt, synth=synth)
        else:
            if indeterminate:
                defects = ["simulation result indeterminate: output matched neither the pass nor the fail pattern"]
            else:
                defects = failure_lines(sim_log, cfg.fail_pattern) or ["simulation failed (see log excerpt)"]
            report = VerificationReport(version_id=version_id, compile_ok=True, sim_passed=False,
                                        sim_log_excerpt=excerpt, defects=defects)

    if report.passed:
        version.verified = Verified.PASSED
        version.metrics = report.synth.metrics
    else:
        version.verified = Verified.FAILED
    session.store_report(report)
    session.emit(
        "verification",
        round=session.visit(STAGE),
        version_id=version_id,
        status=version.verified.value,
        metrics=version.metrics.model_dump(mode="json") if version.metrics else None,
        defects=report.defects,
    )
    return report


def headline(report: VerificationReport) -> str:
    lines = [f"Version v{report.version_id}."]
    if not report.compile_ok:
        lines.append("Compilation FAILED:")
        lines += [f"  {e.file}:{e.line}: {e.text}" for e in report.compile_errors]
        return "\n".join(lines)
    lines.append("Compilation succeeded.")
    if not report.sim_passed:
        lines.append("Functional simulation FAILED. Defects:")
        lines += [f"  - {d}" for d in report.defects]
        if report.sim_log_excerpt:
            lines += ["Simulation log excerpt:", report.sim_log_excerpt]
        return "\n".join(lines)
    lines.append("Functional simulation passed.")
    s = report.synth
    m = s.metrics
    lines.append(f"Critical path: {m.critical_path_ns:g} ns" + (f", slack {m.slack_ns:g} ns" if m.slack_ns is not None else ""))
    lines.append(f"Area: {m.area_um2:g} um^2")
    if s.total_cells is not None:
        lines.append(
            f"Cells: {s.total_cells} leaf cells"
            + (f" ({s.combinational_cells} combinational, {s.sequential_cells} sequential)"
               if s.combinational_cells is not None and s.sequential_cells is not None else "")
        )
    lines.append(f"Report sections available on request: {', '.join(sorted(s.raw_sections))}")
    return "\n".join(lines)


def observer_step(session, report: VerificationReport, request: str | None = None) -> str:
    version = report.version_id
    if request is None:
        excerpt = headline(report)
        context = "Summarize the key findings for the analyst."
    else:
        sections = report.synth.raw_sections if report.synth else {}
        key = request.strip().lower()
        match = next((name for name in sections if name.lower() == key), None)
        if match is None:
            match = next((name for name in sections if key in name.lower() or name.lower() in key), None)
        if match is None:
            raise SectionUnavailable(request, sections)
        session.note(STAGE, f"Observer reading the `{match}` report of v{version}.", phase=Phase.OBSERVE)
        excerpt = sections[match]
        context = f"The analyst asked for the {request} data. Extract what was asked for."
    reply, _ = session.converse(
        Role.OBSERVER, STAGE, Phase.OBSERVE,
        {"version": version, "report_excerpt": excerpt, "context": context},
    )
    return reply.prose


def _memories(records: list[AnalysisRecord]) -> str:
    if not records:
        return "(none; this is the first analysis)"
    out = []
    for r in records:
        m = r.metrics_snapshot
        out.append(
            f"- v{r.version_id}: rating {r.rating}/5; power {m.power_uw:g} uW, critical path "
            f"{m.critical_path_ns:g} ns, area {m.area_um2:g} um^2. {r.narrative}"
        )
    return "\n".join(out)


def analyst_step(session, report: VerificationReport, findings: str) -> tuple[AnalysisRecord, StageDecision]:
    """Let the analyst request data, then rate the plan/version pair and decide."""
    st, cfg = session.state, session.config
    version = st.version(report.version_id)
    if version.verified is not Verified.PASSED:
        raise ValueError("the analyst only evaluates passed versions")
    passed_ids = {v.version_id for v in st.passed_versions()}
    requested: list[str] = list(st.requested_sections)
    material = findings

    def check(payloads):
        kinds = [p.kind for p in payloads]
        if PayloadKind.DATA_REQUEST in kinds:
            if len(requested) >= cfg.max_data_requests:
                return "no more data requests are allowed; give your rating and decision"
            if len(kinds) != 1:
                return "either request one report section or give a rating and a decision, not both"
            return None
        if kinds.count(PayloadKind.RATING) != 1 or kinds.count(PayloadKind.DECISION) != 1:
            return "give exactly one rating block and one decision block"
        for p in payloads:
            best = p.body.get("best_version") if p.kind is PayloadKind.DECISION else None
            if best is not None and best not in passed_ids:
                return f"v{best} has not passed verification"
        return None

    try:
        while True:
            reply, _ = session.converse(
                Role.ANALYST, STAGE,
                lambda r: Phase.ANALYZE,
                {
                    "version": version.version_id,
                    "plan": "\n".join(f"- [{a.kind.value}] {a.description}" for a in st.plan.actions) or "(initial design)",
                    "memories": _memories(st.analyses),
                    "report_excerpt": material,
                    "context": f"You may request up to {cfg.max_data_requests - len(requested)} more report section(s).",
                },
                check=check,
            )
            req = reply.of(PayloadKind.DATA_REQUEST)
            if not req:
                break
            section = req[0].body["section"]
            requested.append(section)
            st.requested_sections = list(requested)
            try:
                answer = observer_step(session, report, request=section)
            except SectionUnavailable as exc:
                answer = str(exc)
                session.note(STAGE, answer, phase=Phase.OBSERVE)
            material += f"\n\n[{section}]\n{answer}"
    except ProtocolBreakdown as exc:
        raise VerificationStageFailed(str(exc)) from exc

    rating = reply.of(PayloadKind.RATING)[0].body["value"]
    d = reply.of(PayloadKind.DECISION)[0].body
    record = AnalysisRecord(
        version_id=version.version_id,
        rating=rating,
        narrative=reply.prose,
        metrics_snapshot=version.metrics,
        requested_data=requested,
        plan_visit=session.visit(Stage.EXPLORATION),
    )
    st.analyses.append(record)
    st.requested_sections = []
    step = apply_rating(st.points, st.outer_k, rating, cfg.points)
    session.emit("points_updated", version_id=version.version_id, **step.model_dump(mode="json"))
    return record, StageDecision(d["decision"], d.get("justification", ""), d.get("best_version"))

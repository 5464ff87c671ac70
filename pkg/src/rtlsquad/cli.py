"""Command-line front end: ``rtlsquad run | resume | report``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from rtlsquad.agents import AgentRuntime, RemoteBackend, ScriptedBackend, build_roles, load_prompts
from rtlsquad.config import OrchestratorConfig, build_config, load_config
from rtlsquad.doc import read_transcript, render_markdown
from rtlsquad.eda import make_backend
from rtlsquad.errors import ConfigError, InvalidInput, ResumeError, RtlSquadError
from rtlsquad.model import Verified
from rtlsquad.orchestrator import run as run_session
from rtlsquad.session import DOC_FILE, SESSION_FILE, TRANSCRIPT_FILE, Session, load_session_file
from rtlsquad.verification import normalizers_for, scalarize, select_best

EXIT_OK, EXIT_USAGE, EXIT_FAILED = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def make_runtime(config: OrchestratorConfig, directory: Path | None = None) -> AgentRuntime:
    provider = config.provider
    prompts = load_prompts(directory / "prompts" if directory is not None else None)
    if provider.backend == "scripted":
        if not provider.script_path:
            raise UsageError("the scripted provider needs --script (or provider.script_path)")
        try:
            backend = ScriptedBackend.from_jsonl(provider.script_path)
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot load script {provider.script_path}: {exc}") from None
    else:
        backend = RemoteBackend(provider.endpoint, provider.model, timeout_s=provider.timeout_s)
    return AgentRuntime(backend, build_roles(provider, prompts))


def _overrides(args) -> dict:
    script = str(Path(args.script).resolve()) if args.script else None
    backend = "scripted" if args.script else ("remote" if args.endpoint else None)
    return {
        "seed": getattr(args, "seed", None),
        "eda.backend": "mock" if args.mock_eda else None,
        "provider.backend": backend,
        "provider.script_path": script,
        "provider.endpoint": args.endpoint,
        "provider.model": args.model,
        "auto_accept": True if args.auto_accept else None,
        "max_outer_iters": args.max_outer,
        "max_inner_iters": args.max_inner,
    }


def _read(path: str | None, what: str) -> str | None:
    if path is None:
        return None
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {what} {path}: {exc.strerror}") from None


def _summary(outcome, directory: Path) -> int:
    print(f"outcome: {outcome}")
    print(f"decision path: {directory / DOC_FILE}")
    print(f"transcript: {directory / TRANSCRIPT_FILE}")
    return EXIT_FAILED if outcome.kind == "failed" else EXIT_OK


def cmd_run(args) -> int:
    spec = _read(args.spec, "spec")
    tb = _read(args.testbench, "testbench")
    init = _read(args.init_code, "initial code")
    config = load_config(args.config, _overrides(args))
    directory = Path(args.out)
    if (directory / TRANSCRIPT_FILE).exists():
        raise UsageError(f"{directory} already holds a session; use `resume`")
    runtime = make_runtime(config, directory)
    session = Session.create(
        {"spec_text": spec, "testbench_text": tb, "initial_code": init},
        config, runtime, make_backend(config.eda), directory,
    )
    return _summary(run_session(session), directory)


def cmd_resume(args) -> int:
    directory = Path(args.session)
    if not (directory / SESSION_FILE).is_file():
        raise UsageError(f"{directory} is not a session directory")
    overrides = _overrides(args)

    def adjust(config: OrchestratorConfig) -> OrchestratorConfig:
        return build_config(config.model_dump(mode="json"), overrides)

    session = Session.resume(directory, make_runtime, lambda c: make_backend(c.eda), config_overrides=adjust)
    return _summary(run_session(session), directory)


def version_table(state) -> str:
    passed = [v for v in state.versions if v.verified is Verified.PASSED and v.metrics is not None]
    norms = normalizers_for([v.metrics for v in passed]) if passed else None
    best = select_best(state.versions) if passed else None
    rows = [f"{'':1} {'id':>4} {'verified':<10} {'power_uw':>12} {'path_ns':>10} {'area_um2':>12} {'score':>8}"]
    for v in state.versions:
        m = v.metrics
        cells = [f"{m.power_uw:12.6g}", f"{m.critical_path_ns:10.6g}", f"{m.area_um2:12.6g}"] if m else [
            f"{'-':>12}", f"{'-':>10}", f"{'-':>12}"]
        score = f"{scalarize(m, norms):8.4f}" if m and norms and v in passed else f"{'-':>8}"
        mark = "*" if v.version_id == best else " "
        rows.append(f"{mark} {'v' + str(v.version_id):>4} {v.verified.value:<10} {' '.join(cells)} {score}")
    return "\n".join(rows)


def cmd_report(args) -> int:
    directory = Path(args.session)
    if not directory.is_dir():
        raise UsageError(f"{directory} does not exist")
    state, config = load_session_file(directory)
    events = read_transcript(directory / TRANSCRIPT_FILE)
    names = {r.value: n for r, n in config.provider.display_names.items()}
    (directory / DOC_FILE).write_text(render_markdown(events, names), encoding="utf-8")
    print(version_table(state))
    if state.outcome is not None:
        print(f"outcome: {state.outcome}")
    return EXIT_OK


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mock-eda", action="store_true", help="use the directive-driven mock EDA backend")
    p.add_argument("--script", help="JSONL file of scripted agent replies")
    p.add_argument("--endpoint", help="OpenAI-compatible base URL (selects the remote provider)")
    p.add_argument("--model", help="model name for the remote provider")
    p.add_argument("--auto-accept", action="store_true", help="accept the best version without prompting")
    p.add_argument("--max-outer", type=int, help="outer-loop iteration cap")
    p.add_argument("--max-inner", type=int, help="consecutive fix-attempt cap")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rtlsquad", description="Multi-agent RTL generation and PPA optimization.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="start a new session")
    run.add_argument("--spec", required=True, help="design specification (text or markdown)")
    run.add_argument("--testbench", required=True, help="Verilog testbench")
    run.add_argument("--init-code", help="optional starting RTL")
    run.add_argument("--config", help="JSON configuration file")
    run.add_argument("--out", default="rtlsquad-session", help="session directory (default: %(default)s)")
    run.add_argument("--seed", type=int)
    _common(run)
    run.set_defaults(func=cmd_run)

    resume = sub.add_parser("resume", help="continue a saved session")
    resume.add_argument("--session", required=True)
    _common(resume)
    resume.set_defaults(func=cmd_resume)

    report = sub.add_parser("report", help="re-render the decision path and print the version table")
    report.add_argument("--session", required=True)
    report.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, InvalidInput) as exc:
        parser.print_usage(sys.stderr)
        print(f"rtlsquad: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ResumeError as exc:
        print(f"rtlsquad: cannot resume: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except RtlSquadError as exc:
        print(f"rtlsquad: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())

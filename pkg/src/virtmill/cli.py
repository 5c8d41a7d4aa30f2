"""Command line entry points.

Exit codes: 0 on success, 1 when the requested operation ran and failed
(invalid scenario, replay mismatch, rejected script action), 2 when the
invocation itself was unusable (missing file, malformed arguments).
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Any, Optional

from .machine import ActionValidationError
from .scenario import Scenario, ScenarioError, default_scenario, load_scenario_file
from .scripting import ScriptError, load_script
from .session import Session, SessionApiError, replay_log
from .tasks import LinearizationOverflow, TaskGraph, TaskGraphError

DEFAULT_ADDR = "127.0.0.1:8327"
ADDR_ENV = "VIRTMILL_ADDR"


def _fail(message: str, code: int) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _print_json(doc: Any) -> None:
    print(json.dumps(doc, indent=2, sort_keys=True))


def _load_scenario_arg(path: Optional[str]) -> Scenario:
    if path is None:
        return default_scenario()
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    return load_scenario_file(path)


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        scenario = _load_scenario_arg(args.scenario)
    except FileNotFoundError as exc:
        return _fail(f"no such file: {exc}", 2)
    except (ScenarioError, TaskGraphError) as exc:
        return _fail(str(exc), 1)
    _print_json({"ok": True, "id": scenario.id, "version": scenario.version,
                 "scenario_hash": scenario.scenario_hash,
                 "tasks": len(scenario.tasks)})
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    try:
        scenario = _load_scenario_arg(args.scenario)
        actions = load_script(args.script)
    except FileNotFoundError as exc:
        return _fail(f"no such file: {exc}", 2)
    except (ScenarioError, TaskGraphError, ScriptError) as exc:
        return _fail(str(exc), 1)

    log_fh = open(args.log, "w", encoding="utf-8") if args.log else None
    session = Session(scenario, mode=args.mode, log_fh=log_fh)
    try:
        for i, payload in enumerate(actions, start=1):
            try:
                result = session.submit(payload)
            except (SessionApiError, ActionValidationError) as exc:
                return _fail(f"action {i} rejected: {exc}", 1)
            if result.verdict.blocked and not args.keep_going:
                return _fail(
                    f"action {i} blocked with {result.verdict.code}; "
                    "pass --keep-going to continue past blocks", 1)
        _print_json(session.report())
    finally:
        session.close()
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    try:
        scenario = _load_scenario_arg(args.scenario)
    except FileNotFoundError as exc:
        return _fail(f"no such file: {exc}", 2)
    except (ScenarioError, TaskGraphError) as exc:
        return _fail(str(exc), 1)
    if not os.path.exists(args.log):
        return _fail(f"no such file: {args.log}", 2)
    result = replay_log(args.log, scenario)
    _print_json(result.to_doc())
    return 0 if result.ok else 1


def cmd_report(args: argparse.Namespace) -> int:
    try:
        scenario = _load_scenario_arg(args.scenario)
    except FileNotFoundError as exc:
        return _fail(f"no such file: {exc}", 2)
    except (ScenarioError, TaskGraphError) as exc:
        return _fail(str(exc), 1)
    if not os.path.exists(args.log):
        return _fail(f"no such file: {args.log}", 2)
    result = replay_log(args.log, scenario)
    if not result.ok or result.session is None:
        _print_json(result.to_doc())
        return 1
    _print_json(result.session.report())
    return 0


def cmd_linearize(args: argparse.Namespace) -> int:
    try:
        scenario = _load_scenario_arg(args.scenario)
    except FileNotFoundError as exc:
        return _fail(f"no such file: {exc}", 2)
    except (ScenarioError, TaskGraphError) as exc:
        return _fail(str(exc), 1)
    graph = TaskGraph.from_scenario(scenario)
    try:
        orders = graph.linearizations(cap=args.cap)
    except LinearizationOverflow as exc:
        return _fail(str(exc), 1)
    _print_json({"count": len(orders), "orders": orders})
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    addr = args.addr or os.environ.get(ADDR_ENV) or DEFAULT_ADDR
    host, _, port_text = addr.rpartition(":")
    if not host or not port_text.isdigit():
        return _fail(f"addr must look like HOST:PORT, got {addr!r}", 2)
    try:
        scenario = _load_scenario_arg(args.scenario)
    except FileNotFoundError as exc:
        return _fail(f"no such file: {exc}", 2)
    except (ScenarioError, TaskGraphError) as exc:
        return _fail(str(exc), 1)

    import uvicorn

    from .server import create_app

    uvicorn.run(create_app(scenario=scenario), host=host, port=int(port_text),
                log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="virtmill",
        description="Headless training simulator for drilling on a 3-axis manual mill")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a scenario document")
    p.add_argument("scenario", nargs="?", help="scenario JSON path (default: built-in)")
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("run", help="run an action script against a fresh session")
    p.add_argument("--scenario", help="scenario JSON path (default: built-in)")
    p.add_argument("--script", required=True, help="JSONL file, one action per line")
    p.add_argument("--mode", choices=["free", "guided"], default="free")
    p.add_argument("--log", help="write the session event log here")
    p.add_argument("--keep-going", action="store_true",
                   help="scripts must acknowledge their own blocks; keep submitting")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("replay", help="verify a session log byte for byte")
    p.add_argument("log")
    p.add_argument("--scenario", help="scenario JSON path (default: built-in)")
    p.set_defaults(fn=cmd_replay)

    p = sub.add_parser("report", help="rebuild a session from its log and print the report")
    p.add_argument("log")
    p.add_argument("--scenario", help="scenario JSON path (default: built-in)")
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("linearize", help="enumerate the orderings a scenario allows")
    p.add_argument("scenario", nargs="?", help="scenario JSON path (default: built-in)")
    p.add_argument("--cap", type=int, default=10000,
                   help="refuse to enumerate more orders than this")
    p.set_defaults(fn=cmd_linearize)

    p = sub.add_parser("serve", help="serve the HTTP and WebSocket API")
    p.add_argument("--addr", help=f"HOST:PORT (default ${ADDR_ENV} or {DEFAULT_ADDR})")
    p.add_argument("--scenario", help="scenario JSON path (default: built-in)")
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())

"""Headless training simulator for drilling work on a 3-axis manual mill.

The package exposes a small, layered API: machine state transitions,
cutting physics, scenario-driven rules and task ordering, event-sourced
sessions with byte-exact replay, assessment, and an HTTP/WebSocket server.
"""
from .assessment import (
    AssessmentError,
    SessionReport,
    cohort_summary,
    error_score,
    evaluate_blueprint,
    normalized_change,
    session_report,
)
from .machine import Action, ActionKind, Axis, Hazard, MachineState, ToolKind
from .scenario import Scenario, ScenarioError, default_scenario, load_scenario, load_scenario_file
from .scripting import canonical_script
from .session import ReplayResult, Session, SessionApiError, SessionManager, replay_log
from .tasks import TaskGraph, TaskGraphError, allowed_actions, guided_next

__version__ = "0.1.0"

__all__ = [
    "Action",
    "ActionKind",
    "AssessmentError",
    "Axis",
    "Hazard",
    "MachineState",
    "ReplayResult",
    "Scenario",
    "ScenarioError",
    "Session",
    "SessionApiError",
    "SessionManager",
    "SessionReport",
    "TaskGraph",
    "TaskGraphError",
    "ToolKind",
    "allowed_actions",
    "canonical_script",
    "cohort_summary",
    "default_scenario",
    "error_score",
    "evaluate_blueprint",
    "guided_next",
    "load_scenario",
    "load_scenario_file",
    "normalized_change",
    "replay_log",
    "session_report",
    "__version__",
]

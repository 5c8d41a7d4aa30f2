"""Sessions: the event-sourced pipeline tying machine, physics and tasks.

Every submitted action becomes one batch of events. The batch opens with a
state_change echo carrying the action exactly as submitted, so a log can be
replayed by re-submitting those echoes against a fresh session and the
regenerated lines must match the recorded ones byte for byte. The last
event of each batch is stamped with a digest of the full simulator state
(machine, heat, progress, status), which is what replay ultimately checks.

A blocked action appends a single error event, leaves the machine and the
clock untouched, and halts the session until the operator acknowledges the
specific code. Emitted errors that the catalog marks ``must_acknowledge``
(tool overheat) halt the same way.
"""
from __future__ import annotations

import json
import queue
import threading
import uuid
from dataclasses import dataclass, field
from typing import Any, IO, Optional, Union

from .assessment import error_score, evaluate_blueprint, event_counts
from .canonical import canonical_json, digest, round_s
from .machine import (
    Action,
    ActionKind,
    ActionValidationError,
    Axis,
    MachineContext,
    MachineState,
    SessionEvent,
    EventKind,
    WorkpieceState,
    apply_action,
    dro_reading,
    new_state,
    validate_action,
)
from .physics import HeatState, IDLE_SOUND, SoundDescriptor, integrate, sound_for
from .scenario import Scenario
from .tasks import (
    TaskGraph,
    Verdict,
    evaluate_action,
    guided_next,
    update_progress,
    validate_checks,
)

LOG_FORMAT_VERSION = 1

MODES = ("free", "guided")


class SessionApiError(Exception):
    """Request rejected before it reached the machine; never logged."""

    def __init__(self, code: str, message: str, status: int = 409, path: str = ""):
        super().__init__(message)
        self.code = code
        self.message = message
        self.status = status
        self.path = path


def initial_workpiece(scenario: Scenario) -> WorkpieceState:
    wp = scenario.workpiece
    return WorkpieceState(
        length_in=wp.length_in, width_in=wp.width_in, height_in=wp.height_in,
        material=wp.material, origin_x=wp.origin_x, origin_y=wp.origin_y,
    )


@dataclass
class SubmitResult:
    verdict: Verdict
    events: list[SessionEvent]
    snapshot: dict[str, Any]

    def to_doc(self) -> dict[str, Any]:
        return {
            "verdict": {
                "decision": self.verdict.decision,
                "code": self.verdict.code,
            },
            "events": [ev.to_doc() for ev in self.events],
            "snapshot": self.snapshot,
        }


class Session:
    """One operator working one scenario. Thread-safe via a single lock."""

    def __init__(self, scenario: Scenario, mode: str = "free",
                 session_id: Optional[str] = None,
                 log_fh: Optional[IO[str]] = None):
        if mode not in MODES:
            raise SessionApiError("VALIDATION", f"mode must be one of {MODES}",
                                  status=422, path="mode")
        validate_checks(scenario)
        self.id = session_id or uuid.uuid4().hex[:12]
        self.scenario = scenario
        self.mode = mode
        self.graph = TaskGraph.from_scenario(scenario)
        self.ctx = MachineContext(limits=scenario.limits, timing=scenario.timing,
                                  tools=scenario.tools)
        wp = initial_workpiece(scenario)
        self.state: MachineState = new_state(
            workpiece=wp, hazards=set(scenario.hazards), limits=scenario.limits,
            table_x=scenario.table_start_x, table_y=scenario.table_start_y,
        )
        self.heat = HeatState()
        self.completed: set[str] = set()
        self.completed_order: list[str] = []
        self.goal_done = False
        self.status = "active"
        self.pending_ack: Optional[str] = None
        self.last_sound: SoundDescriptor = IDLE_SOUND
        self.seq = 0
        self.events: list[SessionEvent] = []
        self._lock = threading.RLock()
        self._log_fh = log_fh
        self._idempotent: dict[str, SubmitResult] = {}
        self._subscribers: list[queue.SimpleQueue] = []
        if self._log_fh is not None:
            self._log_fh.write(canonical_json(self.log_header()) + "\n")
            self._log_fh.flush()

    # -- log plumbing -------------------------------------------------------

    def log_header(self) -> dict[str, Any]:
        return {
            "v": LOG_FORMAT_VERSION,
            "scenario_id": self.scenario.id,
            "scenario_hash": self.scenario.scenario_hash,
            "session": self.id,
            "mode": self.mode,
        }

    def state_digest(self) -> str:
        return digest({
            "machine": self.state.to_doc(),
            "heat": self.heat.to_doc(),
            "progress": {
                "completed": sorted(self.completed),
                "goal_done": self.goal_done,
            },
            "status": self.status,
            "halted": self.pending_ack,
        })

    def _commit_batch(self, batch: list[SessionEvent]) -> None:
        for ev in batch:
            self.seq += 1
            ev.seq = self.seq
        batch[-1].state_digest = self.state_digest()
        self.events.extend(batch)
        if self._log_fh is not None:
            for ev in batch:
                self._log_fh.write(canonical_json(ev.to_doc()) + "\n")
            self._log_fh.flush()
        for q in self._subscribers:
            for ev in batch:
                q.put(ev.to_doc())

    # -- public api ---------------------------------------------------------

    def submit(self, action: Union[Action, dict[str, Any]],
               idempotency_key: Optional[str] = None) -> SubmitResult:
        with self._lock:
            if idempotency_key is not None and idempotency_key in self._idempotent:
                return self._idempotent[idempotency_key]
            result = self._submit_locked(action)
            if idempotency_key is not None:
                self._idempotent[idempotency_key] = result
            return result

    def _submit_locked(self, action: Union[Action, dict[str, Any]]) -> SubmitResult:
        if self.status != "active":
            raise SessionApiError("NOT_ACTIVE", f"session is {self.status}")
        if isinstance(action, dict):
            try:
                action = Action.from_payload(action)
            except ActionValidationError as exc:
                raise SessionApiError("VALIDATION", exc.message, status=422,
                                      path=exc.path) from None
            except (KeyError, ValueError, TypeError) as exc:
                raise SessionApiError("VALIDATION", str(exc), status=422,
                                      path="action") from None

        if action.kind is ActionKind.ACKNOWLEDGE_ERROR:
            return self._acknowledge(action)
        if self.pending_ack is not None:
            raise SessionApiError(
                "HALTED", f"session halted on {self.pending_ack}; acknowledge it first")

        try:
            validate_action(action, self.state, self.ctx)
        except ActionValidationError as exc:
            raise SessionApiError("VALIDATION", exc.message, status=422,
                                  path=exc.path) from None

        verdict = evaluate_action(self.state, action, self.scenario, self.ctx,
                                  self.graph, self.completed, self.mode)
        if verdict.blocked:
            return self._commit_blocked(action, verdict)
        return self._commit_applied(action, verdict)

    def _acknowledge(self, action: Action) -> SubmitResult:
        if action.code is None:
            raise SessionApiError("VALIDATION", "acknowledge_error needs a code",
                                  status=422, path="action.code")
        if self.pending_ack is None:
            raise SessionApiError("NOTHING_PENDING", "no error awaiting acknowledgment")
        if action.code != self.pending_ack:
            raise SessionApiError(
                "WRONG_CODE",
                f"pending error is {self.pending_ack}, not {action.code}")
        cleared = self.pending_ack
        self.pending_ack = None
        ev = SessionEvent(
            t=self.state.clock_s, kind=EventKind.STATE_CHANGE,
            code=ActionKind.ACKNOWLEDGE_ERROR.value,
            payload={"action": action.to_payload(), "cleared": cleared},
        )
        self._commit_batch([ev])
        return SubmitResult(Verdict("allowed"), [ev], self.snapshot())

    def _commit_blocked(self, action: Action, verdict: Verdict) -> SubmitResult:
        payload: dict[str, Any] = {"action": action.to_payload()}
        if verdict.rule_id is not None:
            payload["rule"] = verdict.rule_id
        payload.update(verdict.detail)
        entry = self.scenario.catalog.get(verdict.code)
        ev = SessionEvent(
            t=self.state.clock_s, kind=EventKind.ERROR, code=verdict.code,
            payload=payload, weight=entry.weight if entry else 0,
        )
        self.pending_ack = verdict.code
        self._commit_batch([ev])
        return SubmitResult(verdict, [ev], self.snapshot())

    def _commit_applied(self, action: Action, verdict: Verdict) -> SubmitResult:
        before = self.state
        after, machine_events = apply_action(before, action, self.ctx)
        heat_after, phys_events, cut = integrate(
            before, after, action, self.heat, self.scenario.material,
            self.scenario.physics, self.scenario.limits,
        )

        batch: list[SessionEvent] = [machine_events[0]]
        if verdict.decision == "warn":
            payload = {"rule": verdict.rule_id}
            payload.update(verdict.detail)
            batch.append(SessionEvent(
                t=before.clock_s, kind=EventKind.WARNING, code=verdict.code,
                payload=payload,
            ))
        batch.extend(machine_events[1:])
        batch.extend(phys_events)

        desc = sound_for(after, cut, self.ctx.limits, self.scenario.physics)
        if desc != self.last_sound:
            batch.append(SessionEvent(
                t=after.clock_s, kind=EventKind.SOUND, code=desc.mode,
                payload=desc.to_payload(),
            ))
            self.last_sound = desc

        upd = update_progress(after, batch, self.scenario, self.graph,
                              self.completed, self.goal_done)
        self.completed_order = [t for t in self.completed_order if t in self.completed]
        for task_id in upd.completed_now:
            self.completed_order.append(task_id)
            spec = self.scenario.task(task_id)
            batch.append(SessionEvent(
                t=after.clock_s, kind=EventKind.TASK_COMPLETED, code=task_id,
                payload={"task": task_id, "group": spec.group},
            ))
        if upd.goal_now:
            self.goal_done = True
            batch.append(SessionEvent(
                t=after.clock_s, kind=EventKind.GOAL_COMPLETED, code="goal",
                payload={"tasks": len(self.scenario.tasks)},
            ))

        batch.sort(key=lambda ev: ev.t)  # stable: preserves class ordering at ties
        for ev in batch:
            if ev.kind in (EventKind.WARNING, EventKind.ERROR) and ev.weight is None:
                entry = self.scenario.catalog.get(ev.code)
                ev.weight = entry.weight if entry else 0

        self.state = after
        self.heat = heat_after
        for ev in batch:
            if ev.kind is EventKind.ERROR:
                entry = self.scenario.catalog.get(ev.code)
                if entry is not None and entry.must_acknowledge:
                    self.pending_ack = ev.code
                    break
        if upd.goal_now:
            self.status = "completed"

        self._commit_batch(batch)
        return SubmitResult(verdict, batch, self.snapshot())

    def snapshot(self) -> dict[str, Any]:
        with self._lock:
            current = guided_next(self.graph, self.completed) if self.mode == "guided" else None
            return {
                "session": self.id,
                "scenario": self.scenario.id,
                "scenario_hash": self.scenario.scenario_hash,
                "mode": self.mode,
                "status": self.status,
                "halted": self.pending_ack,
                "clock_s": round_s(self.state.clock_s),
                "machine": self.state.to_doc(),
                "heat": self.heat.to_doc(),
                "dro_readings": {
                    "x": dro_reading(self.state, Axis.X, self.ctx.limits),
                    "y": dro_reading(self.state, Axis.Y, self.ctx.limits),
                },
                "sound": self.last_sound.to_payload(),
                "progress": {
                    "completed": sorted(self.completed),
                    "completed_order": list(self.completed_order),
                    "goal_done": self.goal_done,
                    "current_guided": current,
                    "tasks": [
                        {"id": t.id, "group": t.group, "title": t.title,
                         "done": t.id in self.completed}
                        for t in self.scenario.tasks
                    ],
                },
                "last_seq": self.seq,
                "digest": self.state_digest(),
            }

    def report(self) -> dict[str, Any]:
        with self._lock:
            bp = evaluate_blueprint(self.state.workpiece, self.scenario)
            score = error_score(self.events, self.scenario)
            return {
                "session": self.id,
                "scenario": self.scenario.id,
                "scenario_hash": self.scenario.scenario_hash,
                "mode": self.mode,
                "status": self.status,
                "goal_completed": self.goal_done,
                "duration_s": round_s(self.state.clock_s),
                "tasks": {
                    "total": len(self.scenario.tasks),
                    "completed": len(self.completed),
                    "completed_order": list(self.completed_order),
                },
                "blueprint": bp.to_doc(),
                "error_score": score,
                "event_counts": event_counts(self.events),
                "complete": self.goal_done and bp.complete,
            }

    def abandon(self) -> None:
        with self._lock:
            if self.status == "active":
                self.status = "abandoned"
            if self._log_fh is not None:
                self._log_fh.flush()

    def close(self) -> None:
        with self._lock:
            if self._log_fh is not None:
                self._log_fh.close()
                self._log_fh = None

    # -- subscriptions ------------------------------------------------------

    def subscribe(self, from_seq: int = 1) -> tuple[list[dict[str, Any]], queue.SimpleQueue]:
        """Backlog from ``from_seq`` plus a queue receiving future events."""
        with self._lock:
            if from_seq < 1 or from_seq > self.seq + 1:
                raise SessionApiError(
                    "RANGE_ERROR",
                    f"from must lie in [1, {self.seq + 1}]", status=422, path="from")
            backlog = [ev.to_doc() for ev in self.events if ev.seq >= from_seq]
            q: queue.SimpleQueue = queue.SimpleQueue()
            self._subscribers.append(q)
            return backlog, q

    def unsubscribe(self, q: queue.SimpleQueue) -> None:
        with self._lock:
            if q in self._subscribers:
                self._subscribers.remove(q)


# ---------------------------------------------------------------------------
# Replay


@dataclass
class ReplayResult:
    ok: bool
    batches: int = 0
    events: int = 0
    line: Optional[int] = None
    reason: Optional[str] = None
    session: Optional["Session"] = field(default=None, repr=False, compare=False)

    def to_doc(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"ok": self.ok, "batches": self.batches, "events": self.events}
        if not self.ok:
            doc["line"] = self.line
            doc["reason"] = self.reason
        return doc


def replay_log(path: str, scenario: Scenario) -> ReplayResult:
    """Re-run a session log and verify it byte for byte.

    Batches are anchored on events whose payload carries the submitted
    action; each is re-submitted to a fresh session and every regenerated
    line must equal the recorded line exactly.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        return ReplayResult(ok=False, line=1, reason="empty log")

    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        return ReplayResult(ok=False, line=1, reason=f"header is not JSON: {exc}")
    if not isinstance(header, dict) or header.get("v") != LOG_FORMAT_VERSION:
        return ReplayResult(ok=False, line=1,
                            reason=f"unsupported log version {header.get('v')!r}")
    if header.get("scenario_hash") != scenario.scenario_hash:
        return ReplayResult(
            ok=False, line=1,
            reason=f"SCENARIO_MISMATCH: log has {header.get('scenario_hash')!r}, "
                   f"scenario is {scenario.scenario_hash!r}")

    mode = header.get("mode", "free")
    session = Session(scenario, mode=mode, session_id=header.get("session"))

    # Parse every event line first so syntax errors report their line number.
    parsed: list[tuple[int, str, SessionEvent]] = []
    for line_no, raw in enumerate(lines[1:], start=2):
        try:
            doc = json.loads(raw)
            ev = SessionEvent.from_doc(doc)
        except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
            return ReplayResult(ok=False, line=line_no, reason=f"bad event line: {exc}")
        parsed.append((line_no, raw, ev))

    batches: list[list[tuple[int, str, SessionEvent]]] = []
    for item in parsed:
        if "action" in item[2].payload:
            batches.append([item])
        elif batches:
            batches[-1].append(item)
        else:
            return ReplayResult(ok=False, line=item[0],
                                reason="event before any action anchor")

    total_events = 0
    for batch in batches:
        anchor_line, _, anchor = batch[0]
        try:
            action = Action.from_payload(anchor.payload["action"])
            result = session.submit(action)
        except (SessionApiError, ActionValidationError) as exc:
            return ReplayResult(ok=False, batches=len(batches), line=anchor_line,
                                reason=f"replay rejected action: {exc}")
        if len(result.events) != len(batch):
            return ReplayResult(
                ok=False, line=anchor_line,
                reason=f"batch regenerated {len(result.events)} events, log has {len(batch)}")
        for (line_no, raw, _), regen in zip(batch, result.events):
            regen_line = canonical_json(regen.to_doc())
            if regen_line != raw:
                return ReplayResult(ok=False, line=line_no,
                                    reason="regenerated event differs from log")
            total_events += 1

    return ReplayResult(ok=True, batches=len(batches), events=total_events,
                        session=session)


# ---------------------------------------------------------------------------
# Manager


class SessionManager:
    """Registry keyed by session id, shared by the HTTP server."""

    def __init__(self):
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    def create(self, scenario: Scenario, mode: str = "free") -> Session:
        session = Session(scenario, mode=mode)
        with self._lock:
            self._sessions[session.id] = session
        return session

    def get(self, session_id: str) -> Session:
        with self._lock:
            session = self._sessions.get(session_id)
        if session is None:
            raise SessionApiError("NOT_FOUND", f"no session {session_id!r}", status=404)
        return session

    def abandon(self, session_id: str) -> Session:
        session = self.get(session_id)
        session.abandon()
        return session

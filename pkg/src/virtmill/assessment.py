"""Scoring: blueprint conformance, weighted error totals, cohort rollups.

Blueprint matching is solved exactly. With at most a handful of holes per
part the assignment space is tiny, so the matcher enumerates every
hole-to-callout assignment and keeps the cheapest by total center distance,
breaking ties toward the lexicographically first assignment so results are
reproducible across runs and platforms. A guard refuses inputs large
enough to make that enumeration expensive.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional, Sequence

from .canonical import round_in
from .machine import EventKind, Hole, SessionEvent, WorkpieceState
from .scenario import Scenario

ASSIGNMENT_SIZE_LIMIT = 6

HOLE_FLAGS = ("overheated", "off_speed", "no_center_drill")


class AssessmentError(ValueError):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


@dataclass(frozen=True)
class HoleResult:
    status: str                      # ok | out_of_tolerance | extra | missing
    nominal_index: Optional[int]
    hole_id: Optional[str]
    position_error_in: Optional[float] = None
    diameter_error_in: Optional[float] = None
    depth_error_in: Optional[float] = None
    within_position: Optional[bool] = None
    within_diameter: Optional[bool] = None
    within_depth: Optional[bool] = None
    flags: tuple[str, ...] = ()
    disqualified: bool = False

    def to_doc(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "status": self.status,
            "nominal_index": self.nominal_index,
            "hole_id": self.hole_id,
            "flags": list(self.flags),
            "disqualified": self.disqualified,
        }
        if self.position_error_in is not None:
            doc.update({
                "position_error_in": round_in(self.position_error_in),
                "diameter_error_in": round_in(self.diameter_error_in),
                "depth_error_in": round_in(self.depth_error_in),
                "within_position": self.within_position,
                "within_diameter": self.within_diameter,
                "within_depth": self.within_depth,
            })
        return doc


@dataclass(frozen=True)
class BlueprintReport:
    complete: bool
    results: tuple[HoleResult, ...]

    def to_doc(self) -> dict[str, Any]:
        return {"complete": self.complete, "results": [r.to_doc() for r in self.results]}


def _best_assignment(nominals: Sequence[tuple[float, float]],
                     holes: Sequence[Hole]) -> list[Optional[int]]:
    """Hole index per nominal (or None), minimizing total center distance."""
    n, m = len(nominals), len(holes)
    if max(n, m) > ASSIGNMENT_SIZE_LIMIT:
        raise AssessmentError(
            "SIZE_LIMIT",
            f"exhaustive matching supports at most {ASSIGNMENT_SIZE_LIMIT} holes")

    def dist(j: int, k: int) -> float:
        nx, ny = nominals[j]
        return math.hypot(holes[k].x - nx, holes[k].y - ny)

    best: Optional[tuple[float, tuple[int, ...], list[Optional[int]]]] = None
    if m >= n:
        for perm in itertools.permutations(range(m), n):
            cost = sum(dist(j, perm[j]) for j in range(n))
            key = (cost, perm)
            if best is None or key < best[:2]:
                best = (cost, perm, list(perm))
    else:
        # Fewer holes than callouts: every assignment leaves the same number
        # of callouts empty, so compare by matched distance alone. The sort
        # key treats "no hole" as larger than any hole index.
        for chosen in itertools.combinations(range(n), m):
            for perm in itertools.permutations(range(m)):
                assignment: list[Optional[int]] = [None] * n
                for slot, j in enumerate(chosen):
                    assignment[j] = perm[slot]
                cost = sum(dist(j, k) for j, k in enumerate(assignment) if k is not None)
                key_tuple = tuple(m if k is None else k for k in assignment)
                key = (cost, key_tuple)
                if best is None or key < best[:2]:
                    best = (cost, key_tuple, assignment)
    assert best is not None
    return best[2]


def evaluate_blueprint(workpiece: WorkpieceState, scenario: Scenario) -> BlueprintReport:
    bp = scenario.blueprint
    nominals = [scenario.blueprint_hole_abs(i) for i in range(len(bp.holes))]
    holes = list(workpiece.holes)
    assignment = _best_assignment(nominals, holes)

    results: list[HoleResult] = []
    complete = True
    for j, k in enumerate(assignment):
        if k is None:
            results.append(HoleResult(status="missing", nominal_index=j, hole_id=None))
            complete = False
            continue
        hole = holes[k]
        spec = bp.holes[j]
        pos_err = math.hypot(hole.x - nominals[j][0], hole.y - nominals[j][1])
        dia_err = hole.diameter_in - spec.diameter_in
        depth_err = hole.depth_in - spec.depth_in
        within_pos = pos_err <= bp.position_tol_in + 1e-9
        within_dia = abs(dia_err) <= bp.diameter_tol_in + 1e-9
        within_depth = abs(depth_err) <= bp.depth_tol_in + 1e-9
        flags = tuple(f for f in HOLE_FLAGS if getattr(hole, f))
        disqualified = any(f in bp.disqualifying_flags for f in flags)
        ok = within_pos and within_dia and within_depth and not disqualified
        results.append(HoleResult(
            status="ok" if ok else "out_of_tolerance",
            nominal_index=j, hole_id=hole.id,
            position_error_in=pos_err, diameter_error_in=dia_err, depth_error_in=depth_err,
            within_position=within_pos, within_diameter=within_dia, within_depth=within_depth,
            flags=flags, disqualified=disqualified,
        ))
        if not ok:
            complete = False

    matched = {k for k in assignment if k is not None}
    for k, hole in enumerate(holes):
        if k not in matched:
            results.append(HoleResult(
                status="extra", nominal_index=None, hole_id=hole.id,
                flags=tuple(f for f in HOLE_FLAGS if getattr(hole, f)),
            ))

    return BlueprintReport(complete=complete, results=tuple(results))


def error_score(events: Iterable[SessionEvent], scenario: Scenario) -> int:
    """Sum of catalog weights over every warning and error in the log."""
    total = 0
    for ev in events:
        if ev.kind not in (EventKind.WARNING, EventKind.ERROR):
            continue
        entry = scenario.catalog.get(ev.code)
        if entry is None:
            raise AssessmentError("UNKNOWN_CODE", f"event code {ev.code!r} not in catalog")
        total += entry.weight
    return total


def event_counts(events: Iterable[SessionEvent]) -> dict[str, int]:
    counts: dict[str, int] = {}
    for ev in events:
        if ev.kind in (EventKind.WARNING, EventKind.ERROR):
            counts[ev.code] = counts.get(ev.code, 0) + 1
    return dict(sorted(counts.items()))


def normalized_change(pre: float, post: float) -> Optional[float]:
    """Relative change of a score in [0, 1], scaled by the room it had.

    Gains are measured against the headroom above ``pre``; losses against
    ``pre`` itself. A pair already at the ceiling has no defined change.
    """
    for name, v in (("pre", pre), ("post", post)):
        if not (0.0 <= v <= 1.0):
            raise AssessmentError("DOMAIN_ERROR", f"{name} must lie in [0, 1], got {v!r}")
    if pre == 1.0 and post == 1.0:
        return None
    if post == pre:
        return 0.0
    if post > pre:
        return (post - pre) / (1.0 - pre)
    return (post - pre) / pre


@dataclass(frozen=True)
class SessionReport:
    completed: bool
    time_on_task_s: float
    error_score: int
    warnings: tuple[dict[str, Any], ...]
    blueprint: BlueprintReport
    questions_asked: int = 0

    def to_doc(self) -> dict[str, Any]:
        return {
            "complete": self.completed,
            "duration_s": self.time_on_task_s,
            "error_score": self.error_score,
            "warnings": [dict(w) for w in self.warnings],
            "blueprint": self.blueprint.to_doc(),
            "questions_asked": self.questions_asked,
        }


def session_report(events: Sequence[SessionEvent], workpiece: WorkpieceState,
                   scenario: Scenario, questions_asked: int = 0) -> SessionReport:
    """Assemble the end-of-session report from a finished event log.

    The log must be in submission order. ``questions_asked`` is an
    instructor-entered tally carried through untouched.
    """
    last_t: Optional[float] = None
    last_seq: Optional[int] = None
    for i, ev in enumerate(events):
        if last_t is not None and ev.t < last_t:
            raise AssessmentError(
                "LOG_ORDER_ERROR",
                f"event {i} at t={ev.t} precedes its predecessor at t={last_t}")
        if ev.seq is not None:
            if last_seq is not None and ev.seq <= last_seq:
                raise AssessmentError(
                    "LOG_ORDER_ERROR",
                    f"event {i} has seq {ev.seq} after seq {last_seq}")
            last_seq = ev.seq
        last_t = ev.t

    time_on_task = events[-1].t - events[0].t if events else 0.0
    warnings = tuple(
        {"code": ev.code, "weight": ev.weight or 0, "t": ev.t}
        for ev in events
        if ev.kind in (EventKind.WARNING, EventKind.ERROR)
    )
    bp_report = evaluate_blueprint(workpiece, scenario)
    goal = any(ev.kind is EventKind.GOAL_COMPLETED for ev in events)
    return SessionReport(
        completed=goal and bp_report.complete,
        time_on_task_s=time_on_task,
        error_score=error_score(events, scenario),
        warnings=warnings,
        blueprint=bp_report,
        questions_asked=questions_asked,
    )


@dataclass(frozen=True)
class CohortStats:
    n: int
    completed: int
    completion_rate: float
    mean_error_score: float
    mean_time_min: float
    mean_normalized_change: Optional[dict[str, float]] = None

    def to_doc(self) -> dict[str, Any]:
        doc = {
            "n": self.n,
            "completed": self.completed,
            "completion_rate": self.completion_rate,
            "mean_error_score": self.mean_error_score,
            "mean_time_min": self.mean_time_min,
        }
        if self.mean_normalized_change is not None:
            doc["mean_normalized_change"] = dict(self.mean_normalized_change)
        return doc


def cohort_summary(entries: Iterable[dict[str, Any]]) -> dict[str, CohortStats]:
    """Per-group means over finished sessions.

    Each entry needs ``group``, ``complete``, ``error_score`` and
    ``duration_s``. An optional ``normalized_change`` carries per-construct
    learning gains ({construct: value or None}); None marks a pair excluded
    from that construct's mean, and constructs with no usable pairs in a
    group are left out rather than reported as zero. Means divide exactly
    once so decimal-exact inputs produce decimal-exact outputs.
    """
    groups: dict[str, list[dict[str, Any]]] = {}
    for i, entry in enumerate(entries):
        for key in ("group", "complete", "error_score", "duration_s"):
            if key not in entry:
                raise AssessmentError("MISSING_FIELD", f"entry {i} lacks {key!r}")
        groups.setdefault(str(entry["group"]), []).append(entry)

    out: dict[str, CohortStats] = {}
    for group, rows in sorted(groups.items()):
        n = len(rows)
        completed = sum(1 for r in rows if r["complete"])
        err_total = math.fsum(float(r["error_score"]) for r in rows)
        time_total = math.fsum(float(r["duration_s"]) for r in rows)

        gains: dict[str, list[float]] = {}
        any_gains = False
        for r in rows:
            nc = r.get("normalized_change")
            if nc is None:
                continue
            any_gains = True
            if not isinstance(nc, dict):
                nc = {"overall": nc}
            for construct, value in nc.items():
                if value is not None:
                    gains.setdefault(str(construct), []).append(float(value))
        mean_nc = None
        if any_gains:
            mean_nc = {
                c: round(math.fsum(vs) / len(vs), 4)
                for c, vs in sorted(gains.items())
            }

        out[group] = CohortStats(
            n=n,
            completed=completed,
            completion_rate=round(completed / n, 4),
            mean_error_score=round(err_total / n, 4),
            mean_time_min=round(time_total / (60.0 * n), 2),
            mean_normalized_change=mean_nc,
        )
    return out

"""Task ordering and the action rule engine.

Two layers decide what an operator may do:

* **Rules** are scenario data evaluated in order, first match wins. A rule
  can block an action outright or let it through with a warning. Rules see
  the machine state as named boolean flags so the scenario document stays
  declarative.
* **Gating** compares the action against the task graph. Group-level
  precedence is expanded to edges between individual tasks; an action that
  maps to a task whose predecessors are incomplete is out of order. Strict
  sequences additionally forbid interleaving other mapped tasks once the
  sequence has started. Guided mode replaces graph gating with a single
  allowed set per step.

Rule blocks always win over gating so a safety mistake is reported as the
safety mistake, not as an ordering problem.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Iterator, Optional

from .machine import (
    Action,
    ActionKind,
    Axis,
    EventKind,
    Hazard,
    MachineContext,
    MachineState,
    SessionEvent,
    ToolKind,
    material_depth_at,
    spindle_over_part,
    tip_depth_in,
)
from .physics import PhysicsParams
from .scenario import Matcher, Scenario


class TaskGraphError(ValueError):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


class LinearizationOverflow(RuntimeError):
    """More orderings exist than the caller asked to enumerate."""

    code = "COUNT_OVERFLOW"

    def __init__(self, cap: int, partial: int):
        super().__init__(f"more than {cap} linearizations (stopped at {partial})")
        self.cap = cap
        self.partial = partial


@dataclass(frozen=True)
class TaskGraph:
    order: tuple[str, ...]                      # declared task order
    edges: frozenset[tuple[str, str]]           # (before, after) pairs
    preds: dict[str, frozenset[str]]
    succs: dict[str, frozenset[str]]

    @classmethod
    def from_scenario(cls, scenario: Scenario) -> "TaskGraph":
        order = tuple(scenario.task_ids())
        by_group: dict[str, list[str]] = {}
        for t in scenario.tasks:
            by_group.setdefault(t.group, []).append(t.id)

        edges: set[tuple[str, str]] = set()
        for before_g, after_g in scenario.group_precedence:
            for a in by_group.get(before_g, ()):
                for b in by_group.get(after_g, ()):
                    edges.add((a, b))
        for seq in scenario.strict_sequences:
            for a, b in zip(seq, seq[1:]):
                edges.add((a, b))

        graph = cls._build(order, edges)
        graph._validate(scenario)
        return graph

    @classmethod
    def _build(cls, order: tuple[str, ...], edges: set[tuple[str, str]]) -> "TaskGraph":
        preds: dict[str, set[str]] = {t: set() for t in order}
        succs: dict[str, set[str]] = {t: set() for t in order}
        for a, b in edges:
            if a not in preds or b not in preds:
                raise TaskGraphError("UNKNOWN_TASK", f"edge ({a}, {b}) references unknown task")
            if a == b:
                raise TaskGraphError("CYCLIC_GRAPH", f"task {a!r} precedes itself")
            preds[b].add(a)
            succs[a].add(b)
        graph = cls(
            order=order,
            edges=frozenset(edges),
            preds={t: frozenset(p) for t, p in preds.items()},
            succs={t: frozenset(s) for t, s in succs.items()},
        )
        graph._check_acyclic()
        return graph

    def _check_acyclic(self) -> None:
        # Kahn's algorithm; anything left over sits on a cycle.
        indeg = {t: len(self.preds[t]) for t in self.order}
        ready = [t for t in self.order if indeg[t] == 0]
        seen = 0
        while ready:
            t = ready.pop()
            seen += 1
            for s in self.succs[t]:
                indeg[s] -= 1
                if indeg[s] == 0:
                    ready.append(s)
        if seen != len(self.order):
            stuck = sorted(t for t in self.order if indeg[t] > 0)
            raise TaskGraphError("CYCLIC_GRAPH", f"cycle through {', '.join(stuck)}")

    def _validate(self, scenario: Scenario) -> None:
        # Declared interchangeability means no ordering constraint may exist
        # between any two members, in either direction.
        for seq in scenario.interchange_groups:
            for i, a in enumerate(seq):
                for b in seq[i + 1:]:
                    if (a, b) in self.edges or (b, a) in self.edges:
                        raise TaskGraphError(
                            "INCONSISTENT_SPEC",
                            f"{a!r} and {b!r} are declared interchangeable but ordered")
        # The declared task order doubles as the guided walkthrough, so it
        # has to be one of the graph's own linearizations.
        pos = {t: i for i, t in enumerate(self.order)}
        for a, b in self.edges:
            if pos[a] >= pos[b]:
                raise TaskGraphError(
                    "INCONSISTENT_SPEC",
                    f"declared task order violates precedence ({a!r} before {b!r})")

    def descendants(self, task: str) -> set[str]:
        out: set[str] = set()
        stack = [task]
        while stack:
            for s in self.succs[stack.pop()]:
                if s not in out:
                    out.add(s)
                    stack.append(s)
        return out

    def iter_linearizations(self) -> Iterator[list[str]]:
        """Yield every topological order, lexicographic by declared order."""
        indeg = {t: len(self.preds[t]) for t in self.order}
        prefix: list[str] = []

        def walk() -> Iterator[list[str]]:
            if len(prefix) == len(self.order):
                yield list(prefix)
                return
            for t in self.order:
                if indeg[t] == 0 and t not in prefix_set:
                    prefix.append(t)
                    prefix_set.add(t)
                    for s in self.succs[t]:
                        indeg[s] -= 1
                    yield from walk()
                    for s in self.succs[t]:
                        indeg[s] += 1
                    prefix_set.discard(t)
                    prefix.pop()

        prefix_set: set[str] = set()
        yield from walk()

    def linearizations(self, cap: int = 10000) -> list[list[str]]:
        out: list[list[str]] = []
        for order in self.iter_linearizations():
            out.append(order)
            if len(out) > cap:
                raise LinearizationOverflow(cap, len(out))
        return out


# ---------------------------------------------------------------------------
# State flags: the vocabulary rules and matchers can test.


def _would_cut(state: MachineState, action: Action, ctx: MachineContext,
               params: PhysicsParams) -> bool:
    """Would this quill move extend a cut, ignoring speed and clamping?"""
    if action.kind is not ActionKind.MOVE_QUILL or not action.delta_z_in or action.delta_z_in <= 0:
        return False
    tool = state.chuck.held_tool
    if tool is None or tool.kind not in (ToolKind.CENTER_DRILL, ToolKind.TWIST_DRILL):
        return False
    if not (state.chuck.installed and state.chuck.tightened):
        return False
    if not (spindle_over_part(state) and state.vise.part_in):
        return False
    target = min(state.quill_z_in + action.delta_z_in, ctx.limits.quill_travel_in)
    tip_target = target - ctx.limits.tip_clearance_in
    floor = max(material_depth_at(state, state.table.x, state.table.y, params.match_tol_in), 0.0)
    cap = state.workpiece.height_in + params.breakthrough_in
    return tip_target > floor and floor < cap


def _would_crash_noncutting(state: MachineState, action: Action, ctx: MachineContext,
                            params: PhysicsParams) -> bool:
    if action.kind is not ActionKind.MOVE_QUILL or not action.delta_z_in or action.delta_z_in <= 0:
        return False
    tool = state.chuck.held_tool
    if tool is None or tool.kind in (ToolKind.CENTER_DRILL, ToolKind.TWIST_DRILL):
        return False
    if not (spindle_over_part(state) and state.vise.part_in):
        return False
    target = min(state.quill_z_in + action.delta_z_in, ctx.limits.quill_travel_in)
    return target - ctx.limits.tip_clearance_in > 0.0


FlagFn = Callable[[MachineState, Action, MachineContext, PhysicsParams], bool]

STATE_FLAGS: dict[str, FlagFn] = {
    "in_shop": lambda s, a, c, p: s.operator.in_shop,
    "hazards_any": lambda s, a, c, p: bool(s.operator.hazards),
    "hazard_loose_hair": lambda s, a, c, p: Hazard.LOOSE_HAIR in s.operator.hazards,
    "powered": lambda s, a, c, p: s.spindle.power,
    "rotating": lambda s, a, c, p: s.spindle.power and s.spindle.speed_rpm > 0,
    "quill_locked": lambda s, a, c, p: s.spindle.quill_lock,
    "chuck_installed": lambda s, a, c, p: s.chuck.installed,
    "chuck_tightened": lambda s, a, c, p: s.chuck.tightened,
    "chuck_has_tool": lambda s, a, c, p: s.chuck.held_tool is not None,
    "chuck_accepts_tool": lambda s, a, c, p: (
        s.chuck.installed and s.chuck.held_tool is None and not s.chuck.tightened),
    "chuck_releases_tool": lambda s, a, c, p: (
        s.chuck.held_tool is not None and not s.chuck.tightened),
    "vise_tightened": lambda s, a, c, p: s.vise.tightened,
    "vise_brushed": lambda s, a, c, p: s.vise.brushed_clean,
    "parallels_in": lambda s, a, c, p: s.vise.parallels_in,
    "part_in": lambda s, a, c, p: s.vise.part_in,
    "part_seated": lambda s, a, c, p: s.vise.part_seated,
    "can_place_part": lambda s, a, c, p: (
        not s.vise.part_in and s.vise.jaw_gap_in > s.workpiece.width_in),
    "final_clamp": lambda s, a, c, p: (
        s.vise.part_in and not s.vise.tightened
        and abs(s.vise.jaw_gap_in - s.workpiece.width_in) < 1e-9),
    "burrs_present": lambda s, a, c, p: bool(s.workpiece.burrs),
    "tip_engaged": lambda s, a, c, p: (
        spindle_over_part(s) and s.vise.part_in and tip_depth_in(s, c.limits) > 0.0),
    "would_cut": _would_cut,
    "would_crash_noncutting": _would_crash_noncutting,
}


def action_matches(matcher: Matcher, state: MachineState, action: Action,
                   ctx: MachineContext, params: PhysicsParams) -> bool:
    kind = action.kind.value
    if matcher.kinds is not None and kind not in matcher.kinds:
        return False
    if kind in matcher.not_kinds:
        return False
    if matcher.on is not None and action.on is not matcher.on:
        return False
    if matcher.force is not None and action.force != matcher.force:
        return False
    if matcher.tool_kind is not None:
        tool = state.chuck.held_tool
        if tool is None or tool.kind.value != matcher.tool_kind:
            return False
    for name, expected in matcher.flags:
        fn = STATE_FLAGS.get(name)
        if fn is None:
            raise TaskGraphError("UNKNOWN_FLAG", f"no state flag named {name!r}")
        if fn(state, action, ctx, params) is not expected:
            return False
    return True


# ---------------------------------------------------------------------------
# Verdicts


@dataclass(frozen=True)
class Verdict:
    decision: str  # allowed | warn | blocked
    code: Optional[str] = None
    rule_id: Optional[str] = None
    detail: dict[str, Any] = field(default_factory=dict)

    @property
    def blocked(self) -> bool:
        return self.decision == "blocked"


def map_action_to_task(state: MachineState, action: Action, scenario: Scenario,
                       ctx: MachineContext) -> Optional[str]:
    for task_id, matcher in scenario.action_map:
        if action_matches(matcher, state, action, ctx, scenario.physics):
            return task_id
    return None


def evaluate_action(state: MachineState, action: Action, scenario: Scenario,
                    ctx: MachineContext, graph: TaskGraph, completed: set[str],
                    mode: str) -> Verdict:
    """Decide allowed/warn/blocked for one action against the current state."""
    warn: Optional[Verdict] = None
    for rule in scenario.rules:
        if action_matches(rule.when, state, action, ctx, scenario.physics):
            if rule.verdict == "blocked":
                return Verdict("blocked", code=rule.code, rule_id=rule.id)
            warn = Verdict("warn", code=rule.code, rule_id=rule.id)
            break

    if mode == "guided":
        current = guided_next(graph, completed)
        if current is not None:
            allowed = any(
                action_matches(m, state, action, ctx, scenario.physics)
                for m in scenario.guided[current]
            )
            if not allowed:
                return Verdict("blocked", code="GUIDED_GATE",
                               detail={"expected_task": current})

    # Graph gating applies in both modes. Along the walkthrough order it is
    # already satisfied, but an arbitrary completed set (snapshots restored
    # mid-phase, tests probing unreachable progress) must never make guided
    # mode admit something open mode would refuse.
    ordering = _ordering_verdict(state, action, scenario, ctx, graph, completed)
    if ordering is not None:
        return ordering

    return warn or Verdict("allowed")


def _ordering_verdict(state: MachineState, action: Action, scenario: Scenario,
                      ctx: MachineContext, graph: TaskGraph,
                      completed: set[str]) -> Optional[Verdict]:
    task_id = map_action_to_task(state, action, scenario, ctx)
    if task_id is None:
        return None
    missing = sorted(graph.preds[task_id] - completed)
    if missing:
        return Verdict("blocked", code="OUT_OF_ORDER",
                       detail={"task": task_id, "missing": missing})
    for seq in scenario.strict_sequences:
        members = set(seq)
        started = bool(members & completed)
        finished = members <= completed
        if started and not finished and task_id not in members:
            return Verdict("blocked", code="OUT_OF_ORDER",
                           detail={"task": task_id, "strict_sequence": list(seq)})
    return None


def guided_next(graph: TaskGraph, completed: set[str],
                mode: str = "guided") -> Optional[str]:
    """The step the walkthrough expects next: first incomplete, declared order."""
    if mode != "guided":
        raise TaskGraphError("MODE_MISMATCH", "there is no walkthrough cursor outside guided mode")
    for t in graph.order:
        if t not in completed:
            return t
    return None


def allowed_actions(state: MachineState, scenario: Scenario, ctx: MachineContext,
                    graph: TaskGraph, completed: set[str], mode: str,
                    candidates: Optional[list[Action]] = None) -> list[Action]:
    """Filter candidate actions down to those the engine would not block.

    With no explicit candidate list a representative probe set is generated
    from the scenario (every action kind with scenario-plausible parameters).
    """
    if candidates is None:
        candidates = candidate_actions(state, scenario, ctx)
    return [
        a for a in candidates
        if not evaluate_action(state, a, scenario, ctx, graph, completed, mode).blocked
    ]


def candidate_actions(state: MachineState, scenario: Scenario,
                      ctx: MachineContext) -> list[Action]:
    """One or more concrete probes per action kind, parameterized sensibly."""
    out: list[Action] = []
    for kind in (ActionKind.ENTER_SHOP, ActionKind.BRUSH_VISE,
                 ActionKind.INSERT_PARALLELS, ActionKind.PLACE_PART,
                 ActionKind.TIGHTEN_VISE, ActionKind.LOOSEN_VISE,
                 ActionKind.INSTALL_CHUCK, ActionKind.REMOVE_CHUCK,
                 ActionKind.TIGHTEN_CHUCK, ActionKind.LOOSEN_CHUCK,
                 ActionKind.UNLOAD_TOOL):
        out.append(Action(kind))
    for hz in sorted(scenario.hazards, key=lambda h: h.value):
        out.append(Action(ActionKind.RESOLVE_HAZARD, hazard=hz))
    out.append(Action(ActionKind.TOGGLE_SPINDLE, on=True))
    out.append(Action(ActionKind.TOGGLE_SPINDLE, on=False))
    out.append(Action(ActionKind.LOCK_QUILL, on=True))
    out.append(Action(ActionKind.LOCK_QUILL, on=False))
    out.append(Action(ActionKind.SET_SPEED, rpm=ctx.limits.max_rpm // 2))
    out.append(Action(ActionKind.MALLET_TAP, force="light"))
    out.append(Action(ActionKind.MALLET_TAP, force="firm"))
    for tool in scenario.tools.values():
        if tool.kind in (ToolKind.EDGE_FINDER, ToolKind.CENTER_DRILL, ToolKind.TWIST_DRILL):
            out.append(Action(ActionKind.LOAD_TOOL, tool_id=tool.id))
    for axis in (Axis.X, Axis.Y):
        out.append(Action(ActionKind.CRANK_TABLE, axis=axis, revolutions=1.0))
        out.append(Action(ActionKind.CRANK_TABLE, axis=axis, revolutions=-1.0))
        out.append(Action(ActionKind.ZERO_DRO, axis=axis, offset_in=0.0))
    out.append(Action(ActionKind.MOVE_QUILL, delta_z_in=0.5, duration_s=2.0))
    out.append(Action(ActionKind.MOVE_QUILL, delta_z_in=-0.5, duration_s=2.0))
    for hole in state.workpiece.holes:
        out.append(Action(ActionKind.DEBURR, hole_id=hole.id))
        break
    return out


# ---------------------------------------------------------------------------
# Completion


CheckFn = Callable[[MachineState, list[SessionEvent], Scenario, dict[str, Any]], bool]


def _check_operator_ready(state, events, scenario, args) -> bool:
    return state.operator.in_shop


def _check_part_clamped(state, events, scenario, args) -> bool:
    return state.vise.part_seated and state.vise.tightened


def _check_chuck_ready(state, events, scenario, args) -> bool:
    return state.chuck.installed and state.chuck.tightened and state.chuck.held_tool is not None


def _check_edge_zeroed(state, events, scenario, args) -> bool:
    axis = args["axis"]
    for ev in events:
        if ev.kind is EventKind.STATE_CHANGE and ev.code == "dro_zeroed":
            p = ev.payload
            if p.get("axis") == axis and p.get("at_edge") and p.get("exact"):
                return True
    return False


def _hole_near_blueprint(state: MachineState, scenario: Scenario, index: int,
                         min_depth: float):
    ax, ay = scenario.blueprint_hole_abs(index)
    tol = scenario.physics.match_tol_in
    for h in state.workpiece.holes:
        if abs(h.x - ax) <= tol and abs(h.y - ay) <= tol and h.depth_in >= min_depth:
            return h
    return None


def _check_spotted(state, events, scenario, args) -> bool:
    ax, ay = scenario.blueprint_hole_abs(int(args["hole"]))
    tol = scenario.blueprint.position_tol_in
    for s in state.workpiece.spots:
        if (abs(s.x - ax) <= tol and abs(s.y - ay) <= tol
                and s.depth_in >= scenario.physics.min_spot_depth_in):
            return True
    return False


def _check_spindle_running_for_drill(state, events, scenario, args) -> bool:
    tool = state.chuck.held_tool
    return (state.spindle.power and tool is not None
            and tool.kind is ToolKind.TWIST_DRILL and state.chuck.tightened)


def _check_speed_set_for_drill(state, events, scenario, args) -> bool:
    tool = state.chuck.held_tool
    if tool is None or tool.kind is not ToolKind.TWIST_DRILL or not state.spindle.power:
        return False
    return any(
        ev.kind is EventKind.STATE_CHANGE and ev.code == ActionKind.SET_SPEED.value
        for ev in events
    )


def _check_hole_at_blueprint(state, events, scenario, args) -> bool:
    idx = int(args["hole"])
    need = scenario.blueprint.holes[idx].depth_in - scenario.blueprint.depth_tol_in
    return _hole_near_blueprint(state, scenario, idx, need) is not None


def _check_drill_shutdown(state, events, scenario, args) -> bool:
    return not state.spindle.power and _check_hole_at_blueprint(state, events, scenario, args)


def _check_deburred(state, events, scenario, args) -> bool:
    return bool(state.workpiece.holes) and not state.workpiece.burrs


COMPLETION_CHECKS: dict[str, CheckFn] = {
    "operator_ready": _check_operator_ready,
    "part_clamped": _check_part_clamped,
    "chuck_ready": _check_chuck_ready,
    "edge_zeroed": _check_edge_zeroed,
    "spotted_at_blueprint": _check_spotted,
    "spindle_running_for_drill": _check_spindle_running_for_drill,
    "speed_set_for_drill": _check_speed_set_for_drill,
    "hole_at_blueprint": _check_hole_at_blueprint,
    "drill_shutdown": _check_drill_shutdown,
    "deburred": _check_deburred,
}

RESET_CHECKS: dict[str, Callable[[MachineState], bool]] = {
    "part_out": lambda s: not s.vise.part_in,
    "chuck_absent": lambda s: not s.chuck.installed,
}


def validate_checks(scenario: Scenario) -> None:
    """Fail fast when a task references a check this engine doesn't have."""
    for t in scenario.tasks:
        name = t.done_when.get("check")
        if name not in COMPLETION_CHECKS:
            raise TaskGraphError("UNKNOWN_CHECK", f"task {t.id!r} uses unknown check {name!r}")
        if t.reset_when is not None and t.reset_when not in RESET_CHECKS:
            raise TaskGraphError("UNKNOWN_CHECK",
                                 f"task {t.id!r} uses unknown reset {t.reset_when!r}")


@dataclass
class ProgressUpdate:
    completed_now: list[str] = field(default_factory=list)
    reset_now: list[str] = field(default_factory=list)
    goal_now: bool = False


def update_progress(state: MachineState, batch_events: list[SessionEvent],
                    scenario: Scenario, graph: TaskGraph, completed: set[str],
                    goal_done: bool) -> ProgressUpdate:
    """Re-evaluate task completion after an applied action.

    ``completed`` is mutated in place. A task whose reset condition fires
    drags every downstream task back with it: later work is only meaningful
    on top of a setup that still exists.
    """
    out = ProgressUpdate()

    for t in scenario.tasks:
        if t.reset_when and t.id in completed and RESET_CHECKS[t.reset_when](state):
            undone = {t.id} | (graph.descendants(t.id) & completed)
            for u in sorted(undone, key=graph.order.index):
                completed.discard(u)
                out.reset_now.append(u)

    for t in scenario.tasks:
        if t.id in completed:
            continue
        check = COMPLETION_CHECKS[t.done_when["check"]]
        if check(state, batch_events, scenario, t.done_when):
            completed.add(t.id)
            out.completed_now.append(t.id)

    if not goal_done and len(completed) == len(scenario.tasks):
        out.goal_now = True
    return out

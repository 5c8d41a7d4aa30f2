"""Machine state and action primitives for a 3-axis manual knee mill.

The machine is modeled as plain data plus a pure transition function:
``apply_action(state, action, ctx)`` returns a new state and the events the
transition produced. Nothing in this module decides whether an action is
*permitted*; that is the rule engine's job. This module only answers what
the iron does once the action happens.

Coordinate conventions:

* Table x/y are absolute positions in inches within the travel envelope.
  The spindle axis projects onto the table at exactly ``(table.x, table.y)``.
* The workpiece occupies ``[origin_x, origin_x + length] x
  [origin_y, origin_y + width]``.
* ``quill_z`` is 0 at full retraction and increases downward. A tool tip
  touches the part top face at ``quill_z == tip_clearance_in``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from typing import Any, Optional

from .canonical import digest, round_in, round_s


class Axis(str, Enum):
    X = "x"
    Y = "y"


class Hazard(str, Enum):
    NO_GOGGLES = "no_goggles"
    LOOSE_HAIR = "loose_hair"
    RING = "ring"
    LOOSE_SLEEVES = "loose_sleeves"


class ToolKind(str, Enum):
    CHUCK_KEY = "chuck_key"
    MALLET = "mallet"
    BRUSH = "brush"
    EDGE_FINDER = "edge_finder"
    CENTER_DRILL = "center_drill"
    TWIST_DRILL = "twist_drill"
    DEBURR_TOOL = "deburr_tool"


# Tools that may be clamped in the drill chuck. Everything else is a hand tool.
CHUCKABLE_KINDS = {ToolKind.EDGE_FINDER, ToolKind.CENTER_DRILL, ToolKind.TWIST_DRILL}
CUTTING_KINDS = {ToolKind.CENTER_DRILL, ToolKind.TWIST_DRILL}


@dataclass(frozen=True)
class ToolRef:
    id: str
    kind: ToolKind
    diameter_in: float = 0.0

    def to_payload(self) -> dict[str, Any]:
        return {"id": self.id, "kind": self.kind.value, "diameter_in": round_in(self.diameter_in)}


class EventKind(str, Enum):
    STATE_CHANGE = "state_change"
    WARNING = "warning"
    ERROR = "error"
    SOUND = "sound"
    TASK_COMPLETED = "task_completed"
    GOAL_COMPLETED = "goal_completed"


@dataclass
class SessionEvent:
    """One entry in a session's append-only log.

    ``seq`` and ``weight`` are stamped by the session pipeline; transition
    code only decides kind, code, payload and simulated time.
    """

    t: float
    kind: EventKind
    code: str
    payload: dict[str, Any] = field(default_factory=dict)
    seq: Optional[int] = None
    weight: Optional[int] = None
    state_digest: Optional[str] = None

    def to_doc(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "seq": self.seq,
            "t": round_s(self.t),
            "kind": self.kind.value,
            "code": self.code,
            "payload": self.payload,
        }
        if self.kind in (EventKind.WARNING, EventKind.ERROR):
            doc["weight"] = self.weight
        if self.state_digest is not None:
            doc["digest"] = self.state_digest
        return doc

    @classmethod
    def from_doc(cls, doc: dict[str, Any]) -> "SessionEvent":
        return cls(
            t=float(doc["t"]),
            kind=EventKind(doc["kind"]),
            code=str(doc["code"]),
            payload=dict(doc.get("payload") or {}),
            seq=doc.get("seq"),
            weight=doc.get("weight"),
            state_digest=doc.get("digest"),
        )


class ActionKind(str, Enum):
    TOGGLE_SPINDLE = "toggle_spindle"
    SET_SPEED = "set_speed"
    CRANK_TABLE = "crank_table"
    MOVE_QUILL = "move_quill"
    LOCK_QUILL = "lock_quill"
    INSTALL_CHUCK = "install_chuck"
    REMOVE_CHUCK = "remove_chuck"
    LOAD_TOOL = "load_tool"
    UNLOAD_TOOL = "unload_tool"
    TIGHTEN_CHUCK = "tighten_chuck"
    LOOSEN_CHUCK = "loosen_chuck"
    BRUSH_VISE = "brush_vise"
    INSERT_PARALLELS = "insert_parallels"
    PLACE_PART = "place_part"
    MALLET_TAP = "mallet_tap"
    TIGHTEN_VISE = "tighten_vise"
    LOOSEN_VISE = "loosen_vise"
    ZERO_DRO = "zero_dro"
    DEBURR = "deburr"
    RESOLVE_HAZARD = "resolve_hazard"
    ENTER_SHOP = "enter_shop"
    ACKNOWLEDGE_ERROR = "acknowledge_error"


@dataclass(frozen=True)
class Action:
    """A single operator input. Fields beyond ``kind`` are per-kind."""

    kind: ActionKind
    on: Optional[bool] = None            # toggle_spindle, lock_quill
    rpm: Optional[int] = None            # set_speed
    axis: Optional[Axis] = None          # crank_table, zero_dro
    revolutions: Optional[float] = None  # crank_table, signed handwheel turns
    delta_z_in: Optional[float] = None   # move_quill, positive is down
    duration_s: Optional[float] = None   # move_quill
    tool_id: Optional[str] = None        # load_tool
    force: Optional[str] = None          # mallet_tap: "light" | "firm"
    offset_in: Optional[float] = None    # zero_dro: reading at current position
    hole_id: Optional[str] = None        # deburr
    hazard: Optional[Hazard] = None      # resolve_hazard
    code: Optional[str] = None           # acknowledge_error

    def to_payload(self) -> dict[str, Any]:
        # Action echoes are serialized verbatim (no unit rounding) so that
        # replay re-submits exactly what the live run executed.
        doc: dict[str, Any] = {"kind": self.kind.value}
        for f in fields(self):
            if f.name == "kind":
                continue
            v = getattr(self, f.name)
            if v is None:
                continue
            doc[f.name] = v.value if isinstance(v, Enum) else v
        return doc

    @classmethod
    def from_payload(cls, doc: dict[str, Any]) -> "Action":
        data = dict(doc)
        kind = ActionKind(data.pop("kind"))
        known = {f.name for f in fields(cls)} - {"kind"}
        unknown = set(data) - known
        if unknown:
            raise ActionValidationError(sorted(unknown)[0], "unknown field")
        if "axis" in data and data["axis"] is not None:
            data["axis"] = Axis(data["axis"])
        if "hazard" in data and data["hazard"] is not None:
            data["hazard"] = Hazard(data["hazard"])
        return cls(kind=kind, **data)


class ActionValidationError(ValueError):
    """Malformed action: bad kind, missing or out-of-range parameter."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


@dataclass(frozen=True)
class MachineLimits:
    max_rpm: int = 3000
    min_rpm: int = 100
    quill_travel_in: float = 5.0
    table_travel_x_in: float = 30.0
    table_travel_y_in: float = 12.0
    dro_resolution_in: float = 0.0005
    leadscrew_in_per_rev: float = 0.2
    edge_finder_tip_radius_in: float = 0.1
    edge_finder_rpm_low: int = 600
    edge_finder_rpm_high: int = 1000
    tip_clearance_in: float = 1.0
    vise_open_gap_in: float = 4.5


@dataclass(frozen=True)
class ActionTiming:
    """Simulated seconds charged per action. The clock never reads wall time."""

    default_s: float = 1.0
    crank_s_per_rev: float = 0.5
    crank_min_s: float = 0.1


@dataclass(frozen=True)
class MachineContext:
    limits: MachineLimits
    timing: ActionTiming
    tools: dict[str, ToolRef]


@dataclass
class SpindleState:
    power: bool = False
    speed_rpm: int = 0
    quill_lock: bool = False


@dataclass
class TableState:
    x: float = 0.0
    y: float = 0.0


@dataclass
class DroState:
    x_offset: float = 0.0
    y_offset: float = 0.0


@dataclass
class ChuckState:
    installed: bool = False
    tightened: bool = False
    held_tool: Optional[ToolRef] = None


@dataclass
class ViseState:
    jaw_gap_in: float = 4.5
    brushed_clean: bool = False
    parallels_in: bool = False
    part_in: bool = False
    part_seated: bool = False
    tightened: bool = False


@dataclass
class Hole:
    id: str
    x: float
    y: float
    diameter_in: float
    depth_in: float
    overheated: bool = False
    off_speed: bool = False
    no_center_drill: bool = False

    def to_doc(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "x": round_in(self.x),
            "y": round_in(self.y),
            "diameter_in": round_in(self.diameter_in),
            "depth_in": round_in(self.depth_in),
            "overheated": self.overheated,
            "off_speed": self.off_speed,
            "no_center_drill": self.no_center_drill,
        }


@dataclass
class Spot:
    x: float
    y: float
    depth_in: float

    def to_doc(self) -> dict[str, Any]:
        return {"x": round_in(self.x), "y": round_in(self.y), "depth_in": round_in(self.depth_in)}


@dataclass
class WorkpieceState:
    length_in: float
    width_in: float
    height_in: float
    material: str
    origin_x: float
    origin_y: float
    holes: list[Hole] = field(default_factory=list)
    spots: list[Spot] = field(default_factory=list)
    burrs: set[str] = field(default_factory=set)

    def to_doc(self) -> dict[str, Any]:
        return {
            "length_in": round_in(self.length_in),
            "width_in": round_in(self.width_in),
            "height_in": round_in(self.height_in),
            "material": self.material,
            "origin_x": round_in(self.origin_x),
            "origin_y": round_in(self.origin_y),
            "holes": [h.to_doc() for h in self.holes],
            "spots": [s.to_doc() for s in self.spots],
            "burrs": sorted(self.burrs),
        }


@dataclass
class OperatorState:
    hazards: set[Hazard] = field(default_factory=set)
    in_shop: bool = False


@dataclass
class MachineState:
    spindle: SpindleState
    table: TableState
    dro: DroState
    chuck: ChuckState
    vise: ViseState
    workpiece: WorkpieceState
    operator: OperatorState
    quill_z_in: float = 0.0
    clock_s: float = 0.0

    def copy(self) -> "MachineState":
        return MachineState(
            spindle=replace(self.spindle),
            table=replace(self.table),
            dro=replace(self.dro),
            chuck=replace(self.chuck),
            vise=replace(self.vise),
            workpiece=replace(
                self.workpiece,
                holes=[replace(h) for h in self.workpiece.holes],
                spots=[replace(s) for s in self.workpiece.spots],
                burrs=set(self.workpiece.burrs),
            ),
            operator=replace(self.operator, hazards=set(self.operator.hazards)),
            quill_z_in=self.quill_z_in,
            clock_s=self.clock_s,
        )

    def to_doc(self) -> dict[str, Any]:
        return {
            "spindle": {
                "power": self.spindle.power,
                "speed_rpm": int(self.spindle.speed_rpm),
                "quill_lock": self.spindle.quill_lock,
            },
            "quill_z_in": round_in(self.quill_z_in),
            "table": {"x": round_in(self.table.x), "y": round_in(self.table.y)},
            "dro": {
                "x_offset": round_in(self.dro.x_offset),
                "y_offset": round_in(self.dro.y_offset),
            },
            "chuck": {
                "installed": self.chuck.installed,
                "tightened": self.chuck.tightened,
                "held_tool": self.chuck.held_tool.to_payload() if self.chuck.held_tool else None,
            },
            "vise": {
                "jaw_gap_in": round_in(self.vise.jaw_gap_in),
                "brushed_clean": self.vise.brushed_clean,
                "parallels_in": self.vise.parallels_in,
                "part_in": self.vise.part_in,
                "part_seated": self.vise.part_seated,
                "tightened": self.vise.tightened,
            },
            "workpiece": self.workpiece.to_doc(),
            "operator": {
                "hazards": sorted(h.value for h in self.operator.hazards),
                "in_shop": self.operator.in_shop,
            },
            "clock_s": round_s(self.clock_s),
        }


def state_hash(state: MachineState) -> str:
    """64-bit digest over the canonical serialization of the machine state."""
    return digest(state.to_doc())


def check_invariants(state: MachineState, limits: MachineLimits) -> list[str]:
    """Return human-readable violations; empty means the state is sound."""
    bad: list[str] = []
    if not state.spindle.power and state.spindle.speed_rpm != 0:
        bad.append("speed_rpm must be 0 while spindle power is off")
    if not 0 <= state.spindle.speed_rpm <= limits.max_rpm:
        bad.append("speed_rpm outside [0, max_rpm]")
    if not -1e-9 <= state.quill_z_in <= limits.quill_travel_in + 1e-9:
        bad.append("quill_z outside travel")
    if not -1e-9 <= state.table.x <= limits.table_travel_x_in + 1e-9:
        bad.append("table.x outside travel")
    if not -1e-9 <= state.table.y <= limits.table_travel_y_in + 1e-9:
        bad.append("table.y outside travel")
    if state.chuck.held_tool is not None and not state.chuck.installed:
        bad.append("held_tool without chuck installed")
    if state.vise.part_seated and not state.vise.parallels_in:
        bad.append("part_seated implies parallels_in")
    if state.vise.part_seated and not state.vise.part_in:
        bad.append("part_seated implies part_in")
    if state.operator.in_shop and state.operator.hazards:
        bad.append("in_shop implies no outstanding hazards")
    for hole in state.workpiece.holes:
        if hole.diameter_in <= 0 or hole.depth_in <= 0:
            bad.append(f"hole {hole.id} has non-positive size")
    known = {h.id for h in state.workpiece.holes}
    if not state.workpiece.burrs <= known:
        bad.append("burr id without matching hole")
    return bad


def new_state(
    *,
    workpiece: WorkpieceState,
    hazards: set[Hazard],
    limits: MachineLimits,
    table_x: float,
    table_y: float,
) -> MachineState:
    return MachineState(
        spindle=SpindleState(),
        table=TableState(x=table_x, y=table_y),
        dro=DroState(),
        chuck=ChuckState(),
        vise=ViseState(jaw_gap_in=limits.vise_open_gap_in),
        workpiece=workpiece,
        operator=OperatorState(hazards=set(hazards), in_shop=False),
        quill_z_in=0.0,
        clock_s=0.0,
    )


# ---------------------------------------------------------------------------
# Geometry queries


def table_after_crank(position_in: float, revolutions: float, travel_in: float,
                      lead_in_per_rev: float = 0.2) -> tuple[float, bool]:
    """New axis position after turning the handwheel, plus a clamped flag.

    Position arithmetic is a single multiply-add per crank so repeated small
    cranks sum without drift.
    """
    target = position_in + revolutions * lead_in_per_rev
    if target < 0.0:
        return 0.0, True
    if target > travel_in:
        return travel_in, True
    return target, False


def dro_reading(state: MachineState, axis: Axis, limits: MachineLimits) -> float:
    """Displayed axis value: position minus zero offset, on the DRO grid.

    Rounding is to the nearest resolution count, half to even, matching a
    display that cannot show between counts.
    """
    if axis is Axis.X:
        raw = state.table.x - state.dro.x_offset
    else:
        raw = state.table.y - state.dro.y_offset
    res = limits.dro_resolution_in
    return round_in(round(raw / res) * res)


@dataclass(frozen=True)
class EdgeContact:
    axis: Axis
    side: str          # left | right | front | back
    distance_in: float  # |spindle axis - edge plane|
    exact: bool        # distance within one DRO count of the tip radius
    inside: bool       # spindle axis is over the part


def _axis_contact(state: MachineState, axis: Axis, limits: MachineLimits) -> Optional[EdgeContact]:
    wp = state.workpiece
    r = limits.edge_finder_tip_radius_in
    eps = 1e-9
    if axis is Axis.X:
        pos, lo, hi = state.table.x, wp.origin_x, wp.origin_x + wp.length_in
        cross_lo, cross_hi = wp.origin_y, wp.origin_y + wp.width_in
        cross = state.table.y
        sides = ("left", "right")
    else:
        pos, lo, hi = state.table.y, wp.origin_y, wp.origin_y + wp.width_in
        cross_lo, cross_hi = wp.origin_x, wp.origin_x + wp.length_in
        cross = state.table.x
        sides = ("front", "back")
    # The finder can only touch an x edge while it overlaps the part in y,
    # and vice versa.
    if not (cross_lo - eps <= cross <= cross_hi + eps):
        return None
    d_lo, d_hi = abs(pos - lo), abs(pos - hi)
    if d_lo <= d_hi:
        d, side, edge = d_lo, sides[0], lo
    else:
        d, side, edge = d_hi, sides[1], hi
    if d > r + eps:
        return None
    exact = (r - d) <= limits.dro_resolution_in + eps
    inside = lo - eps <= pos <= hi + eps
    return EdgeContact(axis=axis, side=side, distance_in=d, exact=exact, inside=inside)


def geometric_edge_contacts(state: MachineState, limits: MachineLimits) -> list[EdgeContact]:
    """Contacts implied by geometry alone, ignoring spindle speed."""
    if state.chuck.held_tool is None or state.chuck.held_tool.kind is not ToolKind.EDGE_FINDER:
        return []
    if not state.chuck.tightened:
        return []
    if not state.vise.part_in:
        return []
    out = []
    for axis in (Axis.X, Axis.Y):
        c = _axis_contact(state, axis, limits)
        if c is not None:
            out.append(c)
    return out


def detect_edge_contact(state: MachineState, limits: MachineLimits,
                        axis: Optional[Axis] = None) -> Optional[EdgeContact]:
    """Contact as the operator would perceive it.

    The kick cue needs rotation in the edge-finder band; outside the band
    (including spindle off) no contact is reported.
    """
    if not state.spindle.power:
        return None
    rpm = state.spindle.speed_rpm
    if not limits.edge_finder_rpm_low <= rpm <= limits.edge_finder_rpm_high:
        return None
    contacts = geometric_edge_contacts(state, limits)
    if axis is not None:
        contacts = [c for c in contacts if c.axis is axis]
    if not contacts:
        return None
    return min(contacts, key=lambda c: (c.distance_in, c.axis.value))


def zero_axis(state: MachineState, axis: Axis, offset_in: float) -> None:
    """Set the stored zero so the DRO reads ``offset_in`` here, in place."""
    if axis is Axis.X:
        state.dro.x_offset = state.table.x - offset_in
    else:
        state.dro.y_offset = state.table.y - offset_in


def spindle_over_part(state: MachineState) -> bool:
    wp = state.workpiece
    eps = 1e-9
    return (wp.origin_x - eps <= state.table.x <= wp.origin_x + wp.length_in + eps
            and wp.origin_y - eps <= state.table.y <= wp.origin_y + wp.width_in + eps)


def tip_depth_in(state: MachineState, limits: MachineLimits) -> float:
    """Depth of the tool tip below the part top face; negative is above."""
    return state.quill_z_in - limits.tip_clearance_in


def material_depth_at(state: MachineState, x: float, y: float, match_tol_in: float) -> float:
    """Depth already removed at a location, from holes and spots."""
    best = 0.0
    for h in state.workpiece.holes:
        if math.hypot(h.x - x, h.y - y) <= match_tol_in:
            best = max(best, h.depth_in)
    for s in state.workpiece.spots:
        if math.hypot(s.x - x, s.y - y) <= match_tol_in:
            best = max(best, s.depth_in)
    return best


# ---------------------------------------------------------------------------
# Action validation


_REQUIRED_FIELDS: dict[ActionKind, tuple[str, ...]] = {
    ActionKind.TOGGLE_SPINDLE: ("on",),
    ActionKind.SET_SPEED: ("rpm",),
    ActionKind.CRANK_TABLE: ("axis", "revolutions"),
    ActionKind.MOVE_QUILL: ("delta_z_in", "duration_s"),
    ActionKind.LOCK_QUILL: ("on",),
    ActionKind.LOAD_TOOL: ("tool_id",),
    ActionKind.MALLET_TAP: ("force",),
    ActionKind.ZERO_DRO: ("axis", "offset_in"),
    ActionKind.DEBURR: ("hole_id",),
    ActionKind.RESOLVE_HAZARD: ("hazard",),
    ActionKind.ACKNOWLEDGE_ERROR: ("code",),
}


def validate_action(action: Action, state: MachineState, ctx: MachineContext) -> None:
    """Reject malformed actions. State-dependent legality is not checked here."""
    for name in _REQUIRED_FIELDS.get(action.kind, ()):
        if getattr(action, name) is None:
            raise ActionValidationError(f"action.{name}", "required for this action kind")
    if action.kind is ActionKind.SET_SPEED:
        rpm = action.rpm
        if not isinstance(rpm, int) or isinstance(rpm, bool):
            raise ActionValidationError("action.rpm", "must be an integer")
        if not 0 <= rpm <= ctx.limits.max_rpm:
            raise ActionValidationError("action.rpm", f"must be within [0, {ctx.limits.max_rpm}]")
    if action.kind is ActionKind.CRANK_TABLE:
        if not math.isfinite(action.revolutions):
            raise ActionValidationError("action.revolutions", "must be finite")
        if abs(action.revolutions) > 1000:
            raise ActionValidationError("action.revolutions", "unreasonably large crank")
    if action.kind is ActionKind.MOVE_QUILL:
        if not math.isfinite(action.delta_z_in):
            raise ActionValidationError("action.delta_z_in", "must be finite")
        if action.duration_s is None or not math.isfinite(action.duration_s) or action.duration_s <= 0:
            raise ActionValidationError("action.duration_s", "must be a positive duration")
    if action.kind is ActionKind.LOAD_TOOL:
        tool = ctx.tools.get(action.tool_id or "")
        if tool is None:
            raise ActionValidationError("action.tool_id", "unknown tool")
        if tool.kind not in CHUCKABLE_KINDS:
            raise ActionValidationError("action.tool_id", "hand tools cannot be chucked")
    if action.kind is ActionKind.MALLET_TAP and action.force not in ("light", "firm"):
        raise ActionValidationError("action.force", "must be 'light' or 'firm'")
    if action.kind is ActionKind.ZERO_DRO and not math.isfinite(action.offset_in):
        raise ActionValidationError("action.offset_in", "must be finite")
    if action.kind is ActionKind.DEBURR:
        if all(h.id != action.hole_id for h in state.workpiece.holes):
            raise ActionValidationError("action.hole_id", "no such hole")


# ---------------------------------------------------------------------------
# Transition function


def action_duration_s(action: Action, timing: ActionTiming) -> float:
    if action.kind is ActionKind.MOVE_QUILL:
        return float(action.duration_s)
    if action.kind is ActionKind.CRANK_TABLE:
        return max(abs(action.revolutions) * timing.crank_s_per_rev, timing.crank_min_s)
    return timing.default_s


def _event(t: float, kind: EventKind, code: str, payload: dict[str, Any]) -> SessionEvent:
    return SessionEvent(t=t, kind=kind, code=code, payload=payload)


def apply_action(state: MachineState, action: Action, ctx: MachineContext
                 ) -> tuple[MachineState, list[SessionEvent]]:
    """Apply a permitted action to the machine.

    Returns the successor state and transition events (state_change facts
    plus any warnings that are properties of the motion itself, such as a
    travel-limit clamp). Cutting, heat and sound are integrated by the
    physics layer on top of the returned state.
    """
    limits = ctx.limits
    s = state.copy()
    t0 = s.clock_s
    t1 = t0 + action_duration_s(action, ctx.timing)
    s.clock_s = t1
    events: list[SessionEvent] = []
    note: dict[str, Any] = {}
    k = action.kind

    if k is ActionKind.TOGGLE_SPINDLE:
        s.spindle.power = bool(action.on)
        if not s.spindle.power:
            s.spindle.speed_rpm = 0

    elif k is ActionKind.SET_SPEED:
        # The dial commands the running spindle; unpowered it commands
        # nothing, which keeps speed zero whenever power is off.
        s.spindle.speed_rpm = int(action.rpm) if s.spindle.power else 0

    elif k is ActionKind.CRANK_TABLE:
        before = geometric_edge_contacts(s, limits)
        travel = limits.table_travel_x_in if action.axis is Axis.X else limits.table_travel_y_in
        pos = s.table.x if action.axis is Axis.X else s.table.y
        new_pos, clamped = table_after_crank(pos, action.revolutions, travel,
                                             limits.leadscrew_in_per_rev)
        if action.axis is Axis.X:
            s.table.x = new_pos
        else:
            s.table.y = new_pos
        if clamped:
            events.append(_event(t1, EventKind.WARNING, "TRAVEL_LIMIT",
                                 {"axis": action.axis.value, "position_in": round_in(new_pos)}))
        events.extend(_edge_transition_events(before, s, limits, t1))
        note["position_in"] = round_in(new_pos)

    elif k is ActionKind.MOVE_QUILL:
        target = s.quill_z_in + action.delta_z_in
        clamped_target = min(max(target, 0.0), limits.quill_travel_in)
        if clamped_target != target:
            events.append(_event(t1, EventKind.WARNING, "TRAVEL_LIMIT",
                                 {"axis": "z", "position_in": round_in(clamped_target)}))
        s.quill_z_in = clamped_target
        note["quill_z_in"] = round_in(clamped_target)

    elif k is ActionKind.LOCK_QUILL:
        s.spindle.quill_lock = bool(action.on)

    elif k is ActionKind.INSTALL_CHUCK:
        if not s.chuck.installed:
            s.chuck.installed = True
            s.chuck.tightened = False
            s.chuck.held_tool = None

    elif k is ActionKind.REMOVE_CHUCK:
        if s.chuck.installed and s.chuck.held_tool is None:
            s.chuck.installed = False
            s.chuck.tightened = False

    elif k is ActionKind.LOAD_TOOL:
        tool = ctx.tools[action.tool_id]
        if s.chuck.installed and s.chuck.held_tool is None and not s.chuck.tightened:
            s.chuck.held_tool = tool
            note["tool"] = tool.to_payload()

    elif k is ActionKind.UNLOAD_TOOL:
        if s.chuck.held_tool is not None and not s.chuck.tightened:
            note["tool"] = s.chuck.held_tool.to_payload()
            s.chuck.held_tool = None

    elif k is ActionKind.TIGHTEN_CHUCK:
        if s.chuck.installed:
            s.chuck.tightened = True

    elif k is ActionKind.LOOSEN_CHUCK:
        if s.chuck.installed:
            s.chuck.tightened = False

    elif k is ActionKind.BRUSH_VISE:
        s.vise.brushed_clean = True

    elif k is ActionKind.INSERT_PARALLELS:
        if not s.vise.part_in:
            s.vise.parallels_in = True

    elif k is ActionKind.PLACE_PART:
        if not s.vise.part_in and s.vise.jaw_gap_in > s.workpiece.width_in:
            s.vise.part_in = True
            s.vise.part_seated = False

    elif k is ActionKind.MALLET_TAP:
        # A firm tap only seats the part against the parallels while the jaws
        # are snug but not yet torqued down.
        seated = (action.force == "firm" and s.vise.part_in and s.vise.parallels_in
                  and not s.vise.tightened
                  and abs(s.vise.jaw_gap_in - s.workpiece.width_in) < 1e-9)
        if seated:
            s.vise.part_seated = True
        note["seated"] = seated

    elif k is ActionKind.TIGHTEN_VISE:
        if not s.vise.part_in:
            s.vise.jaw_gap_in = 0.0
            s.vise.tightened = True
        elif s.vise.jaw_gap_in > s.workpiece.width_in:
            # First crank brings the jaws into contact with the part.
            s.vise.jaw_gap_in = s.workpiece.width_in
        else:
            s.vise.tightened = True
        note["jaw_gap_in"] = round_in(s.vise.jaw_gap_in)
        note["tightened"] = s.vise.tightened

    elif k is ActionKind.LOOSEN_VISE:
        # Opening the jaws releases the part entirely; setup starts over.
        s.vise.tightened = False
        s.vise.part_seated = False
        s.vise.part_in = False
        s.vise.jaw_gap_in = limits.vise_open_gap_in

    elif k is ActionKind.ZERO_DRO:
        contact = detect_edge_contact(s, limits, axis=action.axis)
        zero_axis(s, action.axis, action.offset_in)
        note.update({
            "axis": action.axis.value,
            "reading": dro_reading(s, action.axis, limits),
            "at_edge": contact is not None,
            "exact": bool(contact and contact.exact),
        })
        if contact is not None:
            note["side"] = contact.side
        events.append(_event(t1, EventKind.STATE_CHANGE, "dro_zeroed", dict(note)))

    elif k is ActionKind.DEBURR:
        if action.hole_id in s.workpiece.burrs:
            s.workpiece.burrs.discard(action.hole_id)
            note["deburred"] = action.hole_id

    elif k is ActionKind.RESOLVE_HAZARD:
        s.operator.hazards.discard(action.hazard)

    elif k is ActionKind.ENTER_SHOP:
        # The door policy backstops the permission layer: nobody stands at
        # the machine with open hazards, so the type invariant holds even
        # for callers driving transitions directly.
        if not s.operator.hazards:
            s.operator.in_shop = True

    elif k is ActionKind.ACKNOWLEDGE_ERROR:
        # State side of an acknowledgment is nothing; session layer clears
        # the halt and records the code.
        pass

    else:  # pragma: no cover - enum is closed
        raise ActionValidationError("action.kind", f"unhandled kind {k}")

    payload = {"action": action.to_payload()}
    payload.update(note)
    events.insert(0, _event(t0, EventKind.STATE_CHANGE, k.value, payload))
    return s, events


def _edge_transition_events(before: list[EdgeContact], after_state: MachineState,
                            limits: MachineLimits, t: float) -> list[SessionEvent]:
    """Events for newly reached edge contacts after a table move."""
    after = geometric_edge_contacts(after_state, limits)
    prev_axes = {c.axis for c in before}
    events: list[SessionEvent] = []
    rpm = after_state.spindle.speed_rpm
    powered = after_state.spindle.power
    for c in after:
        if c.axis in prev_axes:
            continue
        payload = {
            "axis": c.axis.value,
            "side": c.side,
            "exact": c.exact,
            "distance_in": round_in(c.distance_in),
        }
        if not powered:
            continue  # no rotation, no kick, nothing observed
        if rpm > limits.edge_finder_rpm_high:
            events.append(SessionEvent(t=t, kind=EventKind.WARNING,
                                       code="EDGEFINDER_OVERSPEED", payload=payload))
        elif rpm < limits.edge_finder_rpm_low:
            events.append(SessionEvent(t=t, kind=EventKind.WARNING,
                                       code="EDGEFINDER_SLOW", payload=payload))
        else:
            events.append(SessionEvent(t=t, kind=EventKind.STATE_CHANGE,
                                       code="edge_contact", payload=payload))
    return events

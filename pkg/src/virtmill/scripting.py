"""Action scripts: a reference walkthrough generator plus file helpers.

The generator emits a complete, warning-free run of a scenario for any
chosen linearization of its task graph. It mirrors what a careful operator
would do, deriving speeds and feeds from the scenario itself (mid-band
spindle speeds, feeds under the grind threshold, pecks at half the
watchdog allowance) so that changing scenario numbers keeps the script
clean without touching this code.

Script files are JSON Lines, one action payload per line.
"""
from __future__ import annotations

import json
from typing import Any, Optional

from .machine import Action, ActionKind, Axis, ToolKind
from .physics import recommended_feed_ipm, rpm_band
from .scenario import Scenario


class ScriptError(ValueError):
    pass


def load_script(path: str) -> list[dict[str, Any]]:
    actions: list[dict[str, Any]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw or raw.startswith("#"):
                continue
            try:
                doc = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ScriptError(f"line {line_no}: not valid JSON: {exc}") from None
            if not isinstance(doc, dict) or "kind" not in doc:
                raise ScriptError(f"line {line_no}: expected an action object with a kind")
            actions.append(doc)
    return actions


def write_script(actions: list[Action], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for action in actions:
            fh.write(json.dumps(action.to_payload(), sort_keys=True) + "\n")


def _tool_by_kind(scenario: Scenario, kind: ToolKind,
                  diameter_in: Optional[float] = None) -> str:
    for tool in scenario.tools.values():
        if tool.kind is kind:
            if diameter_in is None or abs(tool.diameter_in - diameter_in) < 1e-9:
                return tool.id
    raise ScriptError(f"scenario has no {kind.value} tool"
                      + (f" of diameter {diameter_in}" if diameter_in else ""))


def _mid_band_rpm(scenario: Scenario, diameter_in: float) -> int:
    lo, hi = rpm_band(diameter_in, scenario.material, scenario.limits, scenario.physics)
    return int((lo + hi) / 2)


class _Walkthrough:
    """Tracks just enough machine context to emit consistent actions."""

    def __init__(self, scenario: Scenario):
        self.sc = scenario
        self.actions: list[Action] = []
        self.x = scenario.table_start_x
        self.y = scenario.table_start_y
        self.z = 0.0
        self.powered = False
        self.tool: Optional[str] = None
        bp = scenario.blueprint.holes[0]
        self.edge_finder = _tool_by_kind(scenario, ToolKind.EDGE_FINDER)
        self.center_drill = _tool_by_kind(scenario, ToolKind.CENTER_DRILL)
        self.twist_drill = _tool_by_kind(scenario, ToolKind.TWIST_DRILL, bp.diameter_in)
        lim = scenario.limits
        self.edge_rpm = int((lim.edge_finder_rpm_low + lim.edge_finder_rpm_high) / 2)
        self.spot_rpm = _mid_band_rpm(scenario, scenario.tools[self.center_drill].diameter_in)
        self.drill_rpm = _mid_band_rpm(scenario, bp.diameter_in)

    def emit(self, kind: ActionKind, **kw: Any) -> None:
        self.actions.append(Action(kind=kind, **kw))

    # -- motion helpers -----------------------------------------------------

    def crank_to(self, axis: Axis, target: float) -> None:
        # Track positions with the machine's own accumulation arithmetic so a
        # final move back to a limit never overshoots by a rounding residue.
        lead = self.sc.limits.leadscrew_in_per_rev
        pos = self.x if axis is Axis.X else self.y
        revs = (target - pos) / lead
        if abs(revs) < 1e-12:
            return
        self.emit(ActionKind.CRANK_TABLE, axis=axis, revolutions=revs)
        if axis is Axis.X:
            self.x = pos + revs * lead
        else:
            self.y = pos + revs * lead

    def quill_to(self, z: float, feed_ipm: float) -> None:
        delta = z - self.z
        if abs(delta) < 1e-12:
            return
        duration = abs(delta) * 60.0 / feed_ipm
        self.emit(ActionKind.MOVE_QUILL, delta_z_in=delta, duration_s=round(duration, 3))
        self.z = self.z + delta

    def spindle(self, on: bool) -> None:
        if self.powered != on:
            self.emit(ActionKind.TOGGLE_SPINDLE, on=on)
            self.powered = on

    def swap_tool(self, tool_id: str) -> None:
        self.spindle(False)
        if self.tool == tool_id:
            return
        if self.tool is not None:
            self.emit(ActionKind.LOOSEN_CHUCK)
            self.emit(ActionKind.UNLOAD_TOOL)
        self.emit(ActionKind.LOAD_TOOL, tool_id=tool_id)
        self.emit(ActionKind.TIGHTEN_CHUCK)
        self.tool = tool_id

    # -- per-task chunks ----------------------------------------------------

    def safety_prep(self) -> None:
        for hazard in sorted(self.sc.hazards, key=lambda h: h.value):
            self.emit(ActionKind.RESOLVE_HAZARD, hazard=hazard)
        self.emit(ActionKind.ENTER_SHOP)

    def vise_setup(self) -> None:
        self.emit(ActionKind.BRUSH_VISE)
        self.emit(ActionKind.INSERT_PARALLELS)
        self.emit(ActionKind.PLACE_PART)
        self.emit(ActionKind.TIGHTEN_VISE)   # snug the jaws onto the part
        self.emit(ActionKind.MALLET_TAP, force="firm")
        self.emit(ActionKind.TIGHTEN_VISE)   # full clamp

    def chuck_setup(self) -> None:
        self.emit(ActionKind.INSTALL_CHUCK)
        self.emit(ActionKind.LOAD_TOOL, tool_id=self.edge_finder)
        self.emit(ActionKind.TIGHTEN_CHUCK)
        self.tool = self.edge_finder

    def _edge_find(self, axis: Axis) -> None:
        # The tip radius is the offset between touch-off and the true edge:
        # approach from over the part, stop one radius inside, and tell the
        # readout it is sitting at exactly that radius.
        if not self.powered:
            self.spindle(True)
            self.emit(ActionKind.SET_SPEED, rpm=self.edge_rpm)
        r = self.sc.limits.edge_finder_tip_radius_in
        wp = self.sc.workpiece
        target = (wp.origin_x if axis is Axis.X else wp.origin_y) + r
        self.crank_to(axis, target)
        self.emit(ActionKind.ZERO_DRO, axis=axis, offset_in=r)

    def edge_find_x(self) -> None:
        self._edge_find(Axis.X)

    def edge_find_y(self) -> None:
        self._edge_find(Axis.Y)

    def spot_hole(self) -> None:
        self.swap_tool(self.center_drill)
        ax, ay = self.sc.blueprint_hole_abs(0)
        self.crank_to(Axis.X, ax)
        self.crank_to(Axis.Y, ay)
        self.spindle(True)
        self.emit(ActionKind.SET_SPEED, rpm=self.spot_rpm)
        p = self.sc.physics
        clearance = self.sc.limits.tip_clearance_in
        spot_depth = (p.min_spot_depth_in + p.spot_depth_warn_in) / 2.0
        rec = recommended_feed_ipm(self.sc.tools[self.center_drill].diameter_in,
                                   self.spot_rpm, p)
        self.quill_to(clearance - 0.02, 30.0)              # air approach
        self.quill_to(clearance + spot_depth, 0.8 * rec)   # gentle cut
        self.quill_to(0.0, 30.0)

    def spindle_on(self) -> None:
        self.swap_tool(self.twist_drill)
        self.spindle(True)

    def set_speed(self) -> None:
        self.emit(ActionKind.SET_SPEED, rpm=self.drill_rpm)

    def quill_drill(self) -> None:
        bp = self.sc.blueprint.holes[0]
        p = self.sc.physics
        clearance = self.sc.limits.tip_clearance_in
        step = p.max_plunge_diameters * bp.diameter_in / 2.0
        clear_z = clearance - 0.1
        rec = recommended_feed_ipm(bp.diameter_in, self.drill_rpm, p)
        feed = min(12.0, 1.8 * rec)
        depth = (p.min_spot_depth_in + p.spot_depth_warn_in) / 2.0  # the spot
        while depth < bp.depth_in - 1e-9:
            depth = min(depth + step, bp.depth_in)
            self.quill_to(clearance + depth, feed)
            self.quill_to(clear_z, 6.0)  # slow lift buys cooling time
        self.quill_to(0.0, 30.0)

    def spindle_off(self) -> None:
        self.spindle(False)

    def deburr_hole(self) -> None:
        self.emit(ActionKind.DEBURR, hole_id="hole_1")


def canonical_script(scenario: Scenario, order: Optional[list[str]] = None) -> list[Action]:
    """A clean full run, performing task chunks in ``order``.

    ``order`` must be a linearization of the scenario's task graph; it
    defaults to the declared task order.
    """
    if order is None:
        order = scenario.task_ids()
    if sorted(order) != sorted(scenario.task_ids()):
        raise ScriptError("order must contain every task exactly once")
    walk = _Walkthrough(scenario)
    for task_id in order:
        chunk = getattr(walk, task_id, None)
        if chunk is None:
            raise ScriptError(f"no walkthrough chunk for task {task_id!r}")
        chunk()
    return walk.actions

"""Cutting physics: tool heat, spindle speed bands, material removal, sound.

Heat is a single scalar per mounted tool. While the tool is extending the
bottom of a cut it gains heat at a constant rate

    dH/dt = heat_coeff * rpm * feed_ipm * diameter_in

(feed in inches per minute, t in seconds), and at every other moment it
cools exponentially with time constant ``tau_cool_s``. Because the gain is
linear in time within a constant-feed segment, threshold crossings have
exact closed-form times; no sub-stepping is needed and replay cannot drift.

Integrating the gain over a cut of length L shows the total is
``60 * heat_coeff * rpm * diameter_in * L`` regardless of feed: plunging
slower does not reduce total heat, only spreads it out, so the way to stay
cool is pecking, which buys cooling time between engagements.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Any, Optional

from .canonical import round_in, round_s
from .machine import (
    CUTTING_KINDS,
    Action,
    ActionKind,
    EventKind,
    Hole,
    MachineLimits,
    MachineState,
    SessionEvent,
    Spot,
    ToolKind,
    material_depth_at,
    spindle_over_part,
    tip_depth_in,
)


@dataclass(frozen=True)
class MaterialRef:
    name: str
    sfm: float          # recommended surface speed, surface feet per minute
    heat_coeff: float   # heat units per (rpm * ipm * inch * second)


@dataclass(frozen=True)
class PhysicsParams:
    h_max: float = 100.0
    unlatch_fraction: float = 0.5
    tau_cool_s: float = 5.0
    breakthrough_in: float = 0.2
    match_tol_in: float = 0.02
    max_plunge_diameters: float = 2.0
    spot_depth_warn_in: float = 0.15
    min_spot_depth_in: float = 0.05
    band_low_fraction: float = 0.75
    band_high_fraction: float = 1.25
    ipr_per_diameter: float = 0.01
    grind_feed_factor: float = 2.0


@dataclass
class HeatState:
    h: float = 0.0
    latched: bool = False
    depth_since_clear_in: float = 0.0
    peck_warned: bool = False

    def copy(self) -> "HeatState":
        return replace(self)

    def to_doc(self) -> dict[str, Any]:
        return {
            "h": round(self.h, 6),
            "latched": self.latched,
            "depth_since_clear_in": round_in(self.depth_since_clear_in),
        }


@dataclass(frozen=True)
class SoundDescriptor:
    mode: str   # idle | normal_cut | grind
    pitch: float

    def to_payload(self) -> dict[str, Any]:
        return {"mode": self.mode, "pitch": self.pitch}


IDLE_SOUND = SoundDescriptor(mode="idle", pitch=0.0)


def recommended_rpm(diameter_in: float, material: MaterialRef, limits: MachineLimits) -> float:
    """Speed for the surface-speed rule rpm = 12*SFM/(pi*D), clipped to the machine."""
    if diameter_in <= 0:
        return float(limits.max_rpm)
    raw = 12.0 * material.sfm / (math.pi * diameter_in)
    return min(max(raw, float(limits.min_rpm)), float(limits.max_rpm))


def rpm_band(diameter_in: float, material: MaterialRef, limits: MachineLimits,
             params: PhysicsParams) -> tuple[float, float]:
    rec = recommended_rpm(diameter_in, material, limits)
    lo = params.band_low_fraction * rec
    hi = min(params.band_high_fraction * rec, float(limits.max_rpm))
    return lo, hi


def recommended_feed_ipm(diameter_in: float, rpm: float, params: PhysicsParams) -> float:
    """Chip-load rule: inches per revolution proportional to diameter."""
    return params.ipr_per_diameter * diameter_in * rpm


def heat_gain_rate(rpm: float, feed_ipm: float, diameter_in: float,
                   material: MaterialRef) -> float:
    return material.heat_coeff * rpm * feed_ipm * diameter_in


def heat_decay(h: float, dt_s: float, params: PhysicsParams) -> float:
    if dt_s <= 0:
        return h
    return h * math.exp(-dt_s / params.tau_cool_s)


@dataclass
class CutOutcome:
    """What one action did at the cutting edge, for sound and flags."""

    had_cut: bool = False
    off_band: bool = False
    feed_ipm: float = 0.0
    rec_feed_ipm: float = 0.0
    hole_id: Optional[str] = None


@dataclass(frozen=True)
class CutParams:
    rpm: int
    feed_ipm: float
    diameter_in: float


def engagement(state: MachineState, limits: MachineLimits,
               feed_ipm: float = 0.0) -> Optional[CutParams]:
    """Cutting parameters if the tool is in the work right now, else None.

    Feed is a property of the move in progress, not of the state, so callers
    mid-action pass the active plunge rate; a static query reports 0.
    """
    tool = state.chuck.held_tool
    if tool is None or tool.kind not in CUTTING_KINDS:
        return None
    if not (state.chuck.installed and state.chuck.tightened):
        return None
    if not state.spindle.power or state.spindle.speed_rpm <= 0:
        return None
    if not (spindle_over_part(state) and state.vise.part_in):
        return None
    if tip_depth_in(state, limits) <= 0.0:
        return None
    return CutParams(
        rpm=state.spindle.speed_rpm,
        feed_ipm=feed_ipm,
        diameter_in=tool.diameter_in or 0.0,
    )


def sound_for(state: MachineState, cut: CutOutcome, limits: MachineLimits,
              params: PhysicsParams) -> SoundDescriptor:
    rpm = state.spindle.speed_rpm if state.spindle.power else 0
    if rpm <= 0:
        return IDLE_SOUND
    pitch = round(rpm / limits.max_rpm, 6)
    if cut.had_cut:
        grinding = cut.off_band or (
            cut.rec_feed_ipm > 0 and cut.feed_ipm > params.grind_feed_factor * cut.rec_feed_ipm
        )
        if grinding:
            return SoundDescriptor(mode="grind", pitch=pitch)
    # A freely spinning spindle is audible too; only a stopped one is idle.
    return SoundDescriptor(mode="normal_cut", pitch=pitch)


def _find_hole(state: MachineState, x: float, y: float, tol: float) -> Optional[Hole]:
    for h in state.workpiece.holes:
        if math.hypot(h.x - x, h.y - y) <= tol:
            return h
    return None


def _find_spot(state: MachineState, x: float, y: float, tol: float) -> Optional[Spot]:
    for s in state.workpiece.spots:
        if math.hypot(s.x - x, s.y - y) <= tol:
            return s
    return None


def integrate(
    before: MachineState,
    after: MachineState,
    action: Action,
    heat: HeatState,
    material: MaterialRef,
    params: PhysicsParams,
    limits: MachineLimits,
) -> tuple[HeatState, list[SessionEvent], CutOutcome]:
    """Advance heat and material over one applied action.

    ``after`` is the machine state produced by the transition function; its
    workpiece is updated in place with any material removed. Returned events
    carry exact (interpolated) times within [before.clock_s, after.clock_s].
    """
    t0, t1 = before.clock_s, after.clock_s
    hs = heat.copy()
    events: list[SessionEvent] = []
    cut = CutOutcome()

    # Mounting or removing a tool swaps in cold steel.
    if action.kind in (ActionKind.LOAD_TOOL, ActionKind.UNLOAD_TOOL):
        return HeatState(), events, cut

    segment = _cut_segment(before, after, action, params, limits)
    if segment is None:
        hs.h = heat_decay(hs.h, t1 - t0, params)
    else:
        t_cs, t_ce, cut_from, cut_to, feed_ipm = segment
        tool = after.chuck.held_tool
        d = tool.diameter_in
        rpm = after.spindle.speed_rpm
        x, y = after.table.x, after.table.y

        cut.had_cut = True
        cut.feed_ipm = feed_ipm
        cut.rec_feed_ipm = recommended_feed_ipm(d, rpm, params)
        lo, hi = rpm_band(d, material, limits, params)
        cut.off_band = not (lo <= rpm <= hi)

        hs.h = heat_decay(hs.h, t_cs - t0, params)
        _maybe_unlatch(hs, params)

        if cut.off_band:
            events.append(SessionEvent(
                t=t_cs, kind=EventKind.WARNING, code="BAD_SPINDLE_SPEED",
                payload={"rpm": int(rpm), "band_lo": round(lo, 1), "band_hi": round(hi, 1),
                         "diameter_in": round_in(d)}))

        rate = heat_gain_rate(rpm, feed_ipm, d, material)
        plunge_rate = feed_ipm / 60.0  # inches per second
        cut_len = cut_to - cut_from

        # Pecking watchdog: warn once per engagement when the uncleared
        # depth passes the allowance for this drill.
        dsc_limit = params.max_plunge_diameters * d
        if not hs.peck_warned and hs.depth_since_clear_in + cut_len > dsc_limit:
            need = dsc_limit - hs.depth_since_clear_in
            t_np = t_cs + max(need, 0.0) / plunge_rate
            events.append(SessionEvent(
                t=t_np, kind=EventKind.WARNING, code="NO_PECK",
                payload={"depth_since_clear_in": round_in(dsc_limit),
                         "limit_in": round_in(dsc_limit)}))
            hs.peck_warned = True

        h_end = hs.h + rate * (t_ce - t_cs)
        overheated_here = False
        if not hs.latched and hs.h < params.h_max <= h_end and rate > 0:
            t_cross = t_cs + (params.h_max - hs.h) / rate
            dsc_at_cross = hs.depth_since_clear_in + plunge_rate * (t_cross - t_cs)
            cause = "no_peck" if dsc_at_cross > dsc_limit else "sustained_cut"
            events.append(SessionEvent(
                t=t_cross, kind=EventKind.ERROR, code="OVERHEAT",
                payload={"h": round(params.h_max, 1), "cause": cause,
                         "rpm": int(rpm), "diameter_in": round_in(d)}))
            hs.latched = True
            overheated_here = True
        hs.h = h_end
        hs.depth_since_clear_in += cut_len

        _remove_material(after, tool.kind, x, y, cut_from, cut_to, d,
                         t_cs, plunge_rate, params, cut, events,
                         overheated=overheated_here, off_band=cut.off_band)

        hs.h = heat_decay(hs.h, t1 - t_ce, params)

    _maybe_unlatch(hs, params)

    # Fully retracting out of the part clears chips and re-arms the
    # pecking watchdog.
    if tip_depth_in(after, limits) <= 0.0:
        hs.depth_since_clear_in = 0.0
        hs.peck_warned = False

    return hs, events, cut


def _maybe_unlatch(hs: HeatState, params: PhysicsParams) -> None:
    if hs.latched and hs.h < params.unlatch_fraction * params.h_max:
        hs.latched = False


def _cut_segment(before: MachineState, after: MachineState, action: Action,
                 params: PhysicsParams, limits: MachineLimits
                 ) -> Optional[tuple[float, float, float, float, float]]:
    """Times and depths over which this action extends a cut, or None.

    Returns (t_cut_start, t_cut_end, depth_from, depth_to, feed_ipm).
    """
    if action.kind is not ActionKind.MOVE_QUILL:
        return None
    tool = after.chuck.held_tool
    if tool is None or tool.kind not in (ToolKind.CENTER_DRILL, ToolKind.TWIST_DRILL):
        return None
    if not (after.chuck.installed and after.chuck.tightened):
        return None
    if not after.spindle.power or after.spindle.speed_rpm <= 0:
        return None
    if not spindle_over_part(after):
        return None
    if not after.vise.part_in:
        return None

    z0, z1 = before.quill_z_in, after.quill_z_in
    if z1 <= z0:
        return None
    d0 = z0 - limits.tip_clearance_in
    d1 = z1 - limits.tip_clearance_in
    existing = material_depth_at(before, after.table.x, after.table.y, params.match_tol_in)
    floor = max(existing, 0.0)
    cap = before.workpiece.height_in + params.breakthrough_in
    cut_from = max(d0, floor)
    cut_to = min(d1, cap)
    if cut_to <= cut_from + 1e-12:
        return None

    duration = after.clock_s - before.clock_s
    plunge_rate = (z1 - z0) / duration  # inches per second
    t0 = before.clock_s
    t_cs = t0 + (cut_from - d0) / plunge_rate
    t_ce = t0 + (cut_to - d0) / plunge_rate
    return t_cs, t_ce, cut_from, cut_to, plunge_rate * 60.0


def _remove_material(state: MachineState, kind: ToolKind, x: float, y: float,
                     cut_from: float, cut_to: float, diameter_in: float,
                     t_cs: float, plunge_rate: float, params: PhysicsParams,
                     cut: CutOutcome, events: list[SessionEvent], *,
                     overheated: bool, off_band: bool) -> None:
    wp = state.workpiece
    if kind is ToolKind.CENTER_DRILL:
        spot = _find_spot(state, x, y, params.match_tol_in)
        prev = spot.depth_in if spot else 0.0
        if spot is None:
            spot = Spot(x=x, y=y, depth_in=cut_to)
            wp.spots.append(spot)
        else:
            spot.depth_in = max(spot.depth_in, cut_to)
        if prev <= params.spot_depth_warn_in < cut_to:
            t_warn = t_cs + (params.spot_depth_warn_in - cut_from) / plunge_rate
            events.append(SessionEvent(
                t=max(t_warn, t_cs), kind=EventKind.WARNING, code="CENTER_DRILL_TOO_DEEP",
                payload={"depth_in": round_in(cut_to),
                         "limit_in": round_in(params.spot_depth_warn_in)}))
        return

    hole = _find_hole(state, x, y, params.match_tol_in)
    if hole is None:
        hole = Hole(id=f"hole_{len(wp.holes) + 1}", x=x, y=y,
                    diameter_in=diameter_in, depth_in=cut_to)
        wp.holes.append(hole)
        if _find_spot(state, x, y, params.match_tol_in) is None:
            hole.no_center_drill = True
            events.append(SessionEvent(
                t=t_cs, kind=EventKind.WARNING, code="NO_CENTER_DRILL",
                payload={"hole_id": hole.id, "x": round_in(x), "y": round_in(y)}))
    else:
        hole.depth_in = max(hole.depth_in, cut_to)
        hole.diameter_in = max(hole.diameter_in, diameter_in)
    if overheated:
        hole.overheated = True
    if off_band:
        hole.off_speed = True
    # Every pass that extends the hole raises a fresh exit burr.
    wp.burrs.add(hole.id)
    cut.hole_id = hole.id

"""Task graph construction, linearizations, and the permission layers."""
from __future__ import annotations

import copy

import pytest

from virtmill.machine import Action, ActionKind, Axis, new_state
from virtmill.scenario import default_scenario_doc, load_scenario
from virtmill.session import initial_workpiece
from virtmill.tasks import (
    LinearizationOverflow,
    TaskGraph,
    TaskGraphError,
    allowed_actions,
    evaluate_action,
    guided_next,
    map_action_to_task,
    update_progress,
)

from conftest import cutting_state, machine_ctx
from oracles import (
    check_is_linearization,
    count_linear_extensions_dp,
    count_linear_extensions_filter,
)


def bench_state(scenario):
    """In the shop, hazards resolved, machine untouched."""
    st = new_state(workpiece=initial_workpiece(scenario), hazards=set(),
                   limits=scenario.limits, table_x=scenario.table_start_x,
                   table_y=scenario.table_start_y)
    st.operator.in_shop = True
    return st


# -- graph construction ----------------------------------------------------------


def test_default_graph_shape(graph):
    assert len(graph.order) == 11
    assert len(graph.edges) == 19
    assert graph.preds["safety_prep"] == frozenset()
    assert graph.preds["spindle_on"] == frozenset({"spot_hole"})
    assert graph.preds["deburr_hole"] == frozenset(
        {"spindle_on", "set_speed", "quill_drill", "spindle_off"})


def test_default_graph_has_four_orders(graph):
    orders = graph.linearizations()
    nodes, edges = list(graph.order), list(graph.edges)
    assert len(orders) == 4
    assert len({tuple(o) for o in orders}) == 4
    for o in orders:
        assert check_is_linearization(o, nodes, edges)
    assert count_linear_extensions_filter(nodes, edges) == 4
    assert count_linear_extensions_dp(nodes, edges) == 4
    assert list(graph.order) in orders


def test_tiny_graph_counts_match_oracles():
    cases = [
        (("a",), set(), 1),
        (("a", "b", "c"), {("a", "b"), ("b", "c")}, 1),
        (("a", "b", "c", "d"), {("a", "b"), ("c", "d")}, 6),
        (("a", "b", "c", "d"), {("a", "b"), ("a", "c"), ("b", "d"), ("c", "d")}, 2),
    ]
    for order, edges, expected in cases:
        g = TaskGraph._build(order, edges)
        got = g.linearizations()
        assert len(got) == expected
        assert count_linear_extensions_filter(order, list(edges)) == expected
        assert count_linear_extensions_dp(order, list(edges)) == expected
        for o in got:
            assert check_is_linearization(o, order, list(edges))


def test_cycle_detection():
    with pytest.raises(TaskGraphError) as exc:
        TaskGraph._build(("a", "b"), {("a", "b"), ("b", "a")})
    assert exc.value.code == "CYCLIC_GRAPH"
    with pytest.raises(TaskGraphError) as exc:
        TaskGraph._build(("a",), {("a", "a")})
    assert exc.value.code == "CYCLIC_GRAPH"


def test_unknown_task_in_edge():
    with pytest.raises(TaskGraphError) as exc:
        TaskGraph._build(("a", "b"), {("a", "nope")})
    assert exc.value.code == "UNKNOWN_TASK"


def test_linearization_cap_overflow():
    order = tuple("abcdefgh")
    g = TaskGraph._build(order, set())
    with pytest.raises(LinearizationOverflow) as exc:
        g.linearizations(cap=10)
    assert exc.value.code == "COUNT_OVERFLOW"
    assert exc.value.cap == 10
    assert exc.value.partial == 11


def test_interchangeable_tasks_must_be_unordered():
    # Graph validation runs as part of loading, so a bad document never
    # produces a usable scenario at all.
    doc = copy.deepcopy(default_scenario_doc())
    doc["interchange_groups"].append(["vise_setup", "edge_find_x"])
    with pytest.raises(TaskGraphError) as exc:
        load_scenario(doc)
    assert exc.value.code == "INCONSISTENT_SPEC"


def test_declared_order_must_respect_edges():
    doc = copy.deepcopy(default_scenario_doc())
    tasks = doc["tasks"]
    tasks.append(tasks.pop(0))  # safety_prep now declared last
    with pytest.raises(TaskGraphError) as exc:
        load_scenario(doc)
    assert exc.value.code == "INCONSISTENT_SPEC"


def test_descendants(graph):
    assert graph.descendants("deburr_hole") == set()
    assert graph.descendants("spot_hole") == {
        "spindle_on", "set_speed", "quill_drill", "spindle_off", "deburr_hole"}
    assert "edge_find_y" not in graph.descendants("edge_find_x")


# -- action-to-task mapping ----------------------------------------------------------


def test_action_mapping_depends_on_held_tool(scenario):
    ctx = machine_ctx(scenario)
    on = Action(ActionKind.TOGGLE_SPINDLE, on=True)
    twist = cutting_state(scenario, powered=False)
    assert map_action_to_task(twist, on, scenario, ctx) == "spindle_on"
    center = cutting_state(scenario, tool_id="center_drill_3", powered=False)
    assert map_action_to_task(center, on, scenario, ctx) is None


def test_measurement_moves_are_unmapped(scenario):
    ctx = machine_ctx(scenario)
    st = cutting_state(scenario, powered=False)
    crank = Action(ActionKind.CRANK_TABLE, axis=Axis.X, revolutions=1.0)
    zero = Action(ActionKind.ZERO_DRO, axis=Axis.X, offset_in=0.0)
    assert map_action_to_task(st, crank, scenario, ctx) is None
    assert map_action_to_task(st, zero, scenario, ctx) is None


def test_cutting_moves_map_by_tool(scenario):
    ctx = machine_ctx(scenario)
    plunge = Action(ActionKind.MOVE_QUILL, delta_z_in=1.2, duration_s=8.0)
    twist = cutting_state(scenario)
    assert map_action_to_task(twist, plunge, scenario, ctx) == "quill_drill"
    center = cutting_state(scenario, tool_id="center_drill_3")
    assert map_action_to_task(center, plunge, scenario, ctx) == "spot_hole"
    # A lift cuts nothing and so claims no task.
    lift = Action(ActionKind.MOVE_QUILL, delta_z_in=-0.5, duration_s=2.0)
    assert map_action_to_task(twist, lift, scenario, ctx) is None


# -- rule layer -----------------------------------------------------------------------


def verdict_of(scenario, graph, state, action, completed, mode="open"):
    return evaluate_action(state, action, scenario, machine_ctx(scenario),
                           graph, set(completed), mode)


def test_nothing_but_safety_outside_the_shop(scenario, graph):
    st = new_state(workpiece=initial_workpiece(scenario),
                   hazards=set(scenario.hazards), limits=scenario.limits,
                   table_x=scenario.table_start_x, table_y=scenario.table_start_y)
    v = verdict_of(scenario, graph, st, Action(ActionKind.BRUSH_VISE), set())
    assert v.blocked and v.code == "OUT_OF_ORDER"
    assert v.rule_id == "enter_before_working"


def test_entering_with_loose_hair_is_blocked_by_name(scenario, graph):
    st = new_state(workpiece=initial_workpiece(scenario),
                   hazards=set(scenario.hazards), limits=scenario.limits,
                   table_x=scenario.table_start_x, table_y=scenario.table_start_y)
    v = verdict_of(scenario, graph, st, Action(ActionKind.ENTER_SHOP), set())
    assert v.blocked and v.code == "HAIR_NOT_TIED"


def test_entering_with_other_hazards_is_blocked_generically(scenario, graph):
    st = new_state(workpiece=initial_workpiece(scenario),
                   hazards=set(scenario.hazards), limits=scenario.limits,
                   table_x=scenario.table_start_x, table_y=scenario.table_start_y)
    from virtmill.machine import Hazard
    st.operator.hazards = {Hazard.NO_GOGGLES}
    v = verdict_of(scenario, graph, st, Action(ActionKind.ENTER_SHOP), set())
    assert v.blocked and v.code == "SAFETY_HAZARD"


def test_speed_before_power_is_blocked(scenario, graph):
    st = cutting_state(scenario, powered=False)
    v = verdict_of(scenario, graph, st, Action(ActionKind.SET_SPEED, rpm=1000),
                   {"safety_prep", "vise_setup", "chuck_setup"})
    assert v.blocked and v.code == "SPEED_BEFORE_ON"
    assert v.rule_id == "speed_needs_power"


def test_light_mallet_tap_warns(scenario, graph):
    st = cutting_state(scenario, powered=False)
    st.vise.tightened = False
    st.vise.part_seated = False
    v = verdict_of(scenario, graph, st,
                   Action(ActionKind.MALLET_TAP, force="light"), {"safety_prep"})
    assert v.decision == "warn" and v.code == "MALLET_TOO_LIGHT"


def test_releasing_burred_part_warns(scenario, graph):
    st = cutting_state(scenario, powered=False)
    st.workpiece.burrs.add("hole_1")
    v = verdict_of(scenario, graph, st, Action(ActionKind.LOOSEN_VISE), {"safety_prep"})
    assert v.decision == "warn" and v.code == "NO_DEBURR"


def test_placing_part_in_dirty_vise_warns(scenario, graph):
    st = bench_state(scenario)
    v = verdict_of(scenario, graph, st, Action(ActionKind.PLACE_PART), {"safety_prep"})
    assert v.decision == "warn" and v.code == "DIRTY_VISE"


def test_final_clamp_without_seating_warns(scenario, graph):
    st = cutting_state(scenario, powered=False)
    st.vise.tightened = False
    st.vise.part_seated = False  # jaws already snug on the part
    v = verdict_of(scenario, graph, st, Action(ActionKind.TIGHTEN_VISE), {"safety_prep"})
    assert v.decision == "warn" and v.code == "PART_NOT_SEATED"


def test_plunge_without_rotation_is_blocked(scenario, graph):
    st = cutting_state(scenario, powered=False)
    plunge = Action(ActionKind.MOVE_QUILL, delta_z_in=1.2, duration_s=8.0)
    v = verdict_of(scenario, graph, st, plunge,
                   {"safety_prep", "vise_setup", "chuck_setup", "edge_find_x",
                    "edge_find_y", "spot_hole", "spindle_on", "set_speed"})
    assert v.blocked and v.code == "PLUNGE_NO_ROTATION"


def test_cutting_unclamped_part_is_blocked(scenario, graph):
    st = cutting_state(scenario)
    st.vise.tightened = False
    plunge = Action(ActionKind.MOVE_QUILL, delta_z_in=1.2, duration_s=8.0)
    v = verdict_of(scenario, graph, st, plunge,
                   {"safety_prep", "vise_setup", "chuck_setup", "edge_find_x",
                    "edge_find_y", "spot_hole", "spindle_on", "set_speed"})
    assert v.blocked and v.code == "WORKPIECE_UNSECURED"


def test_plunging_edge_finder_is_a_crash(scenario, graph):
    st = cutting_state(scenario, tool_id="edge_finder_100", rpm=800)
    plunge = Action(ActionKind.MOVE_QUILL, delta_z_in=1.2, duration_s=8.0)
    v = verdict_of(scenario, graph, st, plunge,
                   {"safety_prep", "vise_setup", "chuck_setup"})
    assert v.blocked and v.code == "TOOL_CRASH"


def test_side_load_on_engaged_tip_is_a_crash(scenario, graph):
    st = cutting_state(scenario)
    st.quill_z_in = 1.2
    crank = Action(ActionKind.CRANK_TABLE, axis=Axis.X, revolutions=1.0)
    v = verdict_of(scenario, graph, st, crank,
                   {"safety_prep", "vise_setup", "chuck_setup"})
    assert v.blocked and v.code == "TOOL_CRASH"


def test_starting_spindle_with_loose_tool_is_blocked(scenario, graph):
    st = cutting_state(scenario, powered=False)
    st.chuck.tightened = False
    v = verdict_of(scenario, graph, st, Action(ActionKind.TOGGLE_SPINDLE, on=True),
                   {"safety_prep", "vise_setup", "chuck_setup"})
    assert v.blocked and v.code == "UNSECURED_TOOL"


def test_brushing_next_to_live_spindle_is_blocked(scenario, graph):
    st = cutting_state(scenario, rpm=800)
    v = verdict_of(scenario, graph, st, Action(ActionKind.BRUSH_VISE), {"safety_prep"})
    assert v.blocked and v.code == "BRUSHED_WITH_HAND"


# -- graph gating ----------------------------------------------------------------------


def test_drilling_before_spotting_is_out_of_order(scenario, graph):
    st = cutting_state(scenario, powered=False)
    v = verdict_of(scenario, graph, st, Action(ActionKind.TOGGLE_SPINDLE, on=True),
                   {"safety_prep", "vise_setup", "chuck_setup"})
    assert v.blocked and v.code == "OUT_OF_ORDER"
    assert v.detail == {"task": "spindle_on", "missing": ["spot_hole"]}


def test_strict_sequence_rejects_interleaving(scenario, graph):
    st = cutting_state(scenario, powered=False)
    completed = {"safety_prep", "vise_setup", "chuck_setup", "edge_find_x",
                 "edge_find_y", "spot_hole", "spindle_on"}
    v = verdict_of(scenario, graph, st, Action(ActionKind.BRUSH_VISE), completed)
    assert v.blocked and v.code == "OUT_OF_ORDER"
    assert v.detail["task"] == "vise_setup"
    assert v.detail["strict_sequence"] == ["spindle_on", "set_speed",
                                           "quill_drill", "spindle_off"]


def test_strict_sequence_allows_its_own_members(scenario, graph):
    st = cutting_state(scenario, rpm=0)
    st.spindle.speed_rpm = 0
    completed = {"safety_prep", "vise_setup", "chuck_setup", "edge_find_x",
                 "edge_find_y", "spot_hole", "spindle_on"}
    v = verdict_of(scenario, graph, st, Action(ActionKind.SET_SPEED, rpm=2625), completed)
    assert v.decision == "allowed"


def test_unmapped_actions_ignore_the_graph(scenario, graph):
    st = cutting_state(scenario, powered=False)
    crank = Action(ActionKind.CRANK_TABLE, axis=Axis.Y, revolutions=-1.0)
    v = verdict_of(scenario, graph, st, crank, {"safety_prep"})
    assert v.decision == "allowed"


# -- guided gate -----------------------------------------------------------------------


def test_guided_gate_blocks_off_script_actions(scenario, graph):
    st = bench_state(scenario)
    v = verdict_of(scenario, graph, st, Action(ActionKind.INSTALL_CHUCK),
                   {"safety_prep"}, mode="guided")
    assert v.blocked and v.code == "GUIDED_GATE"
    assert v.detail == {"expected_task": "vise_setup"}
    # Open mode has no walkthrough cursor: the same action is fine.
    v_open = verdict_of(scenario, graph, st, Action(ActionKind.INSTALL_CHUCK),
                        {"safety_prep"}, mode="open")
    assert v_open.decision == "allowed"


def test_guided_gate_follows_declared_order(scenario, graph):
    st = bench_state(scenario)
    v = verdict_of(scenario, graph, st, Action(ActionKind.BRUSH_VISE),
                   {"safety_prep"}, mode="guided")
    assert v.decision == "allowed"


def test_guided_rules_still_fire_first(scenario, graph):
    st = new_state(workpiece=initial_workpiece(scenario),
                   hazards=set(scenario.hazards), limits=scenario.limits,
                   table_x=scenario.table_start_x, table_y=scenario.table_start_y)
    v = verdict_of(scenario, graph, st, Action(ActionKind.ENTER_SHOP), set(),
                   mode="guided")
    assert v.blocked and v.code == "HAIR_NOT_TIED"


def test_guided_next_walks_declared_order(scenario, graph):
    assert guided_next(graph, set()) == "safety_prep"
    assert guided_next(graph, {"safety_prep"}) == "vise_setup"
    assert guided_next(graph, {"safety_prep", "vise_setup"}) == "chuck_setup"
    assert guided_next(graph, set(graph.order)) is None


def test_guided_next_refuses_open_mode(scenario, graph):
    with pytest.raises(TaskGraphError) as exc:
        guided_next(graph, set(), mode="open")
    assert exc.value.code == "MODE_MISMATCH"


# -- allowed-action filtering --------------------------------------------------------------


def test_fresh_session_allows_only_hazard_work(scenario, graph):
    st = new_state(workpiece=initial_workpiece(scenario),
                   hazards=set(scenario.hazards), limits=scenario.limits,
                   table_x=scenario.table_start_x, table_y=scenario.table_start_y)
    ctx = machine_ctx(scenario)
    for mode in ("open", "guided"):
        allowed = allowed_actions(st, scenario, ctx, graph, set(), mode)
        assert {a.kind for a in allowed} == {ActionKind.RESOLVE_HAZARD}
        assert len(allowed) == len(scenario.hazards)


def test_guided_allows_a_subset_of_open(scenario, graph):
    st = bench_state(scenario)
    ctx = machine_ctx(scenario)
    completed = {"safety_prep"}
    open_allowed = allowed_actions(st, scenario, ctx, graph, set(completed), "open")
    guided_allowed = allowed_actions(st, scenario, ctx, graph, set(completed), "guided")
    open_kinds = {a.kind for a in open_allowed}
    guided_kinds = {a.kind for a in guided_allowed}
    assert guided_kinds <= open_kinds
    assert ActionKind.INSTALL_CHUCK in open_kinds
    assert ActionKind.INSTALL_CHUCK not in guided_kinds
    assert ActionKind.BRUSH_VISE in guided_kinds


# -- progress -------------------------------------------------------------------------


def test_progress_reset_cascades_downstream(scenario, graph):
    st = cutting_state(scenario, powered=False)
    st.vise.part_in = False
    st.vise.part_seated = False
    st.vise.tightened = False
    completed = {"safety_prep", "vise_setup", "chuck_setup", "edge_find_x"}
    update = update_progress(st, [], scenario, graph, completed, goal_done=False)
    assert update.reset_now == ["vise_setup", "edge_find_x"]
    assert completed == {"safety_prep", "chuck_setup"}
    assert not update.goal_now


def test_progress_completion_is_state_driven(scenario, graph):
    st = cutting_state(scenario, powered=False)
    completed = set()
    update = update_progress(st, [], scenario, graph, completed, goal_done=False)
    # Everything visible from the state alone completes in one sweep.
    assert {"safety_prep", "vise_setup", "chuck_setup"} <= set(update.completed_now)
    assert "edge_find_x" not in completed

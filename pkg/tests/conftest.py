"""Shared fixtures and scripted drivers for the suite."""
from __future__ import annotations

from typing import Optional

import pytest

from virtmill import Session, canonical_script, default_scenario
from virtmill.machine import (
    Action,
    ActionKind,
    MachineContext,
    MachineState,
    apply_action,
    new_state,
)
from virtmill.physics import HeatState, integrate
from virtmill.scenario import Scenario
from virtmill.session import initial_workpiece
from virtmill.tasks import TaskGraph


@pytest.fixture(scope="session")
def scenario() -> Scenario:
    return default_scenario()


@pytest.fixture(scope="session")
def graph(scenario) -> TaskGraph:
    return TaskGraph.from_scenario(scenario)


@pytest.fixture
def session(scenario) -> Session:
    return Session(scenario, mode="free")


def submit_all(session: Session, actions) -> list:
    """Submit every action, tolerating warns but failing the test on a block."""
    results = []
    for a in actions:
        r = session.submit(a)
        assert not r.verdict.blocked, (a, r.verdict.code, r.verdict.detail)
        results.append(r)
    return results


def run_until_complete(session: Session, actions, task_id: str) -> list:
    """Submit from ``actions`` until ``task_id`` completes; return the rest."""
    for i, a in enumerate(actions):
        r = session.submit(a)
        assert not r.verdict.blocked, (i, a, r.verdict.code)
        if task_id in session.completed:
            return list(actions[i + 1:])
    raise AssertionError(f"script exhausted before {task_id!r} completed")


def drilling_groups(scenario: Scenario):
    """Split the shipped walkthrough around the strict drilling sequence.

    Returns (prefix, groups, suffix) where groups holds the atomic action
    lists for spindle_on, set_speed, quill_drill and spindle_off. The prefix
    ends with the twist drill mounted and tightened and the spindle off, so
    any permutation of the groups is mechanically well formed.
    """
    acts = canonical_script(scenario)
    idx_on = max(i for i, a in enumerate(acts)
                 if a.kind is ActionKind.TOGGLE_SPINDLE and a.on)
    idx_speed = max(i for i, a in enumerate(acts) if a.kind is ActionKind.SET_SPEED)
    idx_off = max(i for i, a in enumerate(acts)
                  if a.kind is ActionKind.TOGGLE_SPINDLE and not a.on)
    assert idx_on < idx_speed < idx_off
    groups = {
        "spindle_on": [acts[idx_on]],
        "set_speed": [acts[idx_speed]],
        "quill_drill": list(acts[idx_speed + 1:idx_off]),
        "spindle_off": [acts[idx_off]],
    }
    return list(acts[:idx_on]), groups, list(acts[idx_off + 1:])


def machine_ctx(scenario: Scenario) -> MachineContext:
    return MachineContext(limits=scenario.limits, timing=scenario.timing,
                          tools=scenario.tools)


def cutting_state(scenario: Scenario, tool_id: str = "twist_025",
                  rpm: int = 2625, dx: float = 2.0, dy: float = 1.5,
                  powered: bool = True) -> MachineState:
    """A state ready to cut: clamped part, tightened tool, spindle over dx/dy."""
    st = new_state(
        workpiece=initial_workpiece(scenario),
        hazards=set(),
        limits=scenario.limits,
        table_x=scenario.workpiece.origin_x + dx,
        table_y=scenario.workpiece.origin_y + dy,
    )
    st.operator.in_shop = True
    st.vise.brushed_clean = True
    st.vise.parallels_in = True
    st.vise.part_in = True
    st.vise.part_seated = True
    st.vise.jaw_gap_in = scenario.workpiece.width_in
    st.vise.tightened = True
    st.chuck.installed = True
    st.chuck.held_tool = scenario.tools[tool_id]
    st.chuck.tightened = True
    st.spindle.power = powered
    st.spindle.speed_rpm = rpm if powered else 0
    return st


def quill_step(scenario: Scenario, state: MachineState, heat: HeatState,
               delta_z_in: float, duration_s: float,
               ctx: Optional[MachineContext] = None):
    """Apply one quill move plus its physics; returns (state', heat', events, cut)."""
    ctx = ctx or machine_ctx(scenario)
    a = Action(ActionKind.MOVE_QUILL, delta_z_in=delta_z_in, duration_s=duration_s)
    after, machine_events = apply_action(state, a, ctx)
    heat_after, phys_events, cut = integrate(
        state, after, a, heat, scenario.material, scenario.physics, scenario.limits)
    return after, heat_after, machine_events + phys_events, cut

"""Scenario documents: the data contract that defines one training exercise.

A scenario bundles the machine, the stock, the blueprint, the task graph
and the rule set into a single JSON document. Loading validates twice:
first against a JSON schema (shape), then semantically (references resolve,
the graph is acyclic, declared order freedoms are consistent with the
declared precedence). The canonical digest of the raw document pins session
logs to the exact scenario that produced them.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Optional

import jsonschema

from .canonical import digest
from .machine import ActionKind, ActionTiming, Hazard, MachineLimits, ToolKind, ToolRef
from .physics import MaterialRef, PhysicsParams


class ScenarioError(ValueError):
    """Scenario document rejected. ``path`` points at the offending part."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


@dataclass(frozen=True)
class BlueprintHole:
    x: float
    y: float
    diameter_in: float
    depth_in: float


@dataclass(frozen=True)
class Blueprint:
    holes: tuple[BlueprintHole, ...]
    position_tol_in: float
    diameter_tol_in: float
    depth_tol_in: float
    disqualifying_flags: frozenset[str]


@dataclass(frozen=True)
class Matcher:
    kinds: Optional[frozenset[str]] = None
    not_kinds: frozenset[str] = frozenset()
    on: Optional[bool] = None
    force: Optional[str] = None
    tool_kind: Optional[str] = None
    flags: tuple[tuple[str, bool], ...] = ()

    @classmethod
    def from_doc(cls, doc: dict[str, Any], path: str) -> "Matcher":
        for key in ("kinds", "not_kinds"):
            for kind in doc.get(key, ()):
                try:
                    ActionKind(kind)
                except ValueError:
                    raise ScenarioError(f"{path}.{key}", f"unknown action kind {kind!r}") from None
        tool_kind = doc.get("tool_kind")
        if tool_kind is not None:
            try:
                ToolKind(tool_kind)
            except ValueError:
                raise ScenarioError(f"{path}.tool_kind", f"unknown tool kind {tool_kind!r}") from None
        return cls(
            kinds=frozenset(doc["kinds"]) if "kinds" in doc else None,
            not_kinds=frozenset(doc.get("not_kinds", ())),
            on=doc.get("on"),
            force=doc.get("force"),
            tool_kind=tool_kind,
            flags=tuple(sorted((doc.get("flags") or {}).items())),
        )


@dataclass(frozen=True)
class Rule:
    id: str
    when: Matcher
    verdict: str  # blocked | warn
    code: str


@dataclass(frozen=True)
class TaskSpec:
    id: str
    group: str
    title: str
    done_when: dict[str, Any]
    reset_when: Optional[str] = None


@dataclass(frozen=True)
class CatalogEntry:
    code: str
    weight: int
    title: str
    must_acknowledge: bool = False


@dataclass(frozen=True)
class WorkpieceSpec:
    length_in: float
    width_in: float
    height_in: float
    material: str
    origin_x: float
    origin_y: float


@dataclass(frozen=True)
class Scenario:
    id: str
    version: int
    title: str
    material: MaterialRef
    limits: MachineLimits
    timing: ActionTiming
    physics: PhysicsParams
    tools: dict[str, ToolRef]
    workpiece: WorkpieceSpec
    table_start_x: float
    table_start_y: float
    hazards: frozenset[Hazard]
    blueprint: Blueprint
    groups: tuple[str, ...]
    tasks: tuple[TaskSpec, ...]
    group_precedence: tuple[tuple[str, str], ...]
    interchange_groups: tuple[tuple[str, ...], ...]
    strict_sequences: tuple[tuple[str, ...], ...]
    action_map: tuple[tuple[str, Matcher], ...]
    guided: dict[str, tuple[Matcher, ...]]
    rules: tuple[Rule, ...]
    catalog: dict[str, CatalogEntry]
    scenario_hash: str = ""
    raw: dict[str, Any] = field(default_factory=dict, repr=False)

    def task_ids(self) -> list[str]:
        return [t.id for t in self.tasks]

    def task(self, task_id: str) -> TaskSpec:
        for t in self.tasks:
            if t.id == task_id:
                return t
        raise KeyError(task_id)

    def blueprint_hole_abs(self, index: int) -> tuple[float, float]:
        """Blueprint hole center in absolute table coordinates."""
        bp = self.blueprint.holes[index]
        return self.workpiece.origin_x + bp.x, self.workpiece.origin_y + bp.y


def _schema() -> dict[str, Any]:
    with resources.files(__package__).joinpath("data/scenario.schema.json").open("rb") as fh:
        return json.load(fh)


def default_scenario_doc() -> dict[str, Any]:
    with resources.files(__package__).joinpath("data/default_scenario.json").open("rb") as fh:
        return json.load(fh)


def _build_dataclass(cls, doc: dict[str, Any], path: str):
    try:
        return cls(**doc)
    except TypeError as exc:
        raise ScenarioError(path, str(exc)) from None


def load_scenario(doc: dict[str, Any]) -> Scenario:
    """Validate a raw scenario document and build the typed model."""
    validator = jsonschema.Draft7Validator(_schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = "$" + "".join(
            f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path
        )
        raise ScenarioError(where, err.message)

    tools: dict[str, ToolRef] = {}
    for i, tdoc in enumerate(doc["tools"]):
        tid = tdoc["id"]
        if tid in tools:
            raise ScenarioError(f"$.tools[{i}].id", f"duplicate tool id {tid!r}")
        kind = ToolKind(tdoc["kind"])
        dia = float(tdoc.get("diameter_in", 0.0))
        if kind in (ToolKind.CENTER_DRILL, ToolKind.TWIST_DRILL) and dia <= 0:
            raise ScenarioError(f"$.tools[{i}].diameter_in", "cutting tools need a diameter")
        tools[tid] = ToolRef(id=tid, kind=kind, diameter_in=dia)

    groups = tuple(doc["groups"])
    if len(set(groups)) != len(groups):
        raise ScenarioError("$.groups", "duplicate group name")

    tasks: list[TaskSpec] = []
    seen_tasks: set[str] = set()
    for i, tdoc in enumerate(doc["tasks"]):
        tid = tdoc["id"]
        if tid in seen_tasks:
            raise ScenarioError(f"$.tasks[{i}].id", f"duplicate task id {tid!r}")
        seen_tasks.add(tid)
        if tdoc["group"] not in groups:
            raise ScenarioError(f"$.tasks[{i}].group", f"unknown group {tdoc['group']!r}")
        tasks.append(TaskSpec(
            id=tid, group=tdoc["group"], title=tdoc["title"],
            done_when=dict(tdoc["done_when"]), reset_when=tdoc.get("reset_when"),
        ))

    for i, pair in enumerate(doc["group_precedence"]):
        for g in pair:
            if g not in groups:
                raise ScenarioError(f"$.group_precedence[{i}]", f"unknown group {g!r}")
        if pair[0] == pair[1]:
            raise ScenarioError(f"$.group_precedence[{i}]", "a group cannot precede itself")

    def check_task_list(name: str, seqs) -> None:
        for i, seq in enumerate(seqs):
            if len(set(seq)) != len(seq):
                raise ScenarioError(f"$.{name}[{i}]", "repeated task")
            for t in seq:
                if t not in seen_tasks:
                    raise ScenarioError(f"$.{name}[{i}]", f"unknown task {t!r}")

    check_task_list("interchange_groups", doc["interchange_groups"])
    check_task_list("strict_sequences", doc["strict_sequences"])

    action_map: list[tuple[str, Matcher]] = []
    for i, entry in enumerate(doc["action_map"]):
        if entry["task"] not in seen_tasks:
            raise ScenarioError(f"$.action_map[{i}].task", f"unknown task {entry['task']!r}")
        action_map.append((entry["task"], Matcher.from_doc(entry["match"], f"$.action_map[{i}].match")))

    guided: dict[str, tuple[Matcher, ...]] = {}
    for tid, matchers in doc["guided"].items():
        if tid not in seen_tasks:
            raise ScenarioError(f"$.guided.{tid}", "unknown task")
        guided[tid] = tuple(
            Matcher.from_doc(m, f"$.guided.{tid}[{i}]") for i, m in enumerate(matchers)
        )
    missing_guided = seen_tasks - set(guided)
    if missing_guided:
        raise ScenarioError("$.guided", f"no guided actions for task {sorted(missing_guided)[0]!r}")

    catalog = {
        code: CatalogEntry(code=code, weight=int(c["weight"]), title=c["title"],
                           must_acknowledge=bool(c.get("must_acknowledge", False)))
        for code, c in doc["catalog"].items()
    }

    rules: list[Rule] = []
    seen_rules: set[str] = set()
    for i, rdoc in enumerate(doc["rules"]):
        if rdoc["id"] in seen_rules:
            raise ScenarioError(f"$.rules[{i}].id", f"duplicate rule id {rdoc['id']!r}")
        seen_rules.add(rdoc["id"])
        if rdoc["code"] not in catalog:
            raise ScenarioError(f"$.rules[{i}].code", f"code {rdoc['code']!r} not in catalog")
        rules.append(Rule(
            id=rdoc["id"],
            when=Matcher.from_doc(rdoc["when"], f"$.rules[{i}].when"),
            verdict=rdoc["verdict"],
            code=rdoc["code"],
        ))

    wp = _build_dataclass(WorkpieceSpec, doc["workpiece"], "$.workpiece")
    limits = _build_dataclass(MachineLimits, doc["machine"], "$.machine")
    timing = _build_dataclass(ActionTiming, doc["timing"], "$.timing")
    physics = _build_dataclass(PhysicsParams, doc["physics"], "$.physics")
    material = _build_dataclass(MaterialRef, doc["material"], "$.material")

    bp_doc = doc["blueprint"]
    blueprint = Blueprint(
        holes=tuple(BlueprintHole(**h) for h in bp_doc["holes"]),
        position_tol_in=float(bp_doc["position_tol_in"]),
        diameter_tol_in=float(bp_doc["diameter_tol_in"]),
        depth_tol_in=float(bp_doc["depth_tol_in"]),
        disqualifying_flags=frozenset(bp_doc.get("disqualifying_flags", ())),
    )
    for i, bph in enumerate(blueprint.holes):
        if not (0 <= bph.x <= wp.length_in and 0 <= bph.y <= wp.width_in):
            raise ScenarioError(f"$.blueprint.holes[{i}]", "hole lies outside the stock")

    for t in tasks:
        done = t.done_when
        hole = done.get("hole")
        if hole is not None and not (0 <= int(hole) < len(blueprint.holes)):
            raise ScenarioError(f"$.tasks[{t.id}].done_when.hole", "blueprint hole index out of range")

    if not (0 <= doc["table_start"]["x"] <= limits.table_travel_x_in
            and 0 <= doc["table_start"]["y"] <= limits.table_travel_y_in):
        raise ScenarioError("$.table_start", "start position outside table travel")

    scenario = Scenario(
        id=doc["id"],
        version=int(doc["version"]),
        title=doc["title"],
        material=material,
        limits=limits,
        timing=timing,
        physics=physics,
        tools=tools,
        workpiece=wp,
        table_start_x=float(doc["table_start"]["x"]),
        table_start_y=float(doc["table_start"]["y"]),
        hazards=frozenset(Hazard(h) for h in doc["hazards"]),
        blueprint=blueprint,
        groups=groups,
        tasks=tuple(tasks),
        group_precedence=tuple((a, b) for a, b in doc["group_precedence"]),
        interchange_groups=tuple(tuple(seq) for seq in doc["interchange_groups"]),
        strict_sequences=tuple(tuple(seq) for seq in doc["strict_sequences"]),
        action_map=tuple(action_map),
        guided=guided,
        rules=tuple(rules),
        catalog=catalog,
        scenario_hash=digest(doc),
        raw=doc,
    )

    # Structural checks on the task graph (cycles, declared order freedom)
    # live with the graph code; run them now so a bad document never loads.
    from . import tasks as tasks_mod

    tasks_mod.TaskGraph.from_scenario(scenario)
    return scenario


def load_scenario_file(path: str) -> Scenario:
    with open(path, "rb") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioError("$", f"not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ScenarioError("$", "scenario document must be a JSON object")
    return load_scenario(doc)


def default_scenario() -> Scenario:
    return load_scenario(default_scenario_doc())

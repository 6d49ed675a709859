"""Organizational specification model: structural (roles, groups, links),
functional (goals, plans, missions), and deontic (obligations, permissions)
declarations, validated as immutable data.

Specs are interchanged as JSON documents; the schema ships in
``docs/orgspec.schema.json``. Identifiers match ``[A-Za-z0-9_-]+``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence, Union

IDENTIFIER_RE = re.compile(r"[A-Za-z0-9_-]+$")

LINK_KINDS = ("acquaintance", "communication", "authority")
PLAN_OPERATORS = ("sequence", "choice", "parallel")
DEONTIC_KINDS = ("obligation", "permission")

DEFAULT_PRIORITY = {"obligation": 0.5, "permission": 0.0}


class OrgSpecError(ValueError):
    """Structurally unusable specification document (parse-time failures).

    Semantic problems inside a well-formed document are reported as
    diagnostics by :func:`validate` instead.
    """


class UndeclaredRoleError(KeyError):
    """Lookup of a role the specification does not declare."""


class _AnyTime:
    """Time constraint containing every step."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "ANY_TIME"


ANY_TIME = _AnyTime()


@dataclass(frozen=True)
class Interval:
    """Closed integer step interval [start, end]."""

    start: int
    end: int


TimeConstraint = Union[_AnyTime, tuple[Interval, ...]]


def time_contains(tc: TimeConstraint, step: int) -> bool:
    if tc is ANY_TIME:
        return True
    return any(iv.start <= step <= iv.end for iv in tc)


@dataclass(frozen=True)
class Role:
    name: str
    parents: frozenset[str] = frozenset()
    # Optional expected (obs, act) sequence used by the consistency metric;
    # purely descriptive, never fed to the constraint engine.
    reference: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class Link:
    source: str
    target: str
    kind: str


@dataclass(frozen=True)
class Group:
    name: str
    roles: frozenset[str] = frozenset()
    subgroups: frozenset[str] = frozenset()
    intra_links: tuple[Link, ...] = ()
    inter_links: tuple[Link, ...] = ()
    intra_compat: tuple[tuple[str, str], ...] = ()
    inter_compat: tuple[tuple[str, str], ...] = ()
    role_cardinality: Mapping[str, tuple[int, int]] = field(default_factory=dict, hash=False)
    subgroup_cardinality: Mapping[str, tuple[int, int]] = field(default_factory=dict, hash=False)


@dataclass(frozen=True)
class Goal:
    name: str


@dataclass(frozen=True)
class Plan:
    """Goal decomposition tree: the head goal is refined into children,
    combined by a sequence/choice/parallel operator. Children are either
    goal identifiers or nested plans."""

    head: str
    op: str
    children: tuple[Union["Plan", str], ...]


@dataclass(frozen=True)
class Mission:
    """A named set of weighted goals with an agent cardinality."""

    name: str
    goals: tuple[tuple[str, float], ...]
    agent_cardinality: tuple[int, int] = (1, 1)


@dataclass(frozen=True)
class DeonticRelation:
    """Obligation or permission for a role to commit to a mission within a
    time constraint, carrying a priority weight in [0, 1)."""

    role: str
    mission: str
    kind: str
    time_constraint: TimeConstraint = ANY_TIME
    priority: float | None = None

    @property
    def effective_priority(self) -> float:
        if self.priority is not None:
            return self.priority
        return DEFAULT_PRIORITY.get(self.kind, 0.0)


@dataclass(frozen=True)
class OrgSpec:
    roles: tuple[Role, ...] = ()
    groups: tuple[Group, ...] = ()
    goals: tuple[Goal, ...] = ()
    plans: tuple[Plan, ...] = ()
    missions: tuple[Mission, ...] = ()
    deontic: tuple[DeonticRelation, ...] = ()
    preferences: tuple[tuple[str, str], ...] = ()

    def role(self, name: str) -> Role:
        for r in self.roles:
            if r.name == name:
                return r
        raise UndeclaredRoleError(name)

    def mission(self, name: str) -> Mission:
        for m in self.missions:
            if m.name == name:
                return m
        raise KeyError(name)

    def role_names(self) -> set[str]:
        return {r.name for r in self.roles}


@dataclass(frozen=True)
class Diagnostic:
    """One violated invariant: a short code, the offending element, and a
    human-readable message."""

    code: str
    element: str
    message: str

    def __str__(self) -> str:
        return f"[{self.code}] {self.element}: {self.message}"


# ---------------------------------------------------------------------------
# Validation


def validate(spec: OrgSpec) -> list[Diagnostic]:
    """Check every referential, range, and acyclicity invariant.

    Returns an empty list exactly when the spec is well formed. Pure: the
    same spec always yields the same diagnostics.
    """
    out: list[Diagnostic] = []
    role_names = [r.name for r in spec.roles]
    goal_names = [g.name for g in spec.goals]
    mission_names = [m.name for m in spec.missions]
    group_names = [g.name for g in spec.groups]

    for kind, names in (
        ("role", role_names),
        ("goal", goal_names),
        ("mission", mission_names),
        ("group", group_names),
    ):
        seen = set()
        for name in names:
            if not IDENTIFIER_RE.match(name or ""):
                out.append(Diagnostic("bad identifier", name, f"{kind} name must match [A-Za-z0-9_-]+"))
            if name in seen:
                out.append(Diagnostic("duplicate name", name, f"{kind} declared twice"))
            seen.add(name)

    roles = set(role_names)
    goals = set(goal_names)
    missions = set(mission_names)
    groups = set(group_names)

    # Role inheritance: references resolve, graph acyclic.
    for role in spec.roles:
        for parent in sorted(role.parents):
            if parent not in roles:
                out.append(Diagnostic("unresolved role", role.name, f"parent {parent!r} not declared"))
    cycle = _find_cycle({r.name: sorted(r.parents & roles) for r in spec.roles})
    if cycle:
        out.append(Diagnostic("cyclic inheritance", cycle[0], " -> ".join(cycle)))

    for group in spec.groups:
        for r in sorted(group.roles):
            if r not in roles:
                out.append(Diagnostic("unresolved role", group.name, f"group role {r!r} not declared"))
        for sg in sorted(group.subgroups):
            if sg not in groups:
                out.append(Diagnostic("unresolved group", group.name, f"subgroup {sg!r} not declared"))
        for link in group.intra_links + group.inter_links:
            if link.kind not in LINK_KINDS:
                out.append(Diagnostic("bad link kind", group.name, f"{link.kind!r} not in {LINK_KINDS}"))
            for endpoint in (link.source, link.target):
                if endpoint not in roles:
                    out.append(Diagnostic("unresolved role", group.name, f"link endpoint {endpoint!r} not declared"))
        for pair in group.intra_compat + group.inter_compat:
            for endpoint in pair:
                if endpoint not in roles:
                    out.append(Diagnostic("unresolved role", group.name, f"compatibility endpoint {endpoint!r} not declared"))
        for label, card in (("role", group.role_cardinality), ("subgroup", group.subgroup_cardinality)):
            for target, (lo, hi) in sorted(card.items()):
                if lo > hi:
                    out.append(Diagnostic("bad cardinality", group.name, f"{label} {target!r}: min {lo} > max {hi}"))

    # Plans: heads and goal children resolve; no goal reachable from itself.
    for plan in spec.plans:
        out.extend(_validate_plan(plan, goals, ancestors=()))

    for mission in spec.missions:
        if not mission.goals:
            out.append(Diagnostic("empty mission", mission.name, "mission has no goals"))
        total = 0.0
        for goal, weight in mission.goals:
            if goal not in goals:
                out.append(Diagnostic("unresolved goal", mission.name, f"mission goal {goal!r} not declared"))
            if not (0.0 < weight <= 1.0):
                out.append(Diagnostic("bad weight", mission.name, f"goal {goal!r} weight {weight} outside (0, 1]"))
            total += weight
        if total > len(mission.goals) + 1e-12:
            out.append(Diagnostic("bad weight", mission.name, f"weights sum {total} exceeds goal count {len(mission.goals)}"))
        lo, hi = mission.agent_cardinality
        if lo > hi:
            out.append(Diagnostic("bad cardinality", mission.name, f"agent cardinality min {lo} > max {hi}"))

    for rel in spec.deontic:
        label = f"{rel.role}/{rel.mission}"
        if rel.role not in roles:
            out.append(Diagnostic("unresolved role", label, f"deontic role {rel.role!r} not declared"))
        if rel.mission not in missions:
            out.append(Diagnostic("unresolved mission", label, f"deontic mission {rel.mission!r} not declared"))
        if rel.kind not in DEONTIC_KINDS:
            out.append(Diagnostic("bad deontic kind", label, f"{rel.kind!r} not in {DEONTIC_KINDS}"))
        if rel.time_constraint is not ANY_TIME:
            for iv in rel.time_constraint:
                if iv.start > iv.end:
                    out.append(Diagnostic("bad interval", label, f"interval [{iv.start}, {iv.end}] has start > end"))
        if rel.priority is not None and not (0.0 <= rel.priority < 1.0):
            out.append(Diagnostic("bad priority", label, f"priority {rel.priority} outside [0, 1)"))

    for first, second in spec.preferences:
        for m in (first, second):
            if m not in missions:
                out.append(Diagnostic("unresolved mission", f"{first}<{second}", f"preference mission {m!r} not declared"))

    return out


def _validate_plan(plan: Plan, goals: set[str], ancestors: tuple[str, ...]) -> list[Diagnostic]:
    out: list[Diagnostic] = []
    if plan.head not in goals:
        out.append(Diagnostic("unresolved goal", plan.head, "plan head not declared"))
    if plan.op not in PLAN_OPERATORS:
        out.append(Diagnostic("bad operator", plan.head, f"{plan.op!r} not in {PLAN_OPERATORS}"))
    if not plan.children:
        out.append(Diagnostic("empty plan", plan.head, "plan has no children"))
    if plan.head in ancestors:
        out.append(Diagnostic("cyclic plan", plan.head, " -> ".join(ancestors + (plan.head,))))
        return out
    lineage = ancestors + (plan.head,)
    for child in plan.children:
        if isinstance(child, Plan):
            out.extend(_validate_plan(child, goals, lineage))
        else:
            if child not in goals:
                out.append(Diagnostic("unresolved goal", plan.head, f"plan child {child!r} not declared"))
            if child in lineage:
                out.append(Diagnostic("cyclic plan", plan.head, f"goal {child!r} reachable from itself"))
    return out


def _find_cycle(edges: Mapping[str, Sequence[str]]) -> list[str] | None:
    state: dict[str, int] = {}  # 1 = on stack, 2 = done

    def visit(node: str, path: list[str]) -> list[str] | None:
        state[node] = 1
        path.append(node)
        for nxt in edges.get(node, ()):
            if state.get(nxt) == 1:
                return path[path.index(nxt):] + [nxt]
            if state.get(nxt) is None:
                found = visit(nxt, path)
                if found:
                    return found
        path.pop()
        state[node] = 2
        return None

    for start in edges:
        if state.get(start) is None:
            found = visit(start, [])
            if found:
                return found
    return None


# ---------------------------------------------------------------------------
# Deontic lookup


def ancestor_roles(spec: OrgSpec, role: str) -> set[str]:
    """The role itself plus its transitive parents."""
    if role not in spec.role_names():
        raise UndeclaredRoleError(role)
    by_name = {r.name: r for r in spec.roles}
    seen: set[str] = set()
    frontier = [role]
    while frontier:
        current = frontier.pop()
        if current in seen or current not in by_name:
            continue
        seen.add(current)
        frontier.extend(by_name[current].parents)
    return seen

def rds_lookup(spec: OrgSpec, role: str, step: int) -> list[DeonticRelation]:
    """Deontic relations applying to ``role`` at ``step``.

    A role inherits every deontic relation of its ancestors; a relation
    applies when its time constraint contains the step (ANY_TIME contains
    all steps). Raises :class:`UndeclaredRoleError` for unknown roles.
    """
    lineage = ancestor_roles(spec, role)
    return [
        rel
        for rel in spec.deontic
        if rel.role in lineage and time_contains(rel.time_constraint, step)
    ]


# ---------------------------------------------------------------------------
# JSON serialization


def time_constraint_to_json(tc: TimeConstraint):
    if tc is ANY_TIME:
        return "any"
    return [[iv.start, iv.end] for iv in tc]


def time_constraint_from_json(raw) -> TimeConstraint:
    if raw is None or raw == "any":
        return ANY_TIME
    if not isinstance(raw, list):
        raise OrgSpecError(f"time constraint must be 'any' or a list of [start, end]: {raw!r}")
    intervals = []
    for item in raw:
        if not (isinstance(item, list) and len(item) == 2):
            raise OrgSpecError(f"bad interval {item!r}")
        intervals.append(Interval(int(item[0]), int(item[1])))
    return tuple(intervals)


def spec_to_dict(spec: OrgSpec) -> dict:
    def plan_to_json(plan: Plan):
        return {
            "head": plan.head,
            "op": plan.op,
            "children": [plan_to_json(c) if isinstance(c, Plan) else c for c in plan.children],
        }

    return {
        "roles": [
            {
                "name": r.name,
                "parents": sorted(r.parents),
                **({"reference": [list(p) for p in r.reference]} if r.reference else {}),
            }
            for r in spec.roles
        ],
        "groups": [
            {
                "name": g.name,
                "roles": sorted(g.roles),
                "subgroups": sorted(g.subgroups),
                "intra_links": [[l.source, l.target, l.kind] for l in g.intra_links],
                "inter_links": [[l.source, l.target, l.kind] for l in g.inter_links],
                "intra_compat": [list(p) for p in g.intra_compat],
                "inter_compat": [list(p) for p in g.inter_compat],
                "role_cardinality": {k: list(v) for k, v in sorted(g.role_cardinality.items())},
                "subgroup_cardinality": {k: list(v) for k, v in sorted(g.subgroup_cardinality.items())},
            }
            for g in spec.groups
        ],
        "goals": [{"name": g.name} for g in spec.goals],
        "plans": [plan_to_json(p) for p in spec.plans],
        "missions": [
            {
                "name": m.name,
                "goals": [[g, w] for g, w in m.goals],
                "agent_cardinality": list(m.agent_cardinality),
            }
            for m in spec.missions
        ],
        "deontic": [
            {
                "role": d.role,
                "mission": d.mission,
                "kind": d.kind,
                "time": time_constraint_to_json(d.time_constraint),
                **({"priority": d.priority} if d.priority is not None else {}),
            }
            for d in spec.deontic
        ],
        "preferences": [list(p) for p in spec.preferences],
    }


def spec_from_dict(raw: Mapping) -> OrgSpec:
    if not isinstance(raw, Mapping):
        raise OrgSpecError("spec document must be a JSON object")

    def plan_from_json(item) -> Plan:
        if not isinstance(item, Mapping):
            raise OrgSpecError(f"plan must be an object: {item!r}")
        children = tuple(
            plan_from_json(c) if isinstance(c, Mapping) else str(c)
            for c in item.get("children", [])
        )
        return Plan(head=str(item.get("head", "")), op=str(item.get("op", "sequence")), children=children)

    def link_from_json(item) -> Link:
        if not (isinstance(item, list) and len(item) == 3):
            raise OrgSpecError(f"link must be [source, target, kind]: {item!r}")
        return Link(str(item[0]), str(item[1]), str(item[2]))

    roles = tuple(
        Role(
            name=str(r["name"]),
            parents=frozenset(str(p) for p in r.get("parents", [])),
            reference=tuple((str(o), str(a)) for o, a in r.get("reference", [])),
        )
        for r in raw.get("roles", [])
    )
    groups = tuple(
        Group(
            name=str(g["name"]),
            roles=frozenset(str(x) for x in g.get("roles", [])),
            subgroups=frozenset(str(x) for x in g.get("subgroups", [])),
            intra_links=tuple(link_from_json(l) for l in g.get("intra_links", [])),
            inter_links=tuple(link_from_json(l) for l in g.get("inter_links", [])),
            intra_compat=tuple((str(a), str(b)) for a, b in g.get("intra_compat", [])),
            inter_compat=tuple((str(a), str(b)) for a, b in g.get("inter_compat", [])),
            role_cardinality={str(k): (int(v[0]), int(v[1])) for k, v in g.get("role_cardinality", {}).items()},
            subgroup_cardinality={str(k): (int(v[0]), int(v[1])) for k, v in g.get("subgroup_cardinality", {}).items()},
        )
        for g in raw.get("groups", [])
    )
    goals = tuple(Goal(name=str(g["name"])) for g in raw.get("goals", []))
    plans = tuple(plan_from_json(p) for p in raw.get("plans", []))
    missions = tuple(
        Mission(
            name=str(m["name"]),
            goals=tuple((str(g), float(w)) for g, w in m.get("goals", [])),
            agent_cardinality=tuple(int(x) for x in m.get("agent_cardinality", [1, 1])),  # type: ignore[arg-type]
        )
        for m in raw.get("missions", [])
    )
    deontic = tuple(
        DeonticRelation(
            role=str(d["role"]),
            mission=str(d["mission"]),
            kind=str(d.get("kind", "obligation")),
            time_constraint=time_constraint_from_json(d.get("time")),
            priority=float(d["priority"]) if d.get("priority") is not None else None,
        )
        for d in raw.get("deontic", [])
    )
    preferences = tuple((str(a), str(b)) for a, b in raw.get("preferences", []))
    return OrgSpec(
        roles=roles,
        groups=groups,
        goals=goals,
        plans=plans,
        missions=missions,
        deontic=deontic,
        preferences=preferences,
    )


def load_spec(path: str | Path) -> OrgSpec:
    document = json.loads(Path(path).read_text(encoding="utf-8"))
    return spec_from_dict(document)


def save_spec(spec: OrgSpec, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(spec_to_dict(spec), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

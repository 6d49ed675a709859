"""Constraint guides: rule banks that attach organizational semantics to
learning agents.

Three guide kinds exist. A role action guide restricts the next action given
the agent's history and observation; a role reward guide penalizes actions
outside that restriction; a goal reward guide pays a bonus when the agent's
history contains a goal's characteristic sub-sequence. Linkers bind agents
to roles, roles to action/reward guides, and goals to reward guides.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .orgspec import Diagnostic, OrgSpec, rds_lookup, spec_from_dict
from .patterns import Pattern, WILDCARD, matches, parse_pattern
from .trajectory import History

EPSILON = 1e-6


class _AllActions:
    """Sentinel meaning 'the full action alphabet' (no restriction)."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __contains__(self, action: object) -> bool:
        return True

    def __repr__(self) -> str:
        return "ALL"


ALL = _AllActions()


def is_all_actions(mask: object) -> bool:
    return isinstance(mask, _AllActions)


class GuideConfigError(ValueError):
    """Misconfigured guide bank, reported at setup time."""


@dataclass(frozen=True)
class RagRule:
    """One action-restriction rule.

    Fires when the history matches ``pattern`` (``None`` matches any
    history) and the current observation equals ``observation`` (or the
    wildcard). ``hardness`` is the probability the restriction is enforced
    as a mask on any given turn.
    """

    observation: str
    actions: frozenset[str]
    pattern: Pattern | None = None
    hardness: float = 1.0

    def __post_init__(self) -> None:
        if not self.actions:
            raise GuideConfigError("rule needs a non-empty action set")
        if not (0.0 <= self.hardness <= 1.0):
            raise GuideConfigError(f"hardness {self.hardness} outside [0, 1]")

    def condition_holds(self, history: History, obs: str) -> bool:
        if self.observation != WILDCARD and self.observation != obs:
            return False
        return self.pattern is None or matches(self.pattern, history)


@dataclass(frozen=True)
class RoleActionGuide:
    """Ordered rule bank; the first matching rule wins, no match means
    unrestricted."""

    rules: tuple[RagRule, ...] = ()

    def query(self, history: History, obs: str) -> tuple[frozenset[str] | _AllActions, float]:
        for rule in self.rules:
            if rule.condition_holds(history, obs):
                return rule.actions, rule.hardness
        return ALL, 0.0

    def fast_table(self) -> dict[str, tuple[frozenset[str], float]] | None:
        """Observation-keyed dispatch when every rule is history-free and
        observation-literal; None when order-sensitive matching is needed."""
        if any(r.pattern is not None or r.observation == WILDCARD for r in self.rules):
            return None
        table: dict[str, tuple[frozenset[str], float]] = {}
        for rule in self.rules:
            table.setdefault(rule.observation, (rule.actions, rule.hardness))
        return table


@dataclass(frozen=True)
class RoleRewardGuide:
    """Penalty added to the global reward when the chosen action falls
    outside the source action guide's allowed set."""

    penalty: float
    source: RoleActionGuide

    def __post_init__(self) -> None:
        if self.penalty > 0.0:
            raise GuideConfigError(f"penalty must be <= 0, got {self.penalty}")

    def query(self, history: History, obs: str, action: str) -> float:
        allowed, _ = self.source.query(history, obs)
        if action in allowed:
            return 0.0
        return self.penalty


@dataclass(frozen=True)
class GoalRewardGuide:
    """Bonus paid when the history contains the goal's characteristic
    sub-sequence; by default only at the step where the match first
    appears."""

    pattern: Pattern
    bonus: float
    once_per_episode: bool = True

    def query(self, history: History) -> float:
        if not matches(self.pattern, history):
            return 0.0
        if self.once_per_episode and matches(self.pattern, tuple(history)[:-1]):
            return 0.0
        return self.bonus


@dataclass(frozen=True)
class RoleGuides:
    action_guide: RoleActionGuide | None = None
    reward_guide: RoleRewardGuide | None = None


@dataclass(frozen=True)
class Linkers:
    """Bindings: agent -> role (ar), role -> guides (rcg), goal -> reward
    guide (gcg)."""

    ar: Mapping[str, str] = field(default_factory=dict, hash=False)
    rcg: Mapping[str, RoleGuides] = field(default_factory=dict, hash=False)
    gcg: Mapping[str, GoalRewardGuide] = field(default_factory=dict, hash=False)

    @property
    def empty(self) -> bool:
        return not self.ar and not self.rcg and not self.gcg

    def role_of(self, agent: str) -> str | None:
        return self.ar.get(agent)

    def guides_for_role(self, role: str | None) -> RoleGuides:
        if role is None:
            return RoleGuides()
        return self.rcg.get(role, RoleGuides())

    def without_goal_guides(self) -> "Linkers":
        """Copy with all goal bonuses removed (roles-only ablation)."""
        return Linkers(ar=dict(self.ar), rcg=dict(self.rcg), gcg={})


def validate_linkers(
    spec: OrgSpec,
    linkers: Linkers,
    agents: list[str],
    action_alphabets: Mapping[str, tuple[str, ...]] | None = None,
) -> list[Diagnostic]:
    """Setup-time checks: ar total and injective onto used roles, guide
    references resolvable, mission goals covered by gcg, rule actions within
    the environment's action alphabet."""
    out: list[Diagnostic] = []
    declared = spec.role_names()
    used: dict[str, str] = {}
    for agent in agents:
        role = linkers.ar.get(agent)
        if role is None:
            out.append(Diagnostic("unlinked agent", agent, "no role assigned via ar"))
            continue
        if role not in declared:
            out.append(Diagnostic("unresolved role", agent, f"ar target {role!r} not declared"))
        if role in used:
            out.append(Diagnostic("non-bijective ar", role, f"role assigned to both {used[role]!r} and {agent!r}"))
        used[role] = agent
    for role in linkers.rcg:
        if role not in declared:
            out.append(Diagnostic("unresolved role", role, "rcg entry for undeclared role"))
    goal_names = {g.name for g in spec.goals}
    for goal in linkers.gcg:
        if goal not in goal_names:
            out.append(Diagnostic("unresolved goal", goal, "gcg entry for undeclared goal"))
    # Every mission goal referenced by a deontic relation needs a bonus guide.
    for rel in spec.deontic:
        try:
            mission = spec.mission(rel.mission)
        except KeyError:
            continue
        for goal, _ in mission.goals:
            if goal not in linkers.gcg:
                out.append(
                    Diagnostic(
                        "missing goal guide",
                        goal,
                        f"mission {mission.name!r} is deontically referenced but goal has no gcg entry",
                    )
                )
    if action_alphabets is not None:
        for agent in agents:
            guides = linkers.guides_for_role(linkers.ar.get(agent))
            if guides.action_guide is None:
                continue
            alphabet = set(action_alphabets.get(agent, ()))
            for rule in guides.action_guide.rules:
                extra = rule.actions - alphabet
                if extra:
                    out.append(
                        Diagnostic(
                            "unknown action",
                            agent,
                            f"rule actions {sorted(extra)} outside the action alphabet",
                        )
                    )
    return out


def mission_bonus(
    spec: OrgSpec, linkers: Linkers, agent: str, history: History, step: int
) -> float:
    """Total goal bonus for the agent at this step.

    For each deontic relation valid at ``step`` for the agent's role, the
    mission's weighted goal bonuses are summed and amplified by
    ``1 / (1 - priority + epsilon)``.
    """
    role = linkers.role_of(agent)
    if role is None:
        return 0.0
    total = 0.0
    for rel in rds_lookup(spec, role, step):
        mission = spec.mission(rel.mission)
        weighted = 0.0
        for goal, weight in mission.goals:
            guide = linkers.gcg.get(goal)
            if guide is None:
                raise GuideConfigError(
                    f"goal {goal!r} of mission {mission.name!r} has no reward guide"
                )
            weighted += weight * guide.query(history)
        total += weighted / (1.0 - rel.effective_priority + EPSILON)
    return total


# ---------------------------------------------------------------------------
# JSON parsing
#
# Guide banks live in the same document as the organizational spec:
#
#   "guides": {
#     "roles": {"<role>": {"rag": {"rules": [{"obs": ..., "actions": [...],
#                                             "pattern": null|"<TP>",
#                                             "hardness": 1.0}]},
#                          "rrg": {"penalty": -1.0}}},
#     "goals": {"<goal>": {"pattern": "<TP>", "bonus": 5.0, "once": true}}
#   },
#   "ar": {"<agent>": "<role>"}


def linkers_from_dict(raw: Mapping) -> Linkers:
    guides = raw.get("guides", {})
    rcg: dict[str, RoleGuides] = {}
    for role, entry in guides.get("roles", {}).items():
        action_guide = None
        if "rag" in entry:
            rules = []
            for rule in entry["rag"].get("rules", []):
                pattern_text = rule.get("pattern")
                rules.append(
                    RagRule(
                        observation=str(rule["obs"]),
                        actions=frozenset(str(a) for a in rule.get("actions", [])),
                        pattern=parse_pattern(pattern_text) if pattern_text else None,
                        hardness=float(rule.get("hardness", 1.0)),
                    )
                )
            action_guide = RoleActionGuide(rules=tuple(rules))
        reward_guide = None
        if "rrg" in entry:
            if action_guide is None:
                raise GuideConfigError(f"role {role!r}: rrg needs a rag to define the allowed set")
            reward_guide = RoleRewardGuide(
                penalty=float(entry["rrg"].get("penalty", 0.0)), source=action_guide
            )
        rcg[str(role)] = RoleGuides(action_guide=action_guide, reward_guide=reward_guide)
    gcg: dict[str, GoalRewardGuide] = {}
    for goal, entry in guides.get("goals", {}).items():
        gcg[str(goal)] = GoalRewardGuide(
            pattern=parse_pattern(str(entry["pattern"])),
            bonus=float(entry.get("bonus", 0.0)),
            once_per_episode=bool(entry.get("once", True)),
        )
    ar = {str(agent): str(role) for agent, role in raw.get("ar", {}).items()}
    return Linkers(ar=ar, rcg=rcg, gcg=gcg)


def load_org_document(path: str | Path) -> tuple[OrgSpec, Linkers]:
    """Load a combined spec + guides + ar document."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return spec_from_dict(raw), linkers_from_dict(raw)


def org_document_from_dict(raw: Mapping) -> tuple[OrgSpec, Linkers]:
    return spec_from_dict(raw), linkers_from_dict(raw)

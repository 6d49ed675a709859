"""Trajectory mining of implicit organizations: cluster agent histories into
implicit roles (with inheritance), cluster successful episodes into implicit
goals/plans/missions with deontic relations, and score how well the logs fit
the mined structure.

Stages:

1. Roles: pairwise history distance 1 - |LCS| / max(len); average-linkage
   clustering cut at a threshold; each cluster's common longest sequence
   (CLS) is the iterated LCS over its members; inheritance edges where one
   CLS is a proper subsequence of another.
2. Goals: successful episodes are vectorized as step-indexed one-hot joint
   observations and k-means clustered (k by silhouette unless fixed); each
   trajectory cluster contributes the joint observations at its
   minimal-variance step and at its terminal step.
3. Plans: per-cluster goals ordered by typical step become sequence plans;
   clusters sharing a terminal goal merge into a choice plan.
4. Missions/deontics: episodes achieve a goal when their joint observation
   at the goal's typical step matches it; identical achievement sets form
   missions; a role-mission pair is an obligation when the role's members
   achieved nothing outside the mission.

Fit: structural = mean LCS overlap between each history and its nearest
role's CLS; functional = mean one-hot proximity between episodes and every
goal; total = their mean.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cluster import Merge, average_linkage, cut_tree, kmeans, pick_k
from .orgspec import (
    DeonticRelation,
    Goal,
    Interval,
    Mission,
    OrgSpec,
    Plan,
    Role,
    spec_to_dict,
)
from .trajectory import (
    History,
    JointHistory,
    build_lcs_masks,
    is_subsequence,
    lcs,
    lcs_length_with_masks,
)

MemberKey = tuple[int, str]  # (episode_id, agent_id)


class InsufficientDataError(ValueError):
    """Raised when a stage has no data to mine (e.g. no successful
    episodes for goal inference)."""


@dataclass(frozen=True)
class TemmParams:
    role_threshold: float = 0.5  # dendrogram cut
    k: int | None = None  # trajectory clusters; None = silhouette over 2..8
    k_range: tuple[int, int] = (2, 8)
    goal_tolerance: float = 0.0  # achievement distance; 0 = exact match
    # Sampling policy for the step-indexed vectors: episodes are resampled
    # at this many evenly spaced positions of their own timeline, so
    # trajectory clusters reflect path shape rather than episode length.
    # None uses raw step indices padded to the longest episode.
    sample_steps: int | None = 12
    seed: int = 0


@dataclass
class ImplicitRole:
    id: str
    cls: History
    members: tuple[MemberKey, ...]
    parents: frozenset[str] = frozenset()


@dataclass
class ImplicitGoal:
    id: str
    joint_observations: tuple[tuple[str, ...], ...]
    cluster: int
    typical_step: int
    # Timeline the typical step indexes into: `of_positions` positions,
    # either resampled over each episode's own length (sampled=True) or raw
    # step indices with absorbing terminal padding (sampled=False).
    of_positions: int = 0
    sampled: bool = False


@dataclass
class ImplicitMission:
    id: str
    goals: tuple[str, ...]
    members: tuple[MemberKey, ...]


@dataclass
class ImplicitDeontic:
    role: str
    mission: str
    kind: str
    window: tuple[int, int]


@dataclass
class Dendrogram:
    merges: list[Merge]
    leaves: list[MemberKey]
    labels: list[int]


@dataclass
class TransitionGraph:
    """Merged joint-observation transition multigraph over all episodes."""

    nodes: list[tuple[str, ...]]
    edges: dict[tuple[int, int], int]


@dataclass
class TemmReport:
    roles: list[ImplicitRole]
    goals: list[ImplicitGoal]
    plans: list[Plan]
    missions: list[ImplicitMission]
    deontics: list[ImplicitDeontic]
    structural_fit: float
    functional_fit: float
    org_fit: float
    per_agent_fit: dict[str, float]
    params: TemmParams
    chosen_k: int | None = None
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "roles": [
                {
                    "id": r.id,
                    "cls": [list(p) for p in r.cls],
                    "members": [[ep, agent] for ep, agent in r.members],
                    "parents": sorted(r.parents),
                }
                for r in self.roles
            ],
            "goals": [
                {
                    "id": g.id,
                    "joint_observations": [list(v) for v in g.joint_observations],
                    "cluster": g.cluster,
                    "typical_step": g.typical_step,
                    "of_positions": g.of_positions,
                    "sampled": g.sampled,
                }
                for g in self.goals
            ],
            "plans": [_plan_to_json(p) for p in self.plans],
            "missions": [
                {"id": m.id, "goals": list(m.goals), "members": [[ep, a] for ep, a in m.members]}
                for m in self.missions
            ],
            "deontics": [
                {"role": d.role, "mission": d.mission, "kind": d.kind, "window": list(d.window)}
                for d in self.deontics
            ],
            "structural_fit": self.structural_fit,
            "functional_fit": self.functional_fit,
            "org_fit": self.org_fit,
            "per_agent_fit": dict(sorted(self.per_agent_fit.items())),
            "chosen_k": self.chosen_k,
            "notes": list(self.notes),
        }


def _plan_to_json(plan: Plan) -> dict:
    return {
        "head": plan.head,
        "op": plan.op,
        "children": [
            _plan_to_json(c) if isinstance(c, Plan) else c for c in plan.children
        ],
    }


# ---------------------------------------------------------------------------
# Stage 1: roles and inheritance


def history_distance_matrix(histories: list[History]) -> np.ndarray:
    n = len(histories)
    masks = [build_lcs_masks(h) for h in histories]
    out = np.zeros((n, n), dtype=float)
    for i in range(n):
        hi = histories[i]
        for j in range(i + 1, n):
            hj = histories[j]
            longest = max(len(hi), len(hj))
            if longest == 0:
                d = 0.0
            else:
                d = 1.0 - lcs_length_with_masks(masks[i], len(hi), hj) / longest
            out[i, j] = out[j, i] = d
    return out


def infer_roles(
    logs: list[JointHistory], params: TemmParams = TemmParams()
) -> tuple[list[ImplicitRole], Dendrogram]:
    keys: list[MemberKey] = []
    histories: list[History] = []
    for ep in sorted(logs, key=lambda e: e.episode_id):
        for agent in ep.agents:
            keys.append((ep.episode_id, agent))
            histories.append(ep.histories[agent])
    if len(histories) < 2:
        raise InsufficientDataError("need at least two agent histories to infer roles")
    dist = history_distance_matrix(histories)
    merges = average_linkage(dist)
    labels = cut_tree(merges, len(histories), params.role_threshold)
    clusters: dict[int, list[int]] = {}
    for idx, label in enumerate(labels):
        clusters.setdefault(label, []).append(idx)
    roles = []
    for label in sorted(clusters):
        member_idx = sorted(clusters[label], key=lambda i: keys[i])
        cls: History = histories[member_idx[0]]
        for idx in member_idx[1:]:
            cls = lcs(cls, histories[idx])
        roles.append(
            ImplicitRole(
                id=f"role_{label}",
                cls=cls,
                members=tuple(keys[i] for i in member_idx),
            )
        )
    # Inheritance: a role whose CLS is properly contained in another's
    # inherits from it (the containing role is the parent).
    for child in roles:
        parents = set()
        for parent in roles:
            if parent.id == child.id:
                continue
            if len(child.cls) < len(parent.cls) and is_subsequence(child.cls, parent.cls):
                parents.add(parent.id)
        child.parents = frozenset(parents)
    dendrogram = Dendrogram(merges=merges, leaves=keys, labels=labels)
    return roles, dendrogram


# ---------------------------------------------------------------------------
# Stage 2: goals, plans


def _joint_observations(ep: JointHistory) -> list[tuple[str, ...]]:
    agents = ep.agents
    length = min(len(ep.histories[a]) for a in agents)
    return [tuple(ep.histories[a][s][0] for a in agents) for s in range(length)]


class _JointVectorizer:
    """One-hot encoding of joint observations, one block per agent slot."""

    def __init__(self, logs: list[JointHistory]):
        agents = sorted(logs[0].agents)
        for ep in logs:
            if sorted(ep.agents) != agents:
                raise InsufficientDataError("all episodes must share one agent set")
        self.agents = agents
        vocab: dict[int, list[str]] = {}
        for slot, agent in enumerate(agents):
            seen = sorted(
                {obs for ep in logs for obs, _ in ep.histories[agent]}
            )
            vocab[slot] = seen
        self.index = [
            {label: i for i, label in enumerate(vocab[slot])} for slot in range(len(agents))
        ]
        self.offsets = []
        offset = 0
        for slot in range(len(agents)):
            self.offsets.append(offset)
            offset += len(vocab[slot])
        self.width = offset

    def vector(self, joint: tuple[str, ...]) -> np.ndarray:
        v = np.zeros(self.width)
        for slot, label in enumerate(joint):
            idx = self.index[slot].get(label)
            if idx is not None:
                v[self.offsets[slot] + idx] = 1.0
        return v

    def distance(self, a: tuple[str, ...], b: tuple[str, ...]) -> float:
        mismatches = sum(1 for x, y in zip(a, b) if x != y)
        return float(np.sqrt(2.0 * mismatches))

    @property
    def max_distance(self) -> float:
        return float(np.sqrt(2.0 * len(self.agents)))


def _obs_at(seq: list, position: int, positions: int, sampled: bool):
    """Joint observation at a timeline position of an episode.

    Sampled timelines map positions over the episode's own length; raw
    timelines use absorbing terminal padding.
    """
    if sampled:
        if positions <= 1:
            return seq[-1]
        idx = round(position * (len(seq) - 1) / (positions - 1))
        return seq[idx]
    return seq[min(position, len(seq) - 1)]


def infer_goals(
    logs: list[JointHistory], params: TemmParams = TemmParams()
) -> tuple[list[ImplicitGoal], dict[int, int], TransitionGraph, int]:
    """Mine goals from successful episodes.

    Returns (goals, episode_id -> cluster label, transition graph, k).
    """
    successful = [
        ep for ep in logs if ep.success and min(len(h) for h in ep.histories.values()) > 0
    ]
    if not successful:
        raise InsufficientDataError("no successful episodes to infer goals from")
    successful.sort(key=lambda e: e.episode_id)
    vectorizer = _JointVectorizer(successful)
    sequences = [_joint_observations(ep) for ep in successful]
    graph = _transition_graph(sequences)
    sampled = params.sample_steps is not None
    positions = params.sample_steps if sampled else max(len(s) for s in sequences)
    matrix = np.zeros((len(successful), positions * vectorizer.width))
    for row, seq in enumerate(sequences):
        for position in range(positions):
            joint = _obs_at(seq, position, positions, sampled)
            matrix[row, position * vectorizer.width:(position + 1) * vectorizer.width] = (
                vectorizer.vector(joint)
            )
    if params.k is not None:
        k = min(params.k, len(successful))
    elif len(successful) < 3:
        k = 1
    else:
        k = pick_k(matrix, range(params.k_range[0], params.k_range[1] + 1), seed=params.seed)
    labels, _, _ = kmeans(matrix, k, seed=params.seed)

    goals: list[ImplicitGoal] = []
    episode_cluster = {
        ep.episode_id: int(labels[i]) for i, ep in enumerate(successful)
    }
    for cluster in sorted(set(int(l) for l in labels)):
        rows = [i for i in range(len(successful)) if labels[i] == cluster]
        # Per-position within-cluster variance over the one-hot vectors;
        # ties resolve to the latest position so terminal observations win.
        block = matrix[rows].reshape(len(rows), positions, vectorizer.width)
        variance = ((block - block.mean(axis=0, keepdims=True)) ** 2).sum(axis=2).mean(axis=0)
        best_position = int(max(range(positions), key=lambda s: (-(variance[s]), s)))
        cluster_seqs = [sequences[i] for i in rows]
        minvar_obs = _distinct(
            _obs_at(seq, best_position, positions, sampled) for seq in cluster_seqs
        )
        terminal_position = positions - 1
        terminal_obs = _distinct(seq[-1] for seq in cluster_seqs)
        goals.append(
            ImplicitGoal(
                id=f"goal_{len(goals)}",
                joint_observations=minvar_obs,
                cluster=cluster,
                typical_step=best_position,
                of_positions=positions,
                sampled=sampled,
            )
        )
        if best_position != terminal_position or minvar_obs != terminal_obs:
            goals.append(
                ImplicitGoal(
                    id=f"goal_{len(goals)}",
                    joint_observations=terminal_obs,
                    cluster=cluster,
                    typical_step=terminal_position,
                    of_positions=positions,
                    sampled=sampled,
                )
            )
    return goals, episode_cluster, graph, k


def _distinct(items) -> tuple[tuple[str, ...], ...]:
    seen = []
    for item in items:
        if item not in seen:
            seen.append(item)
    return tuple(sorted(seen))


def _transition_graph(sequences: list[list[tuple[str, ...]]]) -> TransitionGraph:
    nodes: list[tuple[str, ...]] = []
    index: dict[tuple[str, ...], int] = {}
    edges: dict[tuple[int, int], int] = {}
    for seq in sequences:
        for joint in seq:
            if joint not in index:
                index[joint] = len(nodes)
                nodes.append(joint)
        for a, b in zip(seq, seq[1:]):
            key = (index[a], index[b])
            edges[key] = edges.get(key, 0) + 1
    return TransitionGraph(nodes=nodes, edges=edges)


def infer_plans(goals: list[ImplicitGoal], episode_cluster: dict[int, int]) -> list[Plan]:
    """Sequence plans inside each trajectory cluster; clusters whose goal
    sequences end in the same terminal observation set fold into a choice
    plan. Plan heads are synthetic `reach_*` goals so that no goal is
    reachable from itself; the parallel operator is never emitted."""
    by_cluster: dict[int, list[ImplicitGoal]] = {}
    for goal in goals:
        by_cluster.setdefault(goal.cluster, []).append(goal)
    sequences: list[tuple[int, list[ImplicitGoal]]] = []
    for cluster in sorted(by_cluster):
        ordered = sorted(by_cluster[cluster], key=lambda g: (g.typical_step, g.id))
        sequences.append((cluster, ordered))
    # Group clusters by their terminal goal's observation set.
    by_terminal: dict[tuple, list[tuple[int, list[ImplicitGoal]]]] = {}
    for cluster, ordered in sequences:
        by_terminal.setdefault(ordered[-1].joint_observations, []).append((cluster, ordered))
    plans: list[Plan] = []
    for group_idx, terminal in enumerate(
        sorted(by_terminal, key=lambda t: by_terminal[t][0][0])
    ):
        group = by_terminal[terminal]
        branches: list[Plan | str] = []
        for cluster, ordered in group:
            if len(ordered) == 1:
                branches.append(ordered[0].id)
            else:
                branches.append(
                    Plan(
                        head=f"path_{cluster}",
                        op="sequence",
                        children=tuple(g.id for g in ordered),
                    )
                )
        head = f"reach_{group[0][1][-1].id}"
        if len(branches) == 1 and isinstance(branches[0], Plan):
            plans.append(branches[0])
        else:
            op = "choice" if len(branches) > 1 else "sequence"
            plans.append(Plan(head=head, op=op, children=tuple(branches)))
    return plans


# ---------------------------------------------------------------------------
# Stage 3: missions and deontic relations


def _achieved_goals(
    ep: JointHistory,
    goals: list[ImplicitGoal],
    vectorizer: _JointVectorizer,
    tolerance: float,
) -> set[str]:
    seq = _joint_observations(ep)
    if not seq:
        return set()
    out = set()
    for goal in goals:
        joint = _obs_at(seq, goal.typical_step, goal.of_positions, goal.sampled)
        if tolerance <= 0.0:
            hit = joint in goal.joint_observations
        else:
            norm = vectorizer.max_distance or 1.0
            hit = any(
                vectorizer.distance(joint, v) / norm <= tolerance
                for v in goal.joint_observations
            )
        if hit:
            out.add(goal.id)
    return out


def infer_missions_deontics(
    roles: list[ImplicitRole],
    goals: list[ImplicitGoal],
    logs: list[JointHistory],
    params: TemmParams = TemmParams(),
) -> tuple[list[ImplicitMission], list[ImplicitDeontic]]:
    successful = [ep for ep in logs if ep.success]
    if not successful or not goals:
        return [], []
    vectorizer = _JointVectorizer(successful)
    by_goal_set: dict[frozenset[str], list[MemberKey]] = {}
    member_achievements: dict[MemberKey, frozenset[str]] = {}
    for ep in sorted(successful, key=lambda e: e.episode_id):
        achieved = frozenset(_achieved_goals(ep, goals, vectorizer, params.goal_tolerance))
        if not achieved:
            continue
        for agent in ep.agents:
            key = (ep.episode_id, agent)
            by_goal_set.setdefault(achieved, []).append(key)
            member_achievements[key] = achieved
    missions = []
    mission_of_set: dict[frozenset[str], ImplicitMission] = {}
    for goal_set in sorted(by_goal_set, key=lambda s: sorted(s)):
        mission = ImplicitMission(
            id=f"mission_{len(missions)}",
            goals=tuple(sorted(goal_set)),
            members=tuple(sorted(by_goal_set[goal_set])),
        )
        missions.append(mission)
        mission_of_set[goal_set] = mission
    goal_steps = {g.id: g.typical_step for g in goals}
    deontics = []
    for role in roles:
        covered = [m for m in member_achievements if m in set(role.members)]
        if not covered:
            continue
        achieved_sets = {member_achievements[m] for m in covered}
        for goal_set in sorted(achieved_sets, key=lambda s: sorted(s)):
            mission = mission_of_set[goal_set]
            outside = any(
                member_achievements[m] - goal_set for m in covered
            )
            steps = [goal_steps[g] for g in mission.goals]
            deontics.append(
                ImplicitDeontic(
                    role=role.id,
                    mission=mission.id,
                    kind="permission" if outside else "obligation",
                    window=(min(steps), max(steps)),
                )
            )
    return missions, deontics


# ---------------------------------------------------------------------------
# Organizational fit


def organizational_fit(
    logs: list[JointHistory],
    roles: list[ImplicitRole],
    goals: list[ImplicitGoal],
) -> tuple[float, float, float, dict[str, float]]:
    """(structural, functional, total, per-agent structural breakdown)."""
    structural_scores: list[float] = []
    per_agent: dict[str, list[float]] = {}
    role_masks = [(r, build_lcs_masks(r.cls)) for r in roles if len(r.cls)]
    for ep in sorted(logs, key=lambda e: e.episode_id):
        for agent in ep.agents:
            history = ep.histories[agent]
            best = None
            for role, masks in role_masks:
                overlap = lcs_length_with_masks(masks, len(role.cls), history)
                longest = max(len(history), len(role.cls))
                distance = 1.0 - (overlap / longest if longest else 0.0)
                if best is None or distance < best[0]:
                    best = (distance, overlap / len(role.cls))
            if best is None:
                continue
            structural_scores.append(best[1])
            per_agent.setdefault(agent, []).append(best[1])
    structural = float(np.mean(structural_scores)) if structural_scores else 0.0

    functional_scores: list[float] = []
    if goals:
        all_eps = sorted(logs, key=lambda e: e.episode_id)
        vectorizer = _JointVectorizer(all_eps)
        norm = vectorizer.max_distance or 1.0
        # The yardstick at every checkpoint is the nearest mined goal
        # observation over all goals, so fit measures how close behavior
        # comes to some inferred goal state at each typical step.
        universe = tuple({v for g in goals for v in g.joint_observations})
        for ep in all_eps:
            seq = _joint_observations(ep)
            if not seq:
                continue
            per_goal = []
            for goal in goals:
                joint = _obs_at(seq, goal.typical_step, goal.of_positions, goal.sampled)
                nearest = min(vectorizer.distance(joint, v) for v in universe)
                per_goal.append(1.0 - nearest / norm)
            functional_scores.append(float(np.mean(per_goal)))
    functional = float(np.mean(functional_scores)) if functional_scores else 0.0
    total = (structural + functional) / 2.0
    breakdown = {agent: float(np.mean(vals)) for agent, vals in per_agent.items()}
    return structural, functional, total, breakdown


# ---------------------------------------------------------------------------
# Pipeline and exports


def run_temm(logs: list[JointHistory], params: TemmParams = TemmParams()) -> tuple[TemmReport, Dendrogram, TransitionGraph | None]:
    roles, dendrogram = infer_roles(logs, params)
    notes = []
    chosen_k = None
    try:
        goals, episode_cluster, graph, chosen_k = infer_goals(logs, params)
        plans = infer_plans(goals, episode_cluster)
        missions, deontics = infer_missions_deontics(roles, goals, logs, params)
    except InsufficientDataError as err:
        notes.append(f"goal inference skipped: {err}")
        goals, plans, missions, deontics, graph = [], [], [], [], None
    structural, functional, total, breakdown = organizational_fit(logs, roles, goals)
    report = TemmReport(
        roles=roles,
        goals=goals,
        plans=plans,
        missions=missions,
        deontics=deontics,
        structural_fit=structural,
        functional_fit=functional,
        org_fit=total,
        per_agent_fit=breakdown,
        params=params,
        chosen_k=chosen_k,
        notes=notes,
    )
    return report, dendrogram, graph


def dendrogram_dot(dendrogram: Dendrogram, roles: list[ImplicitRole]) -> str:
    lines = ["digraph dendrogram {", "  rankdir=BT;"]
    for i, leaf in enumerate(dendrogram.leaves):
        ep, agent = leaf
        lines.append(f'  n{i} [shape=box, label="ep{ep}/{agent}"];')
    for m in dendrogram.merges:
        lines.append(f'  n{m.new_id} [label="h={m.height:.3f}"];')
        lines.append(f"  n{m.left} -> n{m.new_id};")
        lines.append(f"  n{m.right} -> n{m.new_id};")
    for role in roles:
        lines.append(f'  {role.id} [shape=ellipse, style=filled, label="{role.id}"];')
        for parent in sorted(role.parents):
            lines.append(f"  {role.id} -> {parent} [style=dashed];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def transitions_dot(graph: TransitionGraph) -> str:
    lines = ["digraph transitions {"]
    for i, node in enumerate(graph.nodes):
        label = "|".join(node)
        lines.append(f'  n{i} [label="{label}"];')
    for (a, b), count in sorted(graph.edges.items()):
        lines.append(f'  n{a} -> n{b} [label="{count}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def inferred_orgspec(report: TemmReport) -> OrgSpec:
    """Project the mined structure onto the declarative spec schema."""
    roles = tuple(
        Role(name=r.id, parents=r.parents) for r in report.roles
    )
    goal_names = [g.id for g in report.goals]
    # Synthetic plan-head goals introduced by infer_plans.
    def heads(plan: Plan) -> list[str]:
        out = [plan.head]
        for child in plan.children:
            if isinstance(child, Plan):
                out.extend(heads(child))
        return out

    for plan in report.plans:
        for name in heads(plan):
            if name not in goal_names:
                goal_names.append(name)
    goals = tuple(Goal(name=name) for name in goal_names)
    missions = tuple(
        Mission(
            name=m.id,
            goals=tuple((g, 1.0) for g in m.goals),
            agent_cardinality=(1, max(1, len(m.members))),
        )
        for m in report.missions
    )
    deontic = tuple(
        DeonticRelation(
            role=d.role,
            mission=d.mission,
            kind=d.kind,
            time_constraint=(Interval(d.window[0], d.window[1]),),
        )
        for d in report.deontics
    )
    return OrgSpec(
        roles=roles,
        goals=goals,
        plans=tuple(report.plans),
        missions=missions,
        deontic=deontic,
    )


def save_report(report: TemmReport, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def save_inferred_spec(report: TemmReport, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(spec_to_dict(inferred_orgspec(report)), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )

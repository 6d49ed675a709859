"""Organizational enforcement layer: per-turn action masking and reward
reshaping driven by a spec plus linkers.

`Reshaper` holds the per-agent histories and does the math; `OrgWrapper`
couples a reshaper to an inner environment. The bridge server reuses the
reshaper directly so in-process and wire-mediated reshaping share one code
path.

Per turn, the acting agent's role is queried: the action guide yields an
allowed set and a hardness `ch`; the mask is enforced with probability
`ch`. After the action, the reward becomes::

    raw + mission_bonus(h_after, t) + (1 - ch) * role_penalty(h_before, obs, action)

where the penalty applies only when the action falls outside the allowed
set.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from ..guides import ALL, EPSILON, GuideConfigError, Linkers, _AllActions
from ..orgspec import ANY_TIME, OrgSpec, ancestor_roles, rds_lookup
from ..patterns import match_ends_at, matches_empty
from ..trajectory import History
from .base import DecPomdp, ProtocolError, StepOutcome


def is_all(mask) -> bool:
    return isinstance(mask, _AllActions)


@dataclass
class TurnVerdict:
    allowed: frozenset[str] | _AllActions
    hardness: float
    enforced: bool


class Reshaper:
    """Stateful per-episode reshaping engine for one team."""

    def __init__(self, spec: OrgSpec, linkers: Linkers, seed: int = 0):
        self.spec = spec
        self.linkers = linkers
        self.histories: dict[str, list] = {}
        self.t = 0
        self._rng = random.Random(seed)
        self._verdict: tuple[int, str, TurnVerdict] | None = None
        self._fast_tables: dict[str, dict | None] = {}
        self._static_relations: dict[str, list | None] = {}
        self._linked_goals: dict[str, list[tuple[str, object]]] = {}
        for role in set(linkers.ar.values()):
            guides = linkers.guides_for_role(role)
            if guides.action_guide is not None:
                self._fast_tables[role] = guides.action_guide.fast_table()
            lineage = ancestor_roles(spec, role)
            relations = [rel for rel in spec.deontic if rel.role in lineage]
            # Time-invariant deontic banks are resolved once.
            static = all(rel.time_constraint is ANY_TIME for rel in relations)
            self._static_relations[role] = relations if static else None
        for agent, role in linkers.ar.items():
            lineage = ancestor_roles(spec, role)
            goals: dict[str, object] = {}
            for rel in spec.deontic:
                if rel.role not in lineage:
                    continue
                try:
                    mission = spec.mission(rel.mission)
                except KeyError:
                    continue
                for goal, _ in mission.goals:
                    guide = linkers.gcg.get(goal)
                    if guide is None:
                        raise GuideConfigError(
                            f"goal {goal!r} of mission {rel.mission!r} has no reward guide"
                        )
                    goals[goal] = guide
            self._linked_goals[agent] = sorted(goals.items())
        self._fired: dict[tuple[str, str], bool] = {}
        self.reset(seed)

    def reset(self, seed: int) -> None:
        self.histories = {agent: [] for agent in self.linkers.ar}
        self.t = 0
        self._rng = random.Random(seed)
        self._verdict = None
        self._fired = {
            (agent, goal): matches_empty(guide.pattern)
            for agent, goals in self._linked_goals.items()
            for goal, guide in goals
        }

    def history(self, agent: str) -> History:
        return tuple(self.histories.get(agent, ()))

    # -- masking ------------------------------------------------------------

    def turn_verdict(self, agent: str, obs: str) -> TurnVerdict:
        """Mask decision for the current turn; the hardness draw happens at
        most once per turn no matter how often this is called."""
        if self._verdict is not None and self._verdict[0] == self.t and self._verdict[1] == agent:
            return self._verdict[2]
        role = self.linkers.role_of(agent)
        guides = self.linkers.guides_for_role(role)
        if guides.action_guide is None:
            verdict = TurnVerdict(ALL, 0.0, False)
        else:
            table = self._fast_tables.get(role)
            if table is not None:
                allowed, hardness = table.get(obs, (ALL, 0.0))
            else:
                allowed, hardness = guides.action_guide.query(
                    self.histories.get(agent, ()), obs
                )
            if allowed is ALL:
                verdict = TurnVerdict(ALL, 0.0, False)
            else:
                enforced = self._rng.random() < hardness
                verdict = TurnVerdict(allowed, hardness, enforced)
        self._verdict = (self.t, agent, verdict)
        return verdict

    # -- reward reshaping ---------------------------------------------------

    def apply_turn(
        self, agent: str, obs: str, action: str, raw_reward: float
    ) -> tuple[float, float, float, TurnVerdict]:
        """Advance one turn: returns (reward, penalty, bonus, verdict).

        Raises :class:`ProtocolError` when the enforced mask is violated;
        the caller re-samples within the mask and the hardness draw is kept
        for the retried turn.
        """
        verdict = self.turn_verdict(agent, obs)
        if verdict.enforced and action not in verdict.allowed:
            raise ProtocolError(
                f"action {action!r} outside enforced mask {sorted(verdict.allowed)} "
                f"for agent {agent!r}"
            )
        history = self.histories.setdefault(agent, [])
        penalty = 0.0
        guides = self.linkers.guides_for_role(self.linkers.role_of(agent))
        reward_guide = guides.reward_guide
        if reward_guide is not None and verdict.hardness < 1.0:
            if reward_guide.source is guides.action_guide:
                violated = not is_all(verdict.allowed) and action not in verdict.allowed
                raw_penalty = reward_guide.penalty if violated else 0.0
            else:
                raw_penalty = reward_guide.query(tuple(history), obs, action)
            penalty = (1.0 - verdict.hardness) * raw_penalty
        history.append((obs, action))
        bonus = self._mission_bonus(agent, self.t)
        self.t += 1
        self._verdict = None
        return raw_reward + penalty + bonus, penalty, bonus, verdict

    def _mission_bonus(self, agent: str, step: int) -> float:
        """Incremental equivalent of guides.mission_bonus on the running
        history: fired flags advance every turn, so a match consumed while
        no mission was temporally valid never pays later."""
        goals = self._linked_goals.get(agent)
        if not goals:
            return 0.0
        history = self.histories[agent]
        paying: dict[str, float] = {}
        for goal, guide in goals:
            key = (agent, goal)
            if self._fired[key]:
                if not guide.once_per_episode:
                    # Containment is monotone: once matched, a repeatable
                    # bonus keeps paying for the rest of the episode.
                    paying[goal] = guide.bonus
                continue
            if match_ends_at(guide.pattern, history):
                self._fired[key] = True
                paying[goal] = guide.bonus
        if not paying:
            return 0.0
        role = self.linkers.role_of(agent)
        relations = self._static_relations.get(role)
        if relations is None:
            relations = rds_lookup(self.spec, role, step)
        total = 0.0
        for rel in relations:
            mission = self.spec.mission(rel.mission)
            weighted = 0.0
            for goal, weight in mission.goals:
                value = paying.get(goal)
                if value is not None:
                    weighted += weight * value
            if weighted:
                total += weighted / (1.0 - rel.effective_priority + EPSILON)
        return total


class OrgWrapper(DecPomdp):
    """DecPomdp view of an inner environment plus a reshaping engine.

    With empty linkers the wrapper is bit-identical to the inner environment
    for the same seeds: no extra randomness is drawn and rewards pass
    through unchanged.
    """

    def __init__(self, inner: DecPomdp, spec: OrgSpec, linkers: Linkers, seed: int = 0):
        super().__init__()
        self.inner = inner
        self.agents = inner.agents
        self.gamma = inner.gamma
        self.horizon = inner.horizon
        self.reshaper = Reshaper(spec, linkers, seed)

    def obs_labels(self, agent: str) -> tuple[str, ...]:
        return self.inner.obs_labels(agent)

    def act_labels(self, agent: str) -> tuple[str, ...]:
        return self.inner.act_labels(agent)

    def noop_action(self, agent: str) -> str:
        return self.inner.noop_action(agent)

    @property
    def current_agent(self) -> str:
        return self.inner.current_agent

    @property
    def cycle(self) -> int:
        return self.inner.cycle

    @property
    def success(self) -> bool:
        return self.inner.success

    def reset(self, seed: int = 0) -> str:
        self.t = 0
        self.done = False
        obs = self.inner.reset(seed)
        self.reshaper.reset(seed)
        return obs

    def observe(self, agent: str | None = None) -> str:
        return self.inner.observe(agent)

    def action_mask(self, agent: str | None = None) -> tuple[frozenset[str] | _AllActions, bool]:
        """Allowed actions for the current turn and whether they are
        enforced; ``(ALL, False)`` for unconstrained turns."""
        who = self.inner.current_agent if agent is None else agent
        if who != self.inner.current_agent:
            raise ProtocolError(f"not {who!r}'s turn")
        verdict = self.reshaper.turn_verdict(who, self.inner.observe(who))
        return verdict.allowed, verdict.enforced

    def history(self, agent: str) -> History:
        return self.reshaper.history(agent)

    def step(self, action: str) -> StepOutcome:
        if self.done:
            raise ProtocolError("episode is over; call reset()")
        agent = self.inner.current_agent
        obs = self.inner.observe(agent)
        # Validate against the mask before the inner env advances, so a
        # rejected action leaves the whole stack untouched for a re-sample.
        verdict = self.reshaper.turn_verdict(agent, obs)
        if verdict.enforced and action not in verdict.allowed:
            raise ProtocolError(
                f"action {action!r} outside enforced mask {sorted(verdict.allowed)} "
                f"for agent {agent!r}"
            )
        outcome = self.inner.step(action)
        reward, penalty, bonus, verdict = self.reshaper.apply_turn(
            agent, obs, action, outcome.reward
        )
        self.t += 1
        self.done = outcome.done
        violation = (not is_all(verdict.allowed)) and action not in verdict.allowed
        return StepOutcome(
            obs=outcome.obs,
            reward=reward,
            done=outcome.done,
            info={
                "raw_reward": outcome.reward,
                "penalty": penalty,
                "bonus": bonus,
                "mask_applied": verdict.enforced,
                "constrained": not is_all(verdict.allowed),
                "violation": violation,
            },
        )


def wrap(env: DecPomdp, spec: OrgSpec | None, linkers: Linkers | None, seed: int = 0) -> DecPomdp:
    """Wrap when organizational bindings exist; otherwise pass through."""
    if spec is None or linkers is None or linkers.empty:
        return env
    return OrgWrapper(env, spec, linkers, seed)

"""Agent-environment-cycle contract for shared-reward multi-agent control.

Agents act sequentially and cyclically: the acting agent at turn t is
``agents[t % n]``. Every turn emits one global reward shared by the team.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping


class ProtocolError(RuntimeError):
    """AEC protocol misuse: acting out of turn, stepping a finished episode,
    or violating an enforced action mask."""


@dataclass
class StepOutcome:
    """Result of one agent turn.

    ``obs`` is the observation of the next agent to act. ``reward`` is the
    global shared reward, decomposed in ``info`` as
    ``reward == raw_reward + penalty + bonus`` exactly.
    """

    obs: str
    reward: float
    done: bool
    info: dict = field(default_factory=dict)


class DecPomdp:
    """Abstract AEC environment over finite label alphabets.

    Subclasses implement ``_reset_state``, ``_observe`` and ``_apply``;
    this base class owns the turn cycle, the horizon, and bookkeeping.
    """

    agents: tuple[str, ...]
    gamma: float = 0.95
    horizon: int = 100

    def __init__(self) -> None:
        self.t = 0
        self.done = True
        self._success = False

    # -- subclass surface ---------------------------------------------------

    def obs_labels(self, agent: str) -> tuple[str, ...]:
        raise NotImplementedError

    def act_labels(self, agent: str) -> tuple[str, ...]:
        raise NotImplementedError

    def noop_action(self, agent: str) -> str:
        """Action used when an agent is frozen by a perturbation suite."""
        labels = self.act_labels(agent)
        return "stay" if "stay" in labels else labels[0]

    def _reset_state(self, seed: int) -> None:
        raise NotImplementedError

    def _observe(self, agent: str) -> str:
        raise NotImplementedError

    def _apply(self, agent: str, action: str) -> tuple[float, bool]:
        """Advance the world for one agent turn; returns (reward, terminal)."""
        raise NotImplementedError

    # -- AEC driver ---------------------------------------------------------

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @property
    def current_agent(self) -> str:
        return self.agents[self.t % self.n_agents]

    @property
    def cycle(self) -> int:
        """Completed environment cycles (every agent acted once per cycle)."""
        return self.t // self.n_agents

    @property
    def success(self) -> bool:
        return self._success

    def reset(self, seed: int = 0) -> str:
        self.t = 0
        self.done = False
        self._success = False
        self._reset_state(seed)
        return self._observe(self.current_agent)

    def observe(self, agent: str | None = None) -> str:
        who = self.current_agent if agent is None else agent
        return self._observe(who)

    def step(self, action: str) -> StepOutcome:
        if self.done:
            raise ProtocolError("episode is over; call reset()")
        agent = self.current_agent
        if action not in self.act_labels(agent):
            raise ProtocolError(f"unknown action {action!r} for agent {agent!r}")
        reward, terminal = self._apply(agent, action)
        self.t += 1
        if terminal:
            self.done = True
            self._success = True
        elif self.cycle >= self.horizon:
            self.done = True
        return StepOutcome(
            obs=self._observe(self.current_agent),
            reward=reward,
            done=self.done,
            info={"raw_reward": reward, "penalty": 0.0, "bonus": 0.0, "mask_applied": False},
        )


def torus_delta(a: int, b: int, size: int) -> int:
    """Signed shortest displacement from a to b on a ring of length size."""
    d = (b - a) % size
    if d > size // 2:
        d -= size
    return d


def torus_distance(p: tuple[int, int], q: tuple[int, int], size: int) -> int:
    return abs(torus_delta(p[0], q[0], size)) + abs(torus_delta(p[1], q[1], size))


def direction_sector(dx: int, dy: int) -> str:
    """Compass sector of a displacement; 'adj' when within one king move."""
    if abs(dx) <= 1 and abs(dy) <= 1:
        return "adj"
    ns = "n" if dy < 0 else ("s" if dy > 0 else "")
    ew = "e" if dx > 0 else ("w" if dx < 0 else "")
    return ns + ew


MOVES: Mapping[str, tuple[int, int]] = {
    "up": (0, -1),
    "down": (0, 1),
    "left": (-1, 0),
    "right": (1, 0),
    "stay": (0, 0),
}

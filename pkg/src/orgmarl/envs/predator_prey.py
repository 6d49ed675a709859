"""Predator-Prey on a torus grid.

Predators (the learning agents) chase one scripted prey. The team earns the
capture reward when at least two predators are orthogonally adjacent to the
prey at once, which ends the episode; every agent turn costs the step cost.

Observations are `p<sector>_m<sector>`: the prey's direction sector plus the
nearest teammate's (9 values each, 8 compass sectors and 'adj'), an alphabet
of 81 labels. Actions are up/down/left/right/stay.

The prey is deterministic: once per cycle, after the last predator's turn,
it takes the move maximizing its minimum torus Manhattan distance to the
predators, ties broken in action order.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .base import DecPomdp, MOVES, direction_sector, torus_delta, torus_distance

SECTORS = ("n", "ne", "e", "se", "s", "sw", "w", "nw", "adj")
ACTIONS = ("up", "down", "left", "right", "stay")
PREY_MOVE_ORDER = ("up", "down", "left", "right", "stay")


@dataclass(frozen=True)
class PredatorPreyConfig:
    size: int = 7
    n_predators: int = 3
    horizon: int = 100
    capture_reward: float = 10.0
    step_cost: float = -0.1
    gamma: float = 0.95
    # Start-state shift used by the robustness perturbation suite.
    start_shift: tuple[int, int] = (0, 0)

    def __post_init__(self) -> None:
        if self.size < 4:
            raise ValueError(f"grid side must be >= 4, got {self.size}")
        if not (2 <= self.n_predators <= 4):
            raise ValueError(f"need 2-4 predators, got {self.n_predators}")


OBS_LABELS = tuple(f"p{p}_m{m}" for p in SECTORS for m in SECTORS)


class PredatorPreyEnv(DecPomdp):
    def __init__(self, config: PredatorPreyConfig | None = None):
        super().__init__()
        self.config = config or PredatorPreyConfig()
        self.agents = tuple(f"pred_{i}" for i in range(self.config.n_predators))
        self.gamma = self.config.gamma
        self.horizon = self.config.horizon
        self.positions: list[tuple[int, int]] = []
        self.prey: tuple[int, int] = (0, 0)

    def obs_labels(self, agent: str) -> tuple[str, ...]:
        return OBS_LABELS

    def act_labels(self, agent: str) -> tuple[str, ...]:
        return ACTIONS

    def _reset_state(self, seed: int) -> None:
        size = self.config.size
        rng = random.Random(seed)
        sx, sy = self.config.start_shift
        self.prey = ((size // 2 + sx) % size, (size // 2 + sy) % size)
        taken = {self.prey}
        self.positions = []
        for _ in self.agents:
            while True:
                pos = (
                    (rng.randrange(size) + sx) % size,
                    (rng.randrange(size) + sy) % size,
                )
                if pos not in taken and torus_distance(pos, self.prey, size) > 1:
                    taken.add(pos)
                    self.positions.append(pos)
                    break

    def _observe(self, agent: str) -> str:
        size = self.config.size
        idx = self.agents.index(agent)
        me = self.positions[idx]
        prey_sector = direction_sector(
            torus_delta(me[0], self.prey[0], size), torus_delta(me[1], self.prey[1], size)
        )
        best = None
        for j, other in enumerate(self.positions):
            if j == idx:
                continue
            d = torus_distance(me, other, size)
            if best is None or d < best[0]:
                best = (d, other)
        mate_sector = direction_sector(
            torus_delta(me[0], best[1][0], size), torus_delta(me[1], best[1][1], size)
        )
        return f"p{prey_sector}_m{mate_sector}"

    def _apply(self, agent: str, action: str) -> tuple[float, bool]:
        size = self.config.size
        idx = self.agents.index(agent)
        dx, dy = MOVES[action]
        target = ((self.positions[idx][0] + dx) % size, (self.positions[idx][1] + dy) % size)
        occupied = set(self.positions) - {self.positions[idx]}
        if target not in occupied and target != self.prey:
            self.positions[idx] = target
        reward = self.config.step_cost
        if self._captured():
            return reward + self.config.capture_reward, True
        if idx == self.n_agents - 1:
            self._move_prey()
            if self._captured():
                return reward + self.config.capture_reward, True
        return reward, False

    def _captured(self) -> bool:
        size = self.config.size
        adjacent = sum(
            1 for pos in self.positions if torus_distance(pos, self.prey, size) == 1
        )
        return adjacent >= 2

    def _move_prey(self) -> None:
        size = self.config.size
        occupied = set(self.positions)
        best_move = None
        best_score = None
        for name in PREY_MOVE_ORDER:
            dx, dy = MOVES[name]
            target = ((self.prey[0] + dx) % size, (self.prey[1] + dy) % size)
            if target in occupied:
                continue
            score = min(torus_distance(target, pos, size) for pos in self.positions)
            if best_score is None or score > best_score:
                best_score = score
                best_move = target
        if best_move is not None:
            self.prey = best_move


def predator_prey_env(config: dict | PredatorPreyConfig | None = None) -> PredatorPreyEnv:
    if isinstance(config, dict):
        config = PredatorPreyConfig(**config)
    return PredatorPreyEnv(config)

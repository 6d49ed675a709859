"""Warehouse delivery grid.

Agents shuttle items from the central depot to demand points while shelf
cells block movement. `pick` on the depot loads an item when empty-handed;
`drop` on a demand point while carrying scores a delivery. The episode
succeeds once the delivery quota is met, otherwise it runs to the horizon.

Observations are `c<flag>_t<sector>`: the carrying flag plus the direction
sector of the current target (depot when empty, nearest demand point when
carrying), 18 labels. The `adj` sector means standing on the target cell,
which is where pick/drop succeed; neighbors see a compass sector. Actions
are up/down/left/right/pick/drop.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .base import DecPomdp, MOVES

SECTORS = ("n", "ne", "e", "se", "s", "sw", "w", "nw", "adj")
ACTIONS = ("up", "down", "left", "right", "pick", "drop")

OBS_LABELS = tuple(f"c{c}_t{s}" for c in (0, 1) for s in SECTORS)


@dataclass(frozen=True)
class WarehouseConfig:
    size: int = 6
    n_agents: int = 2
    horizon: int = 200
    delivery_reward: float = 5.0
    step_cost: float = -0.05
    delivery_quota: int = 2
    gamma: float = 0.95
    start_shift: tuple[int, int] = (0, 0)

    def __post_init__(self) -> None:
        if self.size < 5:
            raise ValueError(f"grid side must be >= 5, got {self.size}")
        if self.n_agents < 1:
            raise ValueError("need at least one agent")


class WarehouseEnv(DecPomdp):
    def __init__(self, config: WarehouseConfig | None = None):
        super().__init__()
        self.config = config or WarehouseConfig()
        size = self.config.size
        self.agents = tuple(f"agent_{i}" for i in range(self.config.n_agents))
        self.gamma = self.config.gamma
        self.horizon = self.config.horizon
        self.depot = (size // 2, size // 2)
        self.demands = ((1, 1), (size - 2, size - 2))
        # Shelving: two fixed aisle segments that never cover the depot,
        # demand points, or the whole of any row.
        self.shelves = frozenset(
            p
            for p in ((1, size - 2), (2, size - 2), (size - 2, 1), (size - 3, 1))
            if p != self.depot and p not in self.demands
        )
        self.positions: list[tuple[int, int]] = []
        self.carrying: list[bool] = []
        self.delivered = 0

    def obs_labels(self, agent: str) -> tuple[str, ...]:
        return OBS_LABELS

    def act_labels(self, agent: str) -> tuple[str, ...]:
        return ACTIONS

    def noop_action(self, agent: str) -> str:
        return "pick"

    def _free_cells(self) -> list[tuple[int, int]]:
        size = self.config.size
        return [
            (x, y)
            for x in range(size)
            for y in range(size)
            if (x, y) not in self.shelves
        ]

    def _reset_state(self, seed: int) -> None:
        rng = random.Random(seed)
        size = self.config.size
        sx, sy = self.config.start_shift
        cells = self._free_cells()
        self.positions = []
        taken = set()
        for _ in self.agents:
            while True:
                x, y = cells[rng.randrange(len(cells))]
                pos = ((x + sx) % size, (y + sy) % size)
                if pos not in taken and pos not in self.shelves:
                    taken.add(pos)
                    self.positions.append(pos)
                    break
        self.carrying = [False] * self.n_agents
        self.delivered = 0

    def _target(self, idx: int) -> tuple[int, int]:
        if not self.carrying[idx]:
            return self.depot
        me = self.positions[idx]
        return min(
            self.demands,
            key=lambda d: (abs(d[0] - me[0]) + abs(d[1] - me[1]), d),
        )

    @staticmethod
    def _sector(dx: int, dy: int) -> str:
        if dx == 0 and dy == 0:
            return "adj"
        ns = "n" if dy < 0 else ("s" if dy > 0 else "")
        ew = "e" if dx > 0 else ("w" if dx < 0 else "")
        return ns + ew

    def _observe(self, agent: str) -> str:
        idx = self.agents.index(agent)
        me = self.positions[idx]
        target = self._target(idx)
        sector = self._sector(target[0] - me[0], target[1] - me[1])
        return f"c{int(self.carrying[idx])}_t{sector}"

    def _apply(self, agent: str, action: str) -> tuple[float, bool]:
        size = self.config.size
        idx = self.agents.index(agent)
        me = self.positions[idx]
        reward = self.config.step_cost
        if action in MOVES and action != "stay":
            dx, dy = MOVES[action]
            target = (me[0] + dx, me[1] + dy)
            blocked = (
                not (0 <= target[0] < size and 0 <= target[1] < size)
                or target in self.shelves
                or target in (p for j, p in enumerate(self.positions) if j != idx)
            )
            if not blocked:
                self.positions[idx] = target
        elif action == "pick":
            if not self.carrying[idx] and me == self.depot:
                self.carrying[idx] = True
        elif action == "drop":
            if self.carrying[idx] and me in self.demands:
                self.carrying[idx] = False
                self.delivered += 1
                reward += self.config.delivery_reward
        return reward, self.delivered >= self.config.delivery_quota


def warehouse_env(config: dict | WarehouseConfig | None = None) -> WarehouseEnv:
    if isinstance(config, dict):
        config = WarehouseConfig(**config)
    return WarehouseEnv(config)

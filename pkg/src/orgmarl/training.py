"""Desk-scale trainers over label alphabets: independent tabular Q-learning
and tabular REINFORCE, plus greedy policy evaluation with trajectory and
violation logging.

Observations are table keys directly; no function approximation. Masked
turns restrict both exploration (uniform over the mask) and greedy choice.
"""

from __future__ import annotations

import csv
import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path

from .envs.base import DecPomdp
from .trajectory import JointHistory, write_trajectory_log

ALGORITHMS = ("iql", "reinforce")


def episode_seed(base: int, episode: int) -> int:
    """Per-episode reseeding rule, shared with the bridge protocol."""
    return base * 1_000_003 + episode


@dataclass(frozen=True)
class TrainConfig:
    algorithm: str = "iql"
    episodes: int = 1000
    lr: float = 0.1
    gamma: float = 0.95
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_episodes: int | None = None  # default: 80% of episodes
    baseline_window: int = 50  # reinforce return baseline
    seed: int = 0

    def __post_init__(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if not (0.0 <= self.gamma < 1.0):
            raise ValueError(f"gamma {self.gamma} outside [0, 1)")
        if self.eps_end > self.eps_start:
            raise ValueError("epsilon schedule must be non-increasing")

    def epsilon(self, episode: int) -> float:
        span = self.eps_decay_episodes or max(1, int(self.episodes * 0.8))
        frac = min(1.0, episode / span)
        return self.eps_start + (self.eps_end - self.eps_start) * frac


@dataclass
class TabularPolicy:
    """Per-agent table mapping observation labels to action scores.

    ``kind`` is "q" for action values or "prob" for action probabilities.
    Greedy selection breaks ties toward the lowest action index and never
    leaves the provided pool.
    """

    actions: tuple[str, ...]
    table: dict[str, list[float]] = field(default_factory=dict)
    kind: str = "q"

    def row(self, obs: str) -> list[float]:
        got = self.table.get(obs)
        if got is None:
            got = [0.0] * len(self.actions)
        return got

    def greedy(self, obs: str, pool: list[int] | None = None) -> str:
        row = self.row(obs)
        indices = pool if pool is not None else range(len(self.actions))
        best = None
        best_value = -math.inf
        for i in indices:
            if row[i] > best_value:
                best = i
                best_value = row[i]
        return self.actions[best]


JointPolicy = dict[str, TabularPolicy]


def save_policy(policies: JointPolicy, path: str | Path) -> None:
    doc = {
        "version": 1,
        "agents": {
            agent: {
                "kind": p.kind,
                "actions": list(p.actions),
                "table": {obs: list(row) for obs, row in sorted(p.table.items())},
            }
            for agent, p in sorted(policies.items())
        },
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_policy(path: str | Path) -> JointPolicy:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("version") != 1:
        raise ValueError(f"unsupported policy document version {doc.get('version')!r}")
    return {
        agent: TabularPolicy(
            actions=tuple(entry["actions"]),
            table={obs: [float(x) for x in row] for obs, row in entry["table"].items()},
            kind=entry.get("kind", "q"),
        )
        for agent, entry in doc["agents"].items()
    }


@dataclass
class TrainResult:
    policies: JointPolicy
    curve: list[float]


def save_curve(curve: list[float], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["episode", "cumulative_reward"])
        for i, value in enumerate(curve):
            writer.writerow([i, repr(value)])


def load_curve(path: str | Path) -> list[float]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        return [float(row[1]) for row in reader]


def _action_pool(env: DecPomdp, agent: str, act_index: dict[str, int]) -> tuple[list[int], bool]:
    masker = getattr(env, "action_mask", None)
    if masker is None:
        return list(range(len(act_index))), False
    mask, enforced = masker()
    if not enforced:
        return list(range(len(act_index))), False
    pool = sorted(act_index[a] for a in mask if a in act_index)
    if not pool:
        raise RuntimeError(f"enforced mask leaves agent {agent!r} without actions")
    return pool, True


def train(env: DecPomdp, config: TrainConfig) -> TrainResult:
    if config.algorithm == "iql":
        return _train_iql(env, config)
    return _train_reinforce(env, config)


def _train_iql(env: DecPomdp, config: TrainConfig) -> TrainResult:
    rng = random.Random(episode_seed(config.seed, 0) ^ 0x5EED)
    agents = env.agents
    act_labels = {a: env.act_labels(a) for a in agents}
    act_index = {a: {act: i for i, act in enumerate(act_labels[a])} for a in agents}
    q: dict[str, dict[str, list[float]]] = {a: {} for a in agents}
    lr, gamma = config.lr, config.gamma
    curve: list[float] = []

    for episode in range(config.episodes):
        eps = config.epsilon(episode)
        env.reset(episode_seed(config.seed, episode))
        pending: dict[str, list | None] = {a: None for a in agents}
        ep_reward = 0.0
        while not env.done:
            agent = env.current_agent
            obs = env.observe()
            table = q[agent]
            row = table.get(obs)
            if row is None:
                row = table[obs] = [0.0] * len(act_labels[agent])
            pool, _ = _action_pool(env, agent, act_index[agent])
            # Close out this agent's previous transition now that its next
            # observation is known.
            prev = pending[agent]
            if prev is not None:
                prev_row, prev_ai, acc = prev
                target = acc + gamma * max(row)
                prev_row[prev_ai] += lr * (target - prev_row[prev_ai])
            if rng.random() < eps:
                ai = pool[rng.randrange(len(pool))]
            else:
                ai = _argmax(row, pool)
            outcome = env.step(act_labels[agent][ai])
            reward = outcome.reward
            ep_reward += reward
            pending[agent] = [row, ai, 0.0]
            for slot in pending.values():
                if slot is not None:
                    slot[2] += reward
        terminal = env.success
        for agent, slot in pending.items():
            if slot is None:
                continue
            prev_row, prev_ai, acc = slot
            if terminal:
                target = acc
            else:
                # Horizon truncation: bootstrap from the agent's last state.
                next_row = q[agent].get(env.observe(agent))
                target = acc + gamma * (max(next_row) if next_row else 0.0)
            prev_row[prev_ai] += lr * (target - prev_row[prev_ai])
        curve.append(ep_reward)

    policies = {
        a: TabularPolicy(actions=act_labels[a], table=q[a], kind="q") for a in agents
    }
    return TrainResult(policies=policies, curve=curve)


def _train_reinforce(env: DecPomdp, config: TrainConfig) -> TrainResult:
    rng = random.Random(episode_seed(config.seed, 0) ^ 0x5EED)
    agents = env.agents
    act_labels = {a: env.act_labels(a) for a in agents}
    act_index = {a: {act: i for i, act in enumerate(act_labels[a])} for a in agents}
    theta: dict[str, dict[str, list[float]]] = {a: {} for a in agents}
    lr, gamma = config.lr, config.gamma
    curve: list[float] = []
    recent_returns: dict[str, list[float]] = {a: [] for a in agents}

    for episode in range(config.episodes):
        env.reset(episode_seed(config.seed, episode))
        steps: dict[str, list[tuple[list[float], int, list[int]]]] = {a: [] for a in agents}
        rewards: dict[str, list[float]] = {a: [] for a in agents}
        ep_reward = 0.0
        while not env.done:
            agent = env.current_agent
            obs = env.observe()
            table = theta[agent]
            row = table.get(obs)
            if row is None:
                row = table[obs] = [0.0] * len(act_labels[agent])
            pool, _ = _action_pool(env, agent, act_index[agent])
            probs = _softmax(row, pool)
            ai = pool[_sample(probs, rng)]
            outcome = env.step(act_labels[agent][ai])
            reward = outcome.reward
            ep_reward += reward
            steps[agent].append((row, ai, pool))
            rewards[agent].append(0.0)
            for acc in rewards.values():
                if acc:
                    acc[-1] += reward
        for agent in agents:
            if not steps[agent]:
                continue
            returns = []
            g = 0.0
            for r in reversed(rewards[agent]):
                g = r + gamma * g
                returns.append(g)
            returns.reverse()
            window = recent_returns[agent][-config.baseline_window:]
            baseline = sum(window) / len(window) if window else 0.0
            recent_returns[agent].append(returns[0])
            for (row, ai, pool), g in zip(steps[agent], returns):
                advantage = g - baseline
                probs = _softmax(row, pool)
                for k, idx in enumerate(pool):
                    indicator = 1.0 if idx == ai else 0.0
                    row[idx] += lr * advantage * (indicator - probs[k])
        curve.append(ep_reward)

    policies = {}
    for a in agents:
        table = {}
        for obs, row in theta[a].items():
            probs = _softmax(row, list(range(len(row))))
            table[obs] = probs
        policies[a] = TabularPolicy(actions=act_labels[a], table=table, kind="prob")
    return TrainResult(policies=policies, curve=curve)


def _argmax(row: list[float], pool: list[int]) -> int:
    best = pool[0]
    best_value = row[best]
    for i in pool[1:]:
        if row[i] > best_value:
            best = i
            best_value = row[i]
    return best


def _softmax(row: list[float], pool: list[int]) -> list[float]:
    peak = max(row[i] for i in pool)
    exps = [math.exp(row[i] - peak) for i in pool]
    total = sum(exps)
    return [e / total for e in exps]


def _sample(probs: list[float], rng: random.Random) -> int:
    u = rng.random()
    acc = 0.0
    for i, p in enumerate(probs):
        acc += p
        if u < acc:
            return i
    return len(probs) - 1


# ---------------------------------------------------------------------------
# Evaluation


@dataclass
class EpisodeRecord:
    episode_id: int
    ret: float
    turns: int
    success: bool
    joint: JointHistory
    violations: list[tuple[int, str, str, str]] = field(default_factory=list)


@dataclass
class EvalLog:
    episodes: list[EpisodeRecord]

    def joint_histories(self) -> list[JointHistory]:
        return [e.joint for e in self.episodes]

    def successful(self) -> list[JointHistory]:
        return [e.joint for e in self.episodes if e.success]

    def returns(self) -> list[float]:
        return [e.ret for e in self.episodes]

    def violation_turns(self) -> int:
        return sum(len(e.violations) for e in self.episodes)

    def total_turns(self) -> int:
        return sum(e.turns for e in self.episodes)

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        write_trajectory_log(directory / "trajectories.log", self.joint_histories())
        with open(directory / "episodes.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["episode_id", "return", "turns", "success"])
            for e in self.episodes:
                writer.writerow([e.episode_id, repr(e.ret), e.turns, int(e.success)])
        with open(directory / "violations.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["episode_id", "turn", "agent", "obs", "action"])
            for e in self.episodes:
                for turn, agent, obs, action in e.violations:
                    writer.writerow([e.episode_id, turn, agent, obs, action])

    @staticmethod
    def load(directory: str | Path) -> "EvalLog":
        from .trajectory import read_trajectory_log

        directory = Path(directory)
        meta: dict[int, tuple[float, int, bool]] = {}
        with open(directory / "episodes.csv", newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            next(reader)
            for row in reader:
                meta[int(row[0])] = (float(row[1]), int(row[2]), bool(int(row[3])))
        violations: dict[int, list] = {}
        vpath = directory / "violations.csv"
        if vpath.exists():
            with open(vpath, newline="", encoding="utf-8") as fh:
                reader = csv.reader(fh)
                next(reader)
                for row in reader:
                    violations.setdefault(int(row[0]), []).append(
                        (int(row[1]), row[2], row[3], row[4])
                    )
        joints = read_trajectory_log(
            directory / "trajectories.log",
            success={ep: flags[2] for ep, flags in meta.items()},
        )
        episodes = []
        for joint in joints:
            ret, turns, success = meta[joint.episode_id]
            episodes.append(
                EpisodeRecord(
                    episode_id=joint.episode_id,
                    ret=ret,
                    turns=turns,
                    success=success,
                    joint=joint,
                    violations=violations.get(joint.episode_id, []),
                )
            )
        return EvalLog(episodes=episodes)


def evaluate(
    env: DecPomdp,
    policies: JointPolicy,
    episodes: int,
    seed: int = 0,
    obs_noise: float = 0.0,
    freeze_agent: str | None = None,
) -> EvalLog:
    """Greedy rollouts without learning.

    Records per-agent histories, per-episode returns, success flags, and
    every constrained turn whose action fell outside the allowed set.
    ``obs_noise`` and ``freeze_agent`` support the robustness perturbation
    suite: noisy labels only affect the policy's input, never the log.
    """
    agents = env.agents
    for agent in agents:
        policy = policies.get(agent)
        if policy is None:
            raise ValueError(f"no policy for agent {agent!r}")
        if policy.actions != env.act_labels(agent):
            raise ValueError(f"policy/environment action alphabet mismatch for {agent!r}")
    act_index = {a: {act: i for i, act in enumerate(env.act_labels(a))} for a in agents}
    noise_rng = random.Random(seed ^ 0xA0B1)
    records = []
    for episode in range(episodes):
        env.reset(episode_seed(seed, episode))
        histories: dict[str, list] = {a: [] for a in agents}
        violations: list[tuple[int, str, str, str]] = []
        ep_reward = 0.0
        turns = 0
        while not env.done:
            agent = env.current_agent
            obs = env.observe()
            seen = obs
            if obs_noise > 0.0 and noise_rng.random() < obs_noise:
                alphabet = env.obs_labels(agent)
                seen = alphabet[noise_rng.randrange(len(alphabet))]
            pool, enforced = _action_pool(env, agent, act_index[agent])
            if freeze_agent == agent:
                noop = env.noop_action(agent)
                ai = act_index[agent].get(noop, pool[0])
                if ai not in pool:
                    ai = pool[0]
                action = env.act_labels(agent)[ai]
            else:
                action = policies[agent].greedy(seen, pool if enforced else None)
            outcome = env.step(action)
            histories[agent].append((obs, action))
            if outcome.info.get("violation"):
                violations.append((turns, agent, obs, action))
            ep_reward += outcome.reward
            turns += 1
        records.append(
            EpisodeRecord(
                episode_id=episode,
                ret=ep_reward,
                turns=turns,
                success=env.success,
                joint=JointHistory(
                    episode_id=episode,
                    histories={a: tuple(h) for a, h in histories.items()},
                    success=env.success,
                ),
                violations=violations,
            )
        )
    return EvalLog(episodes=records)

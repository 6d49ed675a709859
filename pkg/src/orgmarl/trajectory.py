"""Histories, label maps, longest-common-subsequence utilities, and the
canonical trajectory log format.

A history is an immutable sequence of ``(observation_label, action_label)``
pairs. Labels are plain strings drawn from an environment's registered
alphabets; ``LabelMap`` translates raw observation/action encodings into
labels at the boundary with external environments.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

Step = tuple[str, str]
History = tuple[Step, ...]

LABEL_RE = re.compile(r"[A-Za-z0-9_#.|-]+$")


class TrajectoryError(ValueError):
    """Malformed history, label, or log record."""


def check_label(text: str) -> str:
    if not text or not LABEL_RE.match(text):
        raise TrajectoryError(f"invalid label: {text!r}")
    return text


@dataclass(frozen=True)
class LabelMap:
    """Mapping from raw observation/action encodings to labels.

    Must be injective on each side so that distinct encodings never collapse
    onto the same label.
    """

    obs_labels: Mapping[object, str]
    act_labels: Mapping[object, str]

    def __post_init__(self) -> None:
        for name, side in (("obs", self.obs_labels), ("act", self.act_labels)):
            seen: dict[str, object] = {}
            for raw, label in side.items():
                check_label(label)
                if label in seen:
                    raise TrajectoryError(
                        f"{name} label map not injective: {seen[label]!r} and "
                        f"{raw!r} both map to {label!r}"
                    )
                seen[label] = raw

    def obs(self, raw: object) -> str:
        try:
            return self.obs_labels[raw]
        except KeyError:
            raise TrajectoryError(f"unmapped observation encoding: {raw!r}") from None

    def act(self, raw: object) -> str:
        try:
            return self.act_labels[raw]
        except KeyError:
            raise TrajectoryError(f"unmapped action encoding: {raw!r}") from None


@dataclass(frozen=True)
class JointHistory:
    """Per-team collection of agent histories from one episode.

    Histories come from the same episode; in AEC terms their lengths differ
    by at most one when the episode ends mid-cycle.
    """

    episode_id: int
    histories: Mapping[str, History] = field(hash=False)
    success: bool = False

    def __post_init__(self) -> None:
        if not self.histories:
            raise TrajectoryError("joint history needs at least one agent")
        lengths = [len(h) for h in self.histories.values()]
        if max(lengths) - min(lengths) > 1:
            raise TrajectoryError(
                f"episode {self.episode_id}: agent history lengths {lengths} "
                "differ by more than one AEC turn"
            )

    @property
    def agents(self) -> list[str]:
        return sorted(self.histories)


# ---------------------------------------------------------------------------
# Longest common subsequence


def lcs(a: Sequence, b: Sequence) -> tuple:
    """One longest (not necessarily contiguous) common subsequence of a and b.

    Among all maximum-length common subsequences, returns the one whose
    element positions in ``a`` are lexicographically earliest, so the result
    is deterministic.
    """
    n, m = len(a), len(b)
    # Suffix table: length of LCS of a[i:] and b[j:].
    table = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n - 1, -1, -1):
        row, below = table[i], table[i + 1]
        ai = a[i]
        for j in range(m - 1, -1, -1):
            if ai == b[j]:
                row[j] = below[j + 1] + 1
            else:
                bj = below[j]
                rj = row[j + 1]
                row[j] = bj if bj >= rj else rj
    out = []
    i = j = 0
    while table[i][j] > 0:
        # Take a[i] if it can start an optimal completion; the smallest
        # feasible j keeps the most of b available afterwards.
        target = table[i][j] - 1
        taken = False
        ai = a[i]
        for j2 in range(j, m):
            if b[j2] == ai and table[i + 1][j2 + 1] == target:
                out.append(ai)
                i += 1
                j = j2 + 1
                taken = True
                break
        if not taken:
            i += 1
    return tuple(out)


def lcs_length(a: Sequence, b: Sequence) -> int:
    """Length of the LCS of a and b (bit-parallel, O(|a|*|b|/wordsize))."""
    n = len(a)
    if n == 0 or len(b) == 0:
        return 0
    masks = build_lcs_masks(a)
    return lcs_length_with_masks(masks, n, b)


def build_lcs_masks(a: Sequence) -> dict:
    """Per-element position bitmasks of ``a`` for lcs_length_with_masks.

    Precompute once when the same sequence is compared against many others.
    """
    masks: dict = {}
    bit = 1
    for item in a:
        masks[item] = masks.get(item, 0) | bit
        bit <<= 1
    return masks


def lcs_length_with_masks(masks: dict, n: int, b: Sequence) -> int:
    full = (1 << n) - 1
    v = full
    for item in b:
        u = v & masks.get(item, 0)
        if u:
            v = ((v + u) | (v - u)) & full
    # Each cleared bit is one matched element of a.
    return n - bin(v).count("1")


def is_subsequence(needle: Sequence, haystack: Sequence) -> bool:
    it = iter(haystack)
    return all(any(x == y for y in it) for x in needle)


# ---------------------------------------------------------------------------
# Canonical trajectory log format
#
# One line per agent turn: `episode_id,agent_id,step,obs_label,act_label`
# (UTF-8, comma-separated). This is the format consumed by the trajectory
# mining pipeline.


def write_trajectory_log(path: str | Path, episodes: Iterable[JointHistory]) -> None:
    lines = []
    for ep in episodes:
        for agent in ep.agents:
            for step, (obs, act) in enumerate(ep.histories[agent]):
                lines.append(f"{ep.episode_id},{agent},{step},{obs},{act}")
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def read_trajectory_log(
    path: str | Path, success: Mapping[int, bool] | None = None
) -> list[JointHistory]:
    """Parse a canonical log; ``success`` optionally flags episode ids."""
    per_episode: dict[int, dict[str, list[tuple[int, str, str]]]] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 5:
            raise TrajectoryError(f"{path}:{lineno}: expected 5 fields, got {len(parts)}")
        ep_id, agent, step, obs, act = parts
        try:
            ep = int(ep_id)
            idx = int(step)
        except ValueError:
            raise TrajectoryError(f"{path}:{lineno}: non-integer episode or step") from None
        per_episode.setdefault(ep, {}).setdefault(agent, []).append(
            (idx, check_label(obs), check_label(act))
        )
    out = []
    for ep_id in sorted(per_episode):
        histories: dict[str, History] = {}
        for agent, rows in per_episode[ep_id].items():
            rows.sort()
            if [r[0] for r in rows] != list(range(len(rows))):
                raise TrajectoryError(
                    f"episode {ep_id} agent {agent}: step indices not contiguous from 0"
                )
            histories[agent] = tuple((obs, act) for _, obs, act in rows)
        flag = bool(success.get(ep_id, False)) if success else False
        out.append(JointHistory(episode_id=ep_id, histories=histories, success=flag))
    return out

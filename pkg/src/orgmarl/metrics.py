"""The seven evaluation measures computed from training curves, evaluation
logs, and mined-organization reports: cumulative reward, reward standard
deviation, convergence rate, constraint violation rate, consistency score,
robustness score, and organizational fit level.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, fields
from pathlib import Path

from .guides import Linkers, is_all_actions
from .orgspec import OrgSpec
from .patterns import parse_pattern, realize
from .temm import TemmReport
from .trajectory import History, lcs_length
from .training import EvalLog, JointPolicy, evaluate

CSV_COLUMNS = (
    "env",
    "algorithm",
    "org",
    "cumulative_reward",
    "reward_std",
    "convergence_rate",
    "violation_rate",
    "consistency_score",
    "robustness_score",
    "org_fit_level",
)


@dataclass
class MetricsReport:
    env: str
    algorithm: str
    org: str  # "none", "full", or "agr"
    cumulative_reward: float
    reward_std: float
    convergence_rate: float
    violation_rate: float
    # None for reference-baseline runs (no declared organization to compare
    # against), rendered as '-' in tables.
    consistency_score: float | None
    robustness_score: float
    org_fit_level: float
    consistency_inferred: float = 0.0

    def row(self) -> list:
        return [getattr(self, name) for name in CSV_COLUMNS]

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def convergence_rate(curve: list[float], window: int = 100, band: float = 0.05) -> float:
    """1 - t*/T where t* is the first episode from which the moving average
    stays within ``band`` of the final moving average; 0 when the curve only
    settles at the very end."""
    total = len(curve)
    if total == 0:
        return 0.0
    w = min(window, total)
    averages = []
    acc = 0.0
    for i, value in enumerate(curve):
        acc += value
        if i >= w:
            acc -= curve[i - w]
        if i >= w - 1:
            averages.append(acc / w)
    final = averages[-1]
    tolerance = band * abs(final)
    settle_index = len(averages) - 1
    for i in range(len(averages) - 1, -1, -1):
        if abs(averages[i] - final) <= tolerance:
            settle_index = i
        else:
            break
    t_star = settle_index + w  # episodes consumed before stability
    return max(0.0, 1.0 - t_star / total)


def violation_rate(log: EvalLog) -> float:
    """Fraction of agent turns whose action fell outside the allowed set of
    a constrained observation (recorded by the wrapper during evaluation)."""
    turns = log.total_turns()
    if turns == 0:
        return 0.0
    return log.violation_turns() / turns


def replay_violation_rate(log: EvalLog, spec: OrgSpec, linkers: Linkers) -> float:
    """Violation rate recomputed from raw logs via the rule banks; an
    independent check of the wrapper's recording."""
    turns = 0
    violations = 0
    for record in log.episodes:
        for agent, history in record.joint.histories.items():
            guides = linkers.guides_for_role(linkers.role_of(agent))
            prefix: list = []
            for obs, action in history:
                turns += 1
                if guides.action_guide is not None:
                    allowed, _ = guides.action_guide.query(tuple(prefix), obs)
                    if not is_all_actions(allowed) and action not in allowed:
                        violations += 1
                prefix.append((obs, action))
    return violations / turns if turns else 0.0


def _reference_history(reference) -> History:
    """A role's expected behavior: an explicit pair list or a pattern string
    realized at minimal cardinalities."""
    if isinstance(reference, str):
        return realize(parse_pattern(reference))
    return tuple((str(o), str(a)) for o, a in reference)


def consistency_score(
    log: EvalLog,
    spec: OrgSpec | None,
    linkers: Linkers | None,
    fallback_violation_rate: float,
) -> float:
    """Alignment between trained behaviors and the declared roles.

    Roles carrying a reference sequence score by LCS overlap with each
    member agent's history; without references the score falls back to
    1 - violation_rate.
    """
    if spec is None or linkers is None:
        return 1.0 - fallback_violation_rate
    references = {}
    for role in spec.roles:
        if role.reference:
            references[role.name] = _reference_history(role.reference)
    if not references:
        return 1.0 - fallback_violation_rate
    scores = []
    for record in log.episodes:
        for agent, history in record.joint.histories.items():
            role = linkers.role_of(agent)
            reference = references.get(role) if role else None
            if reference is None or not reference or not history:
                continue
            scores.append(lcs_length(history, reference) / len(reference))
    if not scores:
        return 1.0 - fallback_violation_rate
    return sum(scores) / len(scores)


def robustness_score(
    make_env,
    policies: JointPolicy,
    episodes: int = 20,
    seed: int = 0,
) -> float:
    """Return ratio under a perturbation suite, clipped to [0, 1].

    Scenarios: observation-label noise at rate 0.1, the first agent frozen
    to its no-op action, and start states shifted by one cell. ``make_env``
    builds a fresh environment, accepting a start-shift offset.
    """
    baseline_env = make_env((0, 0))
    baseline = evaluate(baseline_env, policies, episodes=episodes, seed=seed)
    base_mean = sum(baseline.returns()) / episodes
    perturbed_means = []
    noisy = evaluate(make_env((0, 0)), policies, episodes=episodes, seed=seed, obs_noise=0.1)
    perturbed_means.append(sum(noisy.returns()) / episodes)
    frozen_agent = baseline_env.agents[0]
    frozen = evaluate(
        make_env((0, 0)), policies, episodes=episodes, seed=seed, freeze_agent=frozen_agent
    )
    perturbed_means.append(sum(frozen.returns()) / episodes)
    shifted = evaluate(make_env((1, 1)), policies, episodes=episodes, seed=seed)
    perturbed_means.append(sum(shifted.returns()) / episodes)
    perturbed = sum(perturbed_means) / len(perturbed_means)
    if base_mean <= 0.0:
        # Ratios of non-positive returns invert the ordering; degrade to a
        # binary better/worse verdict in that regime.
        return 1.0 if perturbed >= base_mean else 0.0
    return min(1.0, max(0.0, perturbed / base_mean))


def report(
    env_name: str,
    algorithm: str,
    org_mode: str,
    curve: list[float],
    log: EvalLog,
    temm_report: TemmReport | None,
    spec: OrgSpec | None = None,
    linkers: Linkers | None = None,
    robustness: float = 0.0,
) -> MetricsReport:
    """Assemble the seven measures from run artifacts."""
    returns = log.returns()
    if not returns:
        raise ValueError("evaluation log holds no episodes")
    mean = sum(returns) / len(returns)
    std = math.sqrt(sum((r - mean) ** 2 for r in returns) / len(returns))
    vrate = violation_rate(log)
    fit = temm_report.org_fit if temm_report is not None else 0.0
    inferred_consistency = (
        temm_report.structural_fit if temm_report is not None else 0.0
    )
    return MetricsReport(
        env=env_name,
        algorithm=algorithm,
        org=org_mode,
        cumulative_reward=mean,
        reward_std=std,
        convergence_rate=convergence_rate(curve),
        violation_rate=vrate,
        consistency_score=(
            None if org_mode == "none" else consistency_score(log, spec, linkers, vrate)
        ),
        robustness_score=robustness,
        org_fit_level=fit,
        consistency_inferred=inferred_consistency,
    )


def write_csv(reports: list[MetricsReport], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in reports:
            writer.writerow(
                [
                    value if isinstance(value, str) else ("" if value is None else repr(value))
                    for value in r.row()
                ]
            )


def write_long_csv(reports: list[MetricsReport], path: str | Path) -> None:
    """Plot-ready long format: one (run, metric, value) row per cell."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["env", "algorithm", "org", "metric", "value"])
        for r in reports:
            for name in CSV_COLUMNS[3:]:
                writer.writerow([r.env, r.algorithm, r.org, name, repr(getattr(r, name))])


def write_json(report_obj: MetricsReport, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(report_obj.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

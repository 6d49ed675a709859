import pytest

from orgmarl.envs.predator_prey import predator_prey_env
from orgmarl.envs.wrapper import OrgWrapper
from orgmarl.guides import (
    GoalRewardGuide,
    Linkers,
    RagRule,
    RoleActionGuide,
    RoleGuides,
)
from orgmarl.metrics import (
    consistency_score,
    convergence_rate,
    replay_violation_rate,
    report,
    robustness_score,
    violation_rate,
    write_csv,
)
from orgmarl.orgspec import DeonticRelation, Goal, Mission, OrgSpec, Role
from orgmarl.patterns import parse_pattern
from orgmarl.temm import TemmParams, run_temm
from orgmarl.training import EvalLog, EpisodeRecord, TabularPolicy, evaluate, train, TrainConfig
from orgmarl.trajectory import JointHistory


class TestConvergenceRate:
    def test_flat_curve(self):
        curve = [1.0] * 500
        assert convergence_rate(curve) == pytest.approx(1 - 100 / 500)

    def test_monotone_curve_stabilizing_midway(self):
        # Synthetic oracle: ramps to 10 at T/2, flat afterwards; the moving
        # average enters the 5% band shortly after the ramp ends.
        total = 1000
        curve = [10.0 * min(1.0, i / (total / 2)) for i in range(total)]
        rate = convergence_rate(curve)
        assert 0.35 <= rate <= 0.55

    def test_oscillating_curve_never_converges(self):
        # Block oscillation wider than the averaging window, ending
        # mid-swing so the moving average is still moving at the end.
        curve = ([0.0] * 150 + [10.0] * 150) * 3 + [0.0] * 150 + [10.0]
        assert convergence_rate(curve) == 0.0

    def test_empty_curve(self):
        assert convergence_rate([]) == 0.0


def constrained_env(hardness, agents=2):
    spec = OrgSpec(
        roles=tuple(Role(f"r{i}") for i in range(agents)),
        goals=(Goal("g"),),
        missions=(Mission("m", goals=(("g", 1.0),)),),
        deontic=tuple(DeonticRelation(f"r{i}", "m", "obligation") for i in range(agents)),
    )
    rag = RoleActionGuide(
        rules=(RagRule(observation="#any", actions=frozenset({"up"}), hardness=hardness),)
    )
    linkers = Linkers(
        ar={f"pred_{i}": f"r{i}" for i in range(agents)},
        rcg={f"r{i}": RoleGuides(action_guide=rag) for i in range(agents)},
        gcg={"g": GoalRewardGuide(pattern=parse_pattern("[#any,up]<4,4>"), bonus=1.0)},
    )
    env = OrgWrapper(
        predator_prey_env({"size": 5, "n_predators": agents, "horizon": 8}),
        spec,
        linkers,
        seed=0,
    )
    return env, spec, linkers


class TestViolationRate:
    def test_fully_enforced_masks_are_exactly_zero(self):
        env, spec, linkers = constrained_env(hardness=1.0)
        policies = {a: TabularPolicy(actions=env.act_labels(a)) for a in env.agents}
        log = evaluate(env, policies, episodes=20, seed=3)
        assert violation_rate(log) == 0.0
        assert replay_violation_rate(log, spec, linkers) == 0.0

    def test_always_violating_policy_is_one(self):
        env, spec, linkers = constrained_env(hardness=0.0)

        class AlwaysDown(TabularPolicy):
            def greedy(self, obs, pool=None):
                return "down"

        policies = {a: AlwaysDown(actions=env.act_labels(a)) for a in env.agents}
        log = evaluate(env, policies, episodes=5, seed=3)
        assert violation_rate(log) == 1.0
        assert replay_violation_rate(log, spec, linkers) == 1.0

    def test_random_policy_on_one_of_five_rule(self):
        # Bernoulli expectation: 4 of 5 uniform actions violate.
        env, spec, linkers = constrained_env(hardness=0.0)
        import random

        class RandomPolicy(TabularPolicy):
            def __init__(self, actions, rng):
                super().__init__(actions=actions)
                self.rng = rng

            def greedy(self, obs, pool=None):
                return self.actions[self.rng.randrange(len(self.actions))]

        rng = random.Random(11)
        policies = {a: RandomPolicy(env.act_labels(a), rng) for a in env.agents}
        log = evaluate(env, policies, episodes=400, seed=5)
        assert violation_rate(log) == pytest.approx(0.8, abs=0.03)


class TestConsistencyScore:
    def fabricate_log(self, history):
        joint = JointHistory(0, {"a0": history}, success=True)
        return EvalLog(
            episodes=[EpisodeRecord(0, 0.0, len(history), True, joint)]
        )

    def spec_with_reference(self, reference):
        return OrgSpec(roles=(Role("scripted", reference=reference),))

    def test_exact_compliance_is_one(self):
        ref = (("o1", "a1"), ("o2", "a2"))
        spec = self.spec_with_reference(ref)
        linkers = Linkers(ar={"a0": "scripted"})
        log = self.fabricate_log(ref * 3)
        assert consistency_score(log, spec, linkers, 0.5) == 1.0

    def test_fully_divergent_is_zero(self):
        ref = (("o1", "a1"), ("o2", "a2"))
        spec = self.spec_with_reference(ref)
        linkers = Linkers(ar={"a0": "scripted"})
        log = self.fabricate_log((("zz", "qq"),) * 4)
        assert consistency_score(log, spec, linkers, 0.5) == 0.0

    def test_fallback_without_references(self):
        spec = OrgSpec(roles=(Role("plain"),))
        linkers = Linkers(ar={"a0": "plain"})
        log = self.fabricate_log((("o", "a"),))
        assert consistency_score(log, spec, linkers, 0.25) == 0.75

    def test_pattern_reference_realization(self):
        spec = OrgSpec(roles=(Role("scripted", reference=(("o1", "a1"),)),))
        linkers = Linkers(ar={"a0": "scripted"})
        log = self.fabricate_log((("o1", "a1"), ("x", "y")))
        assert consistency_score(log, spec, linkers, 0.5) == 1.0


class TestRobustness:
    def test_reproducible(self):
        env, _, _ = constrained_env(hardness=1.0)
        result = train(env, TrainConfig(episodes=60, seed=0, gamma=0.9))

        def make_env(shift):
            inner = predator_prey_env(
                {"size": 5, "n_predators": 2, "horizon": 8, "start_shift": shift}
            )
            return inner

        a = robustness_score(make_env, result.policies, episodes=10, seed=4)
        b = robustness_score(make_env, result.policies, episodes=10, seed=4)
        assert a == b
        assert 0.0 <= a <= 1.0


class TestReport:
    def test_assembles_and_serializes(self, tmp_path):
        env, spec, linkers = constrained_env(hardness=1.0)
        result = train(env, TrainConfig(episodes=80, seed=1, gamma=0.9))
        log = evaluate(env, result.policies, episodes=30, seed=2)
        temm_report, _, _ = run_temm(
            log.joint_histories(), TemmParams(k=1, seed=0)
        )
        metrics = report(
            env_name="predator_prey",
            algorithm="iql",
            org_mode="full",
            curve=result.curve,
            log=log,
            temm_report=temm_report,
            spec=spec,
            linkers=linkers,
            robustness=0.5,
        )
        assert metrics.violation_rate == 0.0
        assert metrics.org_fit_level == pytest.approx(temm_report.org_fit)
        assert 0.0 <= metrics.convergence_rate <= 1.0
        assert metrics.reward_std >= 0.0
        path = tmp_path / "metrics.csv"
        write_csv([metrics], path)
        lines = path.read_text().splitlines()
        assert lines[0].startswith("env,algorithm,org,cumulative_reward")
        assert len(lines) == 2

    def test_missing_inputs_named(self):
        with pytest.raises(ValueError, match="no episodes"):
            report(
                env_name="x",
                algorithm="iql",
                org_mode="none",
                curve=[1.0],
                log=EvalLog(episodes=[]),
                temm_report=None,
            )

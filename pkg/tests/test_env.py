import pytest

from orgmarl.envs.base import ProtocolError, direction_sector, torus_delta, torus_distance
from orgmarl.envs.predator_prey import OBS_LABELS as PP_OBS, predator_prey_env
from orgmarl.envs.warehouse import warehouse_env


class TestGeometry:
    def test_torus_delta_wraps(self):
        assert torus_delta(0, 6, 7) == -1
        assert torus_delta(6, 0, 7) == 1
        assert torus_delta(2, 5, 7) == 3

    def test_torus_distance(self):
        assert torus_distance((0, 0), (6, 6), 7) == 2

    def test_sectors(self):
        assert direction_sector(0, -3) == "n"
        assert direction_sector(2, -2) == "ne"
        assert direction_sector(3, 0) == "e"
        assert direction_sector(-2, 3) == "sw"
        assert direction_sector(1, 1) == "adj"
        assert direction_sector(0, 0) == "adj"


class TestPredatorPrey:
    def test_alphabets(self):
        env = predator_prey_env()
        assert len(PP_OBS) == 81
        assert env.act_labels("pred_0") == ("up", "down", "left", "right", "stay")
        assert len(env.agents) == 3

    def test_invalid_config_rejected(self):
        with pytest.raises(ValueError):
            predator_prey_env({"size": 3})
        with pytest.raises(ValueError):
            predator_prey_env({"n_predators": 5})

    def test_capture_by_two_adjacent(self):
        env = predator_prey_env({"size": 7, "n_predators": 2})
        env.reset(seed=0)
        env.prey = (3, 3)
        env.positions = [(2, 3), (3, 2)]
        # Any action keeping both orthogonally adjacent triggers capture.
        outcome = env.step("stay")
        assert outcome.done
        assert outcome.reward == pytest.approx(10.0 - 0.1)
        assert env.success

    def test_step_cost_without_capture(self):
        env = predator_prey_env({"size": 7, "n_predators": 2})
        env.reset(seed=0)
        env.prey = (0, 0)
        env.positions = [(3, 3), (5, 5)]
        outcome = env.step("stay")
        assert not outcome.done
        assert outcome.reward == pytest.approx(-0.1)

    def test_horizon_truncates_without_success(self):
        env = predator_prey_env({"size": 7, "n_predators": 2, "horizon": 3})
        env.reset(seed=0)
        env.prey = (0, 0)
        env.positions = [(3, 3), (5, 5)]
        steps = 0
        while not env.done:
            env.step("stay")
            steps += 1
            assert steps <= 6
        assert steps == 6
        assert not env.success

    def test_determinism_same_seed(self):
        a = predator_prey_env()
        b = predator_prey_env()
        a.reset(seed=42)
        b.reset(seed=42)
        assert a.positions == b.positions and a.prey == b.prey
        for _ in range(30):
            if a.done:
                break
            action = a.act_labels(a.current_agent)[a.t % 5]
            ra = a.step(action)
            rb = b.step(action)
            assert ra.reward == rb.reward and ra.obs == rb.obs and ra.done == rb.done

    def test_prey_flees(self):
        env = predator_prey_env({"size": 7, "n_predators": 2})
        env.reset(seed=1)
        env.prey = (3, 3)
        env.positions = [(3, 5), (0, 0)]
        env._move_prey()
        # Prey increases its min distance; moving up (away from (3,5)) wins.
        assert env.prey == (3, 2)

    def test_out_of_turn_protocol(self):
        env = predator_prey_env()
        env.reset(seed=0)
        with pytest.raises(ProtocolError):
            env.step("warp")

    def test_step_after_done_rejected(self):
        env = predator_prey_env({"horizon": 1, "n_predators": 2})
        env.reset(seed=0)
        env.step("stay")
        env.step("stay")
        assert env.done
        with pytest.raises(ProtocolError):
            env.step("stay")


class TestWarehouse:
    def test_alphabets(self):
        env = warehouse_env()
        assert len(env.obs_labels("agent_0")) == 18
        assert env.act_labels("agent_0") == ("up", "down", "left", "right", "pick", "drop")

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            warehouse_env({"size": 4})

    def test_pick_then_deliver(self):
        env = warehouse_env({"size": 6, "n_agents": 1, "delivery_quota": 1})
        env.reset(seed=0)
        env.positions = [env.depot]
        env.carrying = [False]
        assert env.observe().startswith("c0_t")
        env.step("pick")
        assert env.carrying[0]
        assert env.observe().startswith("c1_t")
        env.positions = [env.demands[0]]
        outcome = env.step("drop")
        assert outcome.reward == pytest.approx(5.0 - 0.05)
        assert outcome.done and env.success

    def test_step_cost(self):
        env = warehouse_env({"size": 6, "n_agents": 1})
        env.reset(seed=0)
        env.positions = [(0, 0)]
        outcome = env.step("down")
        assert outcome.reward == pytest.approx(-0.05)

    def test_drop_off_demand_is_noop(self):
        env = warehouse_env({"size": 6, "n_agents": 1})
        env.reset(seed=0)
        env.positions = [env.depot]
        env.step("pick")
        env.positions = [(0, 0)]
        outcome = env.step("drop")
        assert env.carrying[0]
        assert outcome.reward == pytest.approx(-0.05)

    def test_shelves_block_movement(self):
        env = warehouse_env({"size": 6, "n_agents": 1})
        env.reset(seed=0)
        shelf = next(iter(env.shelves))
        start = (shelf[0], shelf[1] + 1)
        if start in env.shelves or not (0 <= start[1] < 6):
            start = (shelf[0], shelf[1] - 1)
        env.positions = [start]
        before = env.positions[0]
        env.step("up" if start[1] > shelf[1] else "down")
        assert env.positions[0] == before

import itertools
import sys
# insert at 1, 0 is the script path (or '' in REPL)
sys.path.insert(1, 'src')

import numpy as np
import pytest

from exercise_goal_setting import environment as env
from exercise_goal_setting import health as h
from exercise_goal_setting.agents import fixed_policy, no_service_policy
from exercise_goal_setting.exceptions import DomainError, PolicyError

"""Tests of the behavior-trend environments and the episode loop"""


PROFILE = h.UserProfile(alpha=0.9, beta=0.5, lam=1.0, mu=2.0, delta=0.8, k_f=0.3, k_g=0.2, m=2.0, l=3.0)


def make_config(env_id="E1", baseline=0.5, sigma=0.0, rho=0.0, horizon=84, seed=7, stage=h.SkillStage.ACQUISITION):
    return env.EpisodeConfig(
        profile=PROFILE,
        trend=env.TrendSchedule.from_env_id(env_id),
        behavior=env.BehaviorModel(baseline=baseline, sigma=sigma, rho=rho),
        stage=stage,
        horizon=horizon,
        seed=seed,
    )


class SequencePolicy(object):
    """Replays a fixed list of goal levels"""

    def __init__(self, levels):
        self.levels = list(levels)
        self.k = 0

    def select_action(self, window):
        level = self.levels[self.k]
        self.k += 1
        return h.GoalAction(level)

    def reset(self):
        self.k = 0


class BrokenPolicy(object):

    def select_action(self, window):
        raise RuntimeError("boom")

    def reset(self):
        return


## trend schedules

def test_trend_multiplier_standard_schedules():
    e1 = env.TrendSchedule.from_env_id("E1")
    e2 = env.TrendSchedule.from_env_id("E2")
    e3 = env.TrendSchedule.from_env_id("E3")
    e4 = env.TrendSchedule.from_env_id("E4")

    assert(all(env.trend_multiplier(e1, d) == 1.0 for d in range(84)))
    assert(env.trend_multiplier(e2, 41) == 1.0)
    assert(env.trend_multiplier(e2, 42) == 1.4)
    assert(env.trend_multiplier(e3, 83) == 2.0)
    assert(env.trend_multiplier(e4, 10) == 0.8)
    assert(env.trend_multiplier(e4, 60) == 1.6)

    with pytest.raises(DomainError):
        env.trend_multiplier(e2, -1)


def test_trend_schedule_validation():
    with pytest.raises(DomainError):
        env.TrendSchedule("Custom", ((1, 1.0),))
    with pytest.raises(DomainError):
        env.TrendSchedule("Custom", ((0, 1.0), (20, 1.2), (10, 1.1)))
    with pytest.raises(DomainError):
        env.TrendSchedule("Custom", ((0, 0.0),))
    with pytest.raises(DomainError):
        env.TrendSchedule("E9", ((0, 1.0),))

    custom = env.TrendSchedule("Custom", ((0, 1.0), (10, 0.5)))
    assert(env.trend_multiplier(custom, 12) == 0.5)


def test_compressed_schedule():
    short = env.TrendSchedule.from_env_id("E2").compressed(14)

    assert(short.breakpoints == ((0, 1.0), (7, 1.4)))


@pytest.mark.parametrize("env_id, opening", [("E1", 1.0), ("E2", 1.0), ("E3", 1.0), ("E4", 0.8)])
def test_compressed_schedule_keeps_the_opening_multiplier(env_id, opening):
    for horizon in (1, 2, 3):
        short = env.TrendSchedule.from_env_id(env_id).compressed(horizon)

        assert(env.trend_multiplier(short, 0) == opening)
        assert(short.breakpoints[0] == (0, opening))

    assert(env.TrendSchedule.from_env_id("E4").compressed(1).breakpoints == ((0, 0.8), (1, 1.6)))


## behavior

def test_sample_behavior_examples():
    rng = np.random.default_rng(0)

    assert(env.sample_behavior(make_config(), 3, h.GoalAction(0.9), rng) == 0.5)
    assert(env.sample_behavior(make_config(rho=1.0), 3, h.GoalAction(0.7), rng) == 0.7)
    assert(env.sample_behavior(make_config("E3", rho=0.5), 50, h.GoalAction(0.6), rng) == pytest.approx(0.8))
    # without service the goal pull does not apply
    assert(env.sample_behavior(make_config(rho=1.0), 3, h.NO_SERVICE, rng) == 0.5)


def test_sample_behavior_draws_one_variate():
    cfg = make_config(sigma=0.1, rho=0.3)
    rng_a = np.random.default_rng(11)
    rng_b = np.random.default_rng(11)

    env.sample_behavior(cfg, 0, h.GoalAction(0.4), rng_a)
    rng_b.standard_normal()

    assert(rng_a.standard_normal() == rng_b.standard_normal())


def test_sample_behavior_is_clipped():
    cfg = make_config(sigma=5.0)
    rng = np.random.default_rng(3)
    draws = [env.sample_behavior(cfg, d, h.GoalAction(0.5), rng) for d in range(200)]

    assert(min(draws) >= 0.0)
    assert(max(draws) <= 1.0)


def test_policy_cannot_move_behavior_without_goal_pull():
    cfg = make_config("E4", sigma=0.0, rho=0.0, horizon=84)
    weak = env.rollout(fixed_policy(0.1), cfg)
    strong = env.rollout(fixed_policy(1.0), cfg)

    expected = [min(1.0, 0.5 * env.trend_multiplier(cfg.trend, d)) for d in range(84)]
    assert([r.e for r in weak.trajectory] == expected)
    assert([r.e for r in strong.trajectory] == expected)


## step and rollout

def test_step_is_composition_of_dynamics():
    cfg = make_config(rho=1.0)
    rng = np.random.default_rng(0)
    state = env.initial_state(cfg)

    nxt, e_t, r_t = env.step(state, h.GoalAction(0.6), cfg, 0, rng)
    expected = h.update_state(state, 0.6, PROFILE)

    assert(e_t == 0.6)
    assert(nxt == expected)
    assert(r_t == h.reward(expected, h.GoalAction(0.6), PROFILE, cfg.stage))


def test_step_same_seed_same_result():
    cfg = make_config(sigma=0.2, rho=0.3)
    state = env.initial_state(cfg)
    first = env.step(state, h.GoalAction(0.4), cfg, 5, np.random.default_rng(99))
    second = env.step(state, h.GoalAction(0.4), cfg, 5, np.random.default_rng(99))

    assert(first == second)


def test_single_epoch_without_service():
    cfg = make_config(horizon=1)
    record = env.rollout(no_service_policy(), cfg)
    state = h.update_state(env.initial_state(cfg), 0.5, PROFILE)

    assert(len(record.trajectory) == 1)
    assert(record.total_reward == h.performance(state, PROFILE, cfg.stage))


def test_zero_horizon_rejected():
    with pytest.raises(DomainError):
        make_config(horizon=0)


def test_fixed_policy_matches_hand_chain():
    cfg = make_config(rho=1.0, horizon=5)
    record = env.rollout(fixed_policy(0.5), cfg)

    state, total = env.initial_state(cfg), 0.0
    for _ in range(5):
        state = h.update_state(state, 0.5, PROFILE)
        total += h.reward(state, h.GoalAction(0.5), PROFILE, cfg.stage)

    assert(record.total_reward == pytest.approx(total, abs=1e-12))
    assert(record.total_reward == pytest.approx(sum(r.reward for r in record.trajectory), abs=1e-12))


def test_rollout_is_deterministic():
    cfg = make_config("E2", sigma=0.1, rho=0.3, horizon=84, seed=12345)
    first = env.rollout(fixed_policy(0.6), cfg)
    second = env.rollout(fixed_policy(0.6), cfg)
    other = env.rollout(fixed_policy(0.6), cfg.with_seed(12346))

    assert(first == second)
    assert(first.total_reward != other.total_reward)


def test_exhaustive_optimum_is_reproduced_by_rollout():
    cfg = make_config(rho=1.0, horizon=3)
    best_total, best_levels = -np.inf, None
    for levels in itertools.product([h.GoalAction.from_index(k).level for k in range(10)], repeat=3):
        state, total = env.initial_state(cfg), 0.0
        for level in levels:
            state = h.update_state(state, level, PROFILE)
            total += h.reward(state, h.GoalAction(level), PROFILE, cfg.stage)
        if total > best_total:
            best_total, best_levels = total, levels

    record = env.rollout(SequencePolicy(best_levels), cfg)
    assert(record.total_reward == best_total)


def test_policy_failure_aborts_episode():
    with pytest.raises(PolicyError):
        env.rollout(BrokenPolicy(), make_config(horizon=3))


## gymnasium contract

def test_env_reset_and_step():
    cfg = make_config(horizon=3, sigma=0.1, rho=0.3)
    gym_env = env.GoalSettingEnv(cfg, window=4)
    observation, info = gym_env.reset()

    assert(observation.shape == (4, 6))
    assert(info["day"] == 0)
    assert(np.all(observation[:3] == 0.0))
    assert(observation[3, 1] == 0.5)

    terminated = False
    steps = 0
    while not terminated:
        observation, r_t, terminated, truncated, info = gym_env.step(4)
        steps += 1
        assert(not truncated)
        assert(info["action"] == 0.5)
    assert(steps == 3)
    assert(observation[-1, 4] == 0.5)
    assert(observation[-1, 5] == 1.0)


def test_env_reset_with_seed_replays():
    cfg = make_config(horizon=10, sigma=0.2, rho=0.3)
    gym_env = env.GoalSettingEnv(cfg)

    gym_env.reset(seed=5)
    first = [gym_env.step(3)[1] for _ in range(10)]
    gym_env.reset(seed=5)
    second = [gym_env.step(3)[1] for _ in range(10)]

    assert(first == second)


def test_observation_window_padding():
    rows = [[k] * 6 for k in range(1, 4)]
    window = env.observation_window(rows, 5)

    assert(window.shape == (5, 6))
    assert(np.all(window[:2] == 0))
    assert(np.all(window[2:, 0] == [1, 2, 3]))
    assert(np.all(env.observation_window([[k] * 6 for k in range(10)], 3)[:, 0] == [7, 8, 9]))

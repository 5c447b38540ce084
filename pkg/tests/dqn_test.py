import sys
# insert at 1, 0 is the script path (or '' in REPL)
sys.path.insert(1, 'src')

import numpy as np
import pytest

from exercise_goal_setting import dqn
from exercise_goal_setting import environment as env
from exercise_goal_setting import health as h
from exercise_goal_setting import network as nn
from exercise_goal_setting.a3c import a3c_train, make_env_factory
from exercise_goal_setting.agents import TrainConfig, converging_step
from exercise_goal_setting.exceptions import DomainError

"""Tests of the DQN competitor"""


PROFILE = h.UserProfile(alpha=0.9, beta=0.5, lam=0.8, mu=1.5, delta=0.95, k_f=0.3, k_g=0.2, m=1.0, l=1.0)
SMALL = nn.NetSpec.hybrid(hidden=4, dense=8, window=3)


def make_config(horizon=10):
    return env.EpisodeConfig(
        profile=PROFILE,
        trend=env.TrendSchedule.from_env_id("E1"),
        behavior=env.BehaviorModel(baseline=0.5, sigma=0.1, rho=0.3),
        horizon=horizon,
    )


## replay and exploration

def test_replay_buffer_overwrites_oldest():
    buffer = dqn.ReplayBuffer(3, (3, 6))
    for k in range(5):
        buffer.add(np.full((3, 6), k), k, float(k), np.full((3, 6), k + 1), k == 4)

    assert(len(buffer) == 3)
    assert(sorted(buffer.actions.tolist()) == [2, 3, 4])

    observations, actions, rewards, next_observations, dones = buffer.sample(16, np.random.default_rng(0))
    assert(observations.shape == (16, 3, 6))
    assert(set(actions.tolist()) <= {2, 3, 4})
    assert(np.all(rewards == actions))
    assert(np.all(next_observations[:, 0, 0] == actions + 1))
    assert(np.all(dones == (actions == 4)))


def test_empty_replay_buffer():
    with pytest.raises(DomainError):
        dqn.ReplayBuffer(4, (3, 6)).sample(1, np.random.default_rng(0))
    with pytest.raises(DomainError):
        dqn.ReplayBuffer(0, (3, 6))


def test_epsilon_schedule():
    cfg = TrainConfig(epsilon_start=1.0, epsilon_end=0.1, epsilon_decay_steps=100)

    assert(dqn.epsilon_at(0, cfg) == 1.0)
    assert(dqn.epsilon_at(50, cfg) == pytest.approx(0.55))
    assert(dqn.epsilon_at(100, cfg) == 0.1)
    assert(dqn.epsilon_at(10_000, cfg) == 0.1)


def test_epsilon_one_is_uniform():
    rng = np.random.default_rng(1)
    q_values = np.arange(10.0)
    counts = np.bincount([dqn.epsilon_greedy(q_values, 1.0, rng) for _ in range(10_000)], minlength=10)

    assert(np.all(counts > 850))
    assert(np.all(counts < 1150))


def test_epsilon_zero_is_greedy():
    rng = np.random.default_rng(2)
    q_values = np.array([0.0, 3.0, 1.0, -1.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0])

    assert(all(dqn.epsilon_greedy(q_values, 0.0, rng) == 1 for _ in range(100)))


## Q gradients

def test_q_gradients_match_finite_differences():
    rng = np.random.default_rng(3)
    params = nn.HybridNetParams.initialize(SMALL, rng)
    target = nn.HybridNetParams.initialize(SMALL, np.random.default_rng(4))
    batch = (
        rng.uniform(size=(4, 3, 6)),
        np.array([0, 3, 3, 9]),
        rng.uniform(-1, 1, size=4),
        rng.uniform(size=(4, 3, 6)),
        np.array([0.0, 0.0, 1.0, 0.0]),
    )
    grads = dqn.q_gradients(params, target, batch, gamma=0.9)

    step = 1e-5
    for name, array in params.items():
        for index in np.ndindex(array.shape):
            original = array[index]
            array[index] = original + step
            plus = dqn.q_gradients(params, target, batch, 0.9).loss
            array[index] = original - step
            minus = dqn.q_gradients(params, target, batch, 0.9).loss
            array[index] = original
            numeric = (plus - minus) / (2 * step)
            analytic = grads.tensors[name][index]
            assert abs(numeric - analytic) <= max(1e-4 * max(abs(numeric), abs(analytic)), 1e-7), (name, index)


## training

def test_dqn_training_is_reproducible():
    factory = make_env_factory(make_config(), SMALL.window)
    cfg = TrainConfig(T_max=300, t_max=1, learning_starts=50, batch_size=8, target_sync=50,
                      eval_interval=100, eval_episodes=2, epsilon_decay_steps=200, seed=5)
    params_a, curve_a = dqn.dqn_train(factory, cfg, SMALL)
    params_b, curve_b = dqn.dqn_train(factory, cfg, SMALL)

    assert(params_a == params_b)
    assert(curve_a.points == curve_b.points)
    assert(curve_a.steps == [0, 100, 200, 300])
    assert(params_a.all_finite())


def test_dqn_checkpoint(tmp_path):
    factory = make_env_factory(make_config(), SMALL.window)
    path = tmp_path / "dqn.npz"
    cfg = TrainConfig(T_max=60, t_max=1, learning_starts=20, batch_size=4, target_sync=10,
                      eval_interval=30, eval_episodes=1, checkpoint_path=str(path))
    params, _ = dqn.dqn_train(factory, cfg, SMALL)
    loaded, state = nn.load_checkpoint(path)

    assert(loaded == params)
    assert(state.updates == 40)


@pytest.mark.slow
def test_dqn_finds_the_bandit_argmax():
    # one epoch with full adherence: reward grows with the goal level
    profile = h.UserProfile(alpha=0.9, beta=0.5, lam=1.0, mu=1.0, delta=0.8, k_f=3.0, k_g=1.0, m=0.0, l=0.0)
    cfg = env.EpisodeConfig(
        profile=profile,
        trend=env.TrendSchedule.from_env_id("E1"),
        behavior=env.BehaviorModel(baseline=0.5, sigma=0.0, rho=1.0),
        horizon=1,
    )
    start = env.initial_state(cfg)
    rewards = [env.step(start, h.GoalAction.from_index(k), cfg, 0, np.random.default_rng(0))[2] for k in range(10)]
    window = env.GoalSettingEnv(cfg, SMALL.window).reset()[0]

    for seed in range(5):
        train = TrainConfig(T_max=3000, t_max=1, learning_rate=0.01, learning_starts=100, batch_size=32,
                            target_sync=100, epsilon_decay_steps=1000, eval_interval=1000, eval_episodes=1, seed=seed)
        params, _ = dqn.dqn_train(make_env_factory(cfg, SMALL.window), train, SMALL)

        assert(int(np.argmax(nn.forward(params, window).logits[0])) == int(np.argmax(rewards))), seed


@pytest.mark.slow
def test_actor_critic_converges_no_later_than_dqn():
    cfg = make_config(horizon=28)
    spec = nn.NetSpec.hybrid(hidden=8, dense=16)
    factory = make_env_factory(cfg, spec.window)
    earlier = 0
    for seed in range(10):
        train = TrainConfig(T_max=6000, t_max=7, eval_interval=300, eval_episodes=3, seed=seed)
        _, a3c_curve = a3c_train(factory, train, spec)
        _, dqn_curve = dqn.dqn_train(factory, train, spec)
        if converging_step(a3c_curve) <= converging_step(dqn_curve):
            earlier += 1

    assert(earlier >= 7)

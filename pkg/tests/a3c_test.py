import sys
# insert at 1, 0 is the script path (or '' in REPL)
sys.path.insert(1, 'src')

import numpy as np
import pytest

from exercise_goal_setting import a3c
from exercise_goal_setting import environment as env
from exercise_goal_setting import health as h
from exercise_goal_setting import network as nn
from exercise_goal_setting.agents import NetworkPolicy, TrainConfig, evaluate

"""Tests of asynchronous advantage actor-critic training"""


PROFILE = h.UserProfile(alpha=0.9, beta=0.5, lam=0.8, mu=1.5, delta=0.95, k_f=0.3, k_g=0.2, m=1.0, l=1.0)
SMALL = nn.NetSpec.hybrid(hidden=4, dense=8)


def make_config(horizon=10, sigma=0.1, rho=0.3, profile=PROFILE, env_id="E1"):
    return env.EpisodeConfig(
        profile=profile,
        trend=env.TrendSchedule.from_env_id(env_id).compressed(horizon),
        behavior=env.BehaviorModel(baseline=0.5, sigma=sigma, rho=rho),
        horizon=horizon,
    )


def small_train_config(**kwargs):
    values = dict(workers=1, T_max=200, t_max=5, eval_interval=100, eval_episodes=2, seed=3)
    values.update(kwargs)
    return TrainConfig(**values)


def bandit_config():
    profile = h.UserProfile(alpha=0.9, beta=0.5, lam=1.0, mu=1.0, delta=0.8, k_f=3.0, k_g=1.0, m=0.0, l=0.0)
    return make_config(horizon=1, sigma=0.0, rho=1.0, profile=profile)


def bandit_train_config(seed):
    return TrainConfig(workers=1, T_max=3000, t_max=1, learning_rate=0.01, eval_interval=500,
                       eval_episodes=1, seed=seed)


def enumerated_best(cfg):
    rng = np.random.default_rng(0)
    start = env.initial_state(cfg)
    rewards = [env.step(start, h.GoalAction.from_index(k), cfg, 0, rng)[2] for k in range(10)]
    return int(np.argmax(rewards))


def brute_force_optimum(cfg):
    rng = np.random.default_rng(0)
    best = -np.inf

    def search(state, day, total):
        nonlocal best
        if day == cfg.horizon:
            best = max(best, total)
            return
        for k in range(10):
            nxt, _, r_t = env.step(state, h.GoalAction.from_index(k), cfg, day, rng)
            search(nxt, day + 1, total + r_t)

    search(env.initial_state(cfg), 0, 0.0)
    return best


def test_n_step_returns():
    returns = a3c.n_step_returns([1.0, 1.0, 1.0], bootstrap=10.0, gamma=0.5)

    assert(np.allclose(returns, [3.0, 4.0, 6.0]))
    assert(np.allclose(a3c.n_step_returns([2.0], 0.0, 0.99), [2.0]))


def test_evaluation_configs_are_disjoint_from_training_seed():
    configs = a3c.evaluation_configs(make_config(), seed=3, n_episodes=3)

    assert([c.seed for c in configs] == [1_000_006, 1_000_007, 1_000_008])


def test_single_worker_training_is_reproducible():
    factory = a3c.make_env_factory(make_config(), SMALL.window)
    params_a, curve_a = a3c.a3c_train(factory, small_train_config(), SMALL)
    params_b, curve_b = a3c.a3c_train(factory, small_train_config(), SMALL)

    assert(params_a == params_b)
    assert(curve_a.points == curve_b.points)
    assert(curve_a.steps == [0, 100, 200])
    assert(params_a.all_finite())

    params_c, _ = a3c.a3c_train(factory, small_train_config(seed=4), SMALL)
    assert(params_c != params_a)


def test_multi_worker_training_finishes():
    factory = a3c.make_env_factory(make_config(), SMALL.window)
    params, curve = a3c.a3c_train(factory, small_train_config(workers=3, T_max=300), SMALL)

    assert(params.all_finite())
    assert(curve.steps[0] == 0)
    assert(curve.steps[-1] >= 300)
    assert(all(b > a for a, b in zip(curve.steps, curve.steps[1:])))


def test_ablations_train_their_architectures():
    factory = a3c.make_env_factory(make_config(), 7)
    cfg = small_train_config(T_max=50, eval_interval=50)
    mlp, _ = a3c.a3c_mlp(factory, cfg, width=8)
    lstm, _ = a3c.a3c_lstm(factory, cfg, hidden=4)

    assert(mlp.spec.kind == "mlp")
    assert(lstm.spec.kind == "lstm")
    assert(mlp.spec.dense == (8, 8))


def test_checkpoint_written_after_training(tmp_path):
    factory = a3c.make_env_factory(make_config(), SMALL.window)
    path = tmp_path / "agent.npz"
    params, _ = a3c.a3c_train(factory, small_train_config(T_max=40, checkpoint_path=str(path)), SMALL)
    loaded, state = nn.load_checkpoint(path)

    assert(loaded == params)
    assert(state.updates == 8)


def test_training_rewards_are_scaled(monkeypatch):
    calls = []

    def recording_backward(params, segment, targets, *args):
        calls.append((targets.returns.copy(), args))
        return nn.backward(params, segment, targets, *args)

    monkeypatch.setattr(a3c, "backward", recording_backward)
    factory = a3c.make_env_factory(make_config(horizon=10), SMALL.window)
    # one segment covers the whole episode, so nothing is bootstrapped
    a3c.a3c_train(factory, small_train_config(T_max=10, t_max=10, eval_interval=10, reward_scale=1.0), SMALL)
    a3c.a3c_train(factory, small_train_config(T_max=10, t_max=10, eval_interval=10), SMALL)

    (raw, raw_args), (scaled, scaled_args) = calls
    assert(len(raw) == 10)
    assert(np.allclose(scaled, raw / 10.0, rtol=1e-12, atol=1e-12))
    assert(scaled_args[-1] is True)


@pytest.mark.slow
def test_bandit_converges_to_best_goal():
    # one epoch with full adherence: reward grows with the goal level
    cfg = bandit_config()
    factory = a3c.make_env_factory(cfg, SMALL.window)
    params, curve = a3c.a3c_train(factory, bandit_train_config(seed=0), SMALL)

    window = env.GoalSettingEnv(cfg, SMALL.window).reset()[0]
    assert(enumerated_best(cfg) == 9)
    assert(NetworkPolicy(params).select_action(window).level == 1.0)
    assert(curve.means[-1] == pytest.approx(0.4 + 2.2 * 1.0))


@pytest.mark.slow
def test_ablations_agree_on_the_bandit_argmax():
    cfg = bandit_config()
    factory = a3c.make_env_factory(cfg, SMALL.window)
    window = env.GoalSettingEnv(cfg, SMALL.window).reset()[0]
    best = enumerated_best(cfg)

    trained = [
        a3c.a3c_train(factory, bandit_train_config(seed=1), SMALL)[0],
        a3c.a3c_mlp(factory, bandit_train_config(seed=1), width=8)[0],
        a3c.a3c_lstm(factory, bandit_train_config(seed=1), hidden=4)[0],
    ]
    assert([NetworkPolicy(p).select_action(window).index for p in trained] == [best] * 3)


@pytest.mark.slow
def test_short_horizon_reaches_the_brute_force_optimum():
    for env_id in ("E1", "E2", "E3", "E4"):
        cfg = make_config(horizon=5, sigma=0.0, rho=1.0, env_id=env_id)
        optimum = brute_force_optimum(cfg)
        assert(optimum > 0)

        factory = a3c.make_env_factory(cfg, SMALL.window)
        ratios = []
        for seed in range(10):
            train = TrainConfig(workers=1, T_max=2000, t_max=5, learning_rate=0.01, eval_interval=1000,
                                eval_episodes=1, seed=seed)
            params, _ = a3c.a3c_train(factory, train, SMALL)
            ratios.append(env.rollout(NetworkPolicy(params), cfg).total_reward / optimum)

        assert(np.median(ratios) >= 0.95), (env_id, ratios)


@pytest.mark.slow
def test_training_improves_on_the_uniform_policy():
    uniform = nn.HybridNetParams.initialize(SMALL, zero=True)
    for env_id in ("E1", "E2", "E3", "E4"):
        cfg = make_config(horizon=14, env_id=env_id)
        factory = a3c.make_env_factory(cfg, SMALL.window)
        params, _ = a3c.a3c_train(factory, small_train_config(T_max=3000, t_max=7, eval_interval=1000), SMALL)

        trained = evaluate(NetworkPolicy(params), cfg, 20, 500)
        untrained = evaluate(NetworkPolicy(uniform, greedy=False, rng=np.random.default_rng(0)), cfg, 20, 500)
        assert(np.mean([r.total_reward for r in trained]) >= np.mean([r.total_reward for r in untrained])), env_id

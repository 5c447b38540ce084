"""Constant values utilized for simulation, training and other purposes.

This module contains constant values that are unlikely to change,
but need to be referenced by other modules.

"""

class GoalConstants(object):

    """The goal grid offered to a user, one level per decision epoch.
    """
    no_service_level = 0.0
    levels = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
    n_actions = 10


class TrendConstants(object):

    """Behavior-trend breakpoints as (start_day, multiplier), relative to the user's original baseline.
    """
    schedules = {
        "E1": ((0, 1.0),),
        "E2": ((0, 1.0), (42, 1.4)),
        "E3": ((0, 1.0), (42, 2.0)),
        "E4": ((0, 0.8), (42, 1.6)),
    }


class EpisodeDefaults(object):

    """Defaults for one service period.
    """
    horizon = 84
    baseline = 0.5
    sigma = 0.1
    rho = 0.3


class NetworkDefaults(object):

    """Defaults for the hybrid actor-critic network and its optimizer.
    """
    hidden = 32
    dense = 64
    window = 7
    n_features = 6
    learning_rate = 1e-3
    rms_decay = 0.99
    rms_epsilon = 1e-5
    grad_clip = 40.0
    forget_bias = 1.0
    checkpoint_version = 1


class TrainingDefaults(object):

    """Defaults for asynchronous actor-critic and DQN training.

    A ``reward_scale`` of 0 multiplies training rewards by 1/horizon; evaluation is always unscaled.
    """
    gamma = 0.99
    t_max = 20
    reward_scale = 0.0
    normalize_advantages = True
    T_max = 50_000
    entropy_coef = 0.01
    value_coef = 0.5
    eval_interval = 1_000
    eval_episodes = 5
    eval_seed_offset = 1_000_003
    replay_capacity = 100_000
    batch_size = 32
    target_sync = 1_000
    learning_starts = 500
    epsilon_start = 1.0
    epsilon_end = 0.05
    epsilon_decay_steps = 10_000
    convergence_tolerance = 0.05


class DataConstants(object):

    """Constants of the three data groups and of the profile estimator.
    """
    g1_steps_mean = 6274.0
    g1_steps_sd = 2106.0
    g1_users = 50
    trimp_k_male = 1.92
    trimp_k_female = 1.67
    trimp_weight = 0.64
    srpe_max = 10.0
    min_performance_points = 10
    fixed_lambda = 1.0
    fixed_mu = 1.5
    fixed_delta = 0.9
    n_starts = 8
    max_evaluations = 10_000
    simplex_tolerance = 1e-8

    # uniform sampling box for synthetic profiles, within UserProfile bounds
    profile_box = {
        "alpha": (0.60, 0.99),
        "beta": (0.30, 0.90),
        "lam": (0.50, 1.00),
        "mu": (1.00, 2.00),
        "delta": (0.80, 1.00),
        "k_f": (0.10, 1.00),
        "k_g": (0.10, 1.00),
        "m": (0.00, 4.00),
        "l": (0.00, 4.00),
    }

    # search box for (alpha, beta, k_f, k_g, b_0)
    estimation_bounds = (
        (0.01, 0.999),
        (0.01, 0.999),
        (1e-4, 5.0),
        (1e-4, 5.0),
        (1e-3, 500.0),
    )


class StrategyConstants(object):

    """Strategy names understood by the experiment harness.
    """
    adaptive = "adaptive"
    fixed_levels = {
        "weak": 0.2,
        "slightly_weak": 0.4,
        "slightly_strong": 0.7,
        "strong": 1.0,
    }
    no_service = "no_service"
    learned = {
        "adaptive": "hybrid",
        "a3c_mlp": "mlp",
        "a3c_lstm": "lstm",
        "dqn_hybrid": "hybrid",
    }


class FileConstants(object):

    """Headers of the files read and written by the package.
    """
    srpe_header = ["date", "perceived_exertion"]
    sessions_header = ["date", "duration_min", "avg_hr", "rest_hr", "max_hr", "sex"]
    vo2max_header = ["date", "vo2max"]
    profiles_header = ["user_id", "alpha", "beta", "lambda", "mu", "delta", "k_f", "k_g", "m", "l", "source"]
    results_header = ["group", "env", "stage", "strategy", "rep", "seed", "total_reward"]
    stats_header = ["comparison", "mean_diff", "se", "p", "ci_lo", "ci_hi"]
    curve_header = ["step", "eval_mean", "eval_std"]
    config_env_var = "GOAL_SETTING_CONFIG"

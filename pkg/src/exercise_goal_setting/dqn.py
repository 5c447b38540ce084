"""Deep Q-network competitor on the hybrid trunk.

The actor head of the network is read as a 10-way Q head; the critic head is unused. Training
follows the usual recipe: epsilon-greedy exploration, a uniform replay buffer and a target
network synchronized every ``cfg.target_sync`` steps. Training is single-threaded.

"""

import logging
from typing import Optional, Tuple

import numpy as np

from exercise_goal_setting.a3c import EnvFactory, evaluation_configs
from exercise_goal_setting.agents import LearningCurve, TrainConfig, greedy_returns
from exercise_goal_setting.exceptions import DomainError, TrainingError
from exercise_goal_setting.network import (
    Gradients,
    HybridNetParams,
    NetSpec,
    OptimizerState,
    backward_from_outputs,
    forward,
    save_checkpoint,
)
from exercise_goal_setting.parameter_store import ParameterStore

logger = logging.getLogger(__name__)


class ReplayBuffer(object):
    """Uniform experience replay over preallocated arrays

    Args:
        capacity (int): maximum number of transitions; the oldest are overwritten
        window_shape (tuple): shape (W, F) of one observation window
    """

    def __init__(self, capacity: int, window_shape: Tuple[int, int]) -> None:
        if capacity < 1:
            raise DomainError(f"Replay capacity must be positive, got {capacity}")
        self.capacity = capacity
        self.observations = np.zeros((capacity,) + tuple(window_shape))
        self.next_observations = np.zeros((capacity,) + tuple(window_shape))
        self.actions = np.zeros(capacity, dtype=int)
        self.rewards = np.zeros(capacity)
        self.dones = np.zeros(capacity)
        self._cursor = 0
        self._size = 0

    def add(self, observation: np.ndarray, action: int, r_t: float, next_observation: np.ndarray, done: bool) -> None:
        k = self._cursor
        self.observations[k] = observation
        self.actions[k] = action
        self.rewards[k] = r_t
        self.next_observations[k] = next_observation
        self.dones[k] = float(done)
        self._cursor = (k + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator):
        """Draw ``batch_size`` transitions uniformly with replacement"""
        if self._size == 0:
            raise DomainError("Cannot sample from an empty replay buffer")
        idx = rng.integers(0, self._size, size=batch_size)
        return self.observations[idx], self.actions[idx], self.rewards[idx], self.next_observations[idx], self.dones[idx]

    def __len__(self) -> int:
        return self._size


def epsilon_at(step: int, cfg: TrainConfig) -> float:
    """Linearly annealed exploration rate"""
    if step >= cfg.epsilon_decay_steps:
        return cfg.epsilon_end
    fraction = step / cfg.epsilon_decay_steps
    return cfg.epsilon_start + fraction * (cfg.epsilon_end - cfg.epsilon_start)


def epsilon_greedy(q_values: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    """A uniform random action with probability ``epsilon``, else the argmax of ``q_values``"""
    if rng.random() < epsilon:
        return int(rng.integers(0, len(q_values)))
    return int(np.argmax(q_values))


def q_gradients(params: HybridNetParams, target: HybridNetParams, batch, gamma: float) -> Gradients:
    """Gradients of the mean squared temporal-difference error over a replay batch"""
    observations, actions, rewards, next_observations, dones = batch
    next_q = forward(target, next_observations).logits
    y = rewards + gamma * (1.0 - dones) * np.max(next_q, axis=1)

    result = forward(params, observations)
    rows = np.arange(len(actions))
    td = result.logits[rows, actions] - y
    loss = float(np.mean(td ** 2))
    if not np.isfinite(loss):
        raise TrainingError(f"Non-finite temporal-difference loss {loss}")

    dlogits = np.zeros_like(result.logits)
    dlogits[rows, actions] = 2.0 * td / len(actions)
    grads = Gradients(backward_from_outputs(params, result, dlogits, np.zeros(len(actions))), loss)
    if not grads.all_finite():
        raise TrainingError("Non-finite gradient in Q update")
    return grads


def dqn_train(env_factory: EnvFactory, cfg: TrainConfig, spec: Optional[NetSpec] = None) -> Tuple[HybridNetParams, LearningCurve]:
    """Train a Q-network on the hybrid trunk.

    Args:
        env_factory (callable): ``worker_id -> GoalSettingEnv``
        cfg (TrainConfig): training hyperparameters; ``workers`` is ignored
        spec (NetSpec, optional): architecture. Defaults to the hybrid network.

    Returns:
        tuple: (trained parameters, learning curve with the same evaluation protocol as `a3c_train`)

    Raises:
        TrainingError: on divergence, carrying the last valid parameters as ``checkpoint``
    """
    spec = spec if spec is not None else NetSpec.hybrid()
    rng = np.random.default_rng([cfg.seed, 0])
    params = HybridNetParams.initialize(spec, np.random.default_rng(cfg.seed))
    optimizer = OptimizerState.for_params(
        params, learning_rate=cfg.learning_rate, decay=cfg.rms_decay, epsilon=cfg.rms_epsilon)
    store = ParameterStore(params, optimizer, max_norm=cfg.grad_clip)
    target = params.copy()

    env = env_factory(0)
    scale = cfg.reward_multiplier(env.cfg.horizon)
    eval_configs = evaluation_configs(env.cfg, cfg.seed, cfg.eval_episodes)
    replay = ReplayBuffer(min(cfg.replay_capacity, cfg.T_max), (spec.window, spec.n_features))
    curve = LearningCurve()
    last_valid = params.copy()

    def record_point() -> None:
        nonlocal last_valid
        current = store.params
        if not current.all_finite():
            raise TrainingError("Q-network parameters became non-finite", last_valid.tensors, store.global_step)
        totals = greedy_returns(current, eval_configs)
        mean = float(np.mean(totals))
        if not np.isfinite(mean):
            raise TrainingError(f"Evaluation reward is {mean}", last_valid.tensors, store.global_step)
        last_valid = current.copy()
        curve.append(store.global_step, store.episodes, mean, float(np.std(totals)))
        logger.info("step %d, episodes %d: eval mean %.4f", store.global_step, store.episodes, mean)

    logger.info("Training DQN on %s network (%d parameters) for %d steps", spec.kind, len(params), cfg.T_max)
    try:
        record_point()
        observation, _ = env.reset(seed=int(rng.integers(0, 2 ** 63)))
        while store.global_step < cfg.T_max:
            step = store.global_step
            q_values = forward(store.params, observation).logits[0]
            action = epsilon_greedy(q_values, epsilon_at(step, cfg), rng)
            next_observation, r_t, terminated, _, _ = env.step(action)
            replay.add(observation, action, scale * r_t, next_observation, terminated)
            observation = next_observation

            if step >= cfg.learning_starts:
                batch = replay.sample(cfg.batch_size, rng)
                try:
                    grads = q_gradients(store.params, target, batch, cfg.gamma)
                except TrainingError as e:
                    raise TrainingError(str(e), last_valid.tensors, step) from e
                store.apply(grads)

            step = store.advance(1, episodes=int(terminated))
            if step % cfg.target_sync == 0:
                target = store.params.copy()
            if terminated:
                observation, _ = env.reset(seed=int(rng.integers(0, 2 ** 63)))
            if step % cfg.eval_interval == 0 or step == cfg.T_max:
                record_point()
    except TrainingError as e:
        logger.error("DQN training diverged at step %s: %s", e.global_step, e)
        if cfg.checkpoint_path and e.checkpoint is not None:
            save_checkpoint(cfg.checkpoint_path, HybridNetParams(spec, e.checkpoint))
        raise

    if cfg.checkpoint_path:
        save_checkpoint(cfg.checkpoint_path, store.params, store.optimizer_state)
    return store.params, curve

"""Asynchronous advantage actor-critic training and its architecture ablations.

Each worker copies the shared parameters, rolls ``t_max`` steps sampling goals from the
actor's softmax, bootstraps the n-step returns from the critic at the segment end and
applies its gradients to the shared `ParameterStore`. Training rewards are multiplied by
``cfg.reward_multiplier(horizon)``; evaluation totals stay in raw reward units. With one worker
the loop runs in the calling thread and a fixed seed reproduces the learning curve exactly.

"""

import logging
import threading
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from exercise_goal_setting.agents import LearningCurve, TrainConfig, greedy_returns
from exercise_goal_setting.constants import TrainingDefaults
from exercise_goal_setting.environment import EpisodeConfig, GoalSettingEnv
from exercise_goal_setting.exceptions import TrainingError
from exercise_goal_setting.network import (
    HybridNetParams,
    NetSpec,
    OptimizerState,
    Segment,
    Targets,
    backward,
    forward,
    save_checkpoint,
    softmax,
)
from exercise_goal_setting.parameter_store import ParameterStore

logger = logging.getLogger(__name__)

EnvFactory = Callable[[int], GoalSettingEnv]


def make_env_factory(cfg: EpisodeConfig, window: int) -> EnvFactory:
    """Return a factory building an independent environment per worker id"""
    def factory(worker_id: int) -> GoalSettingEnv:
        return GoalSettingEnv(cfg, window=window)
    return factory


def n_step_returns(rewards: Sequence[float], bootstrap: float, gamma: float) -> np.ndarray:
    """``R_t = r_t + gamma r_{t+1} + ... + gamma^n V(s_{t+n})`` for every step of a segment"""
    returns = np.zeros(len(rewards))
    running = float(bootstrap)
    for t in range(len(rewards) - 1, -1, -1):
        running = rewards[t] + gamma * running
        returns[t] = running
    return returns


def evaluation_configs(cfg: EpisodeConfig, seed: int, n_episodes: int) -> List[EpisodeConfig]:
    """Fixed evaluation episodes, disjoint from the training seeds"""
    base = seed + TrainingDefaults.eval_seed_offset
    return [cfg.with_seed(base + k) for k in range(n_episodes)]


def _episode_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2 ** 63))


class _Trainer(object):
    """State shared by the workers of one training run."""

    def __init__(self, store: ParameterStore, env_factory: EnvFactory, cfg: TrainConfig,
                 eval_configs: Sequence[EpisodeConfig]) -> None:
        self.store = store
        self.env_factory = env_factory
        self.cfg = cfg
        self.eval_configs = list(eval_configs)
        self.curve = LearningCurve()
        self.stop = threading.Event()
        self.errors: List[BaseException] = []
        self._eval_lock = threading.Lock()
        self._next_eval = cfg.eval_interval
        self._last_valid = store.snapshot()

    def record_point(self, force: bool = False) -> None:
        with self._eval_lock:
            step = self.store.global_step
            if not force and step < self._next_eval:
                return
            if self.curve.points and step <= self.curve.points[-1].step:
                return
            params = self.store.snapshot()
            if not params.all_finite():
                raise TrainingError("Shared parameters became non-finite", self._last_valid.tensors, step)
            totals = greedy_returns(params, self.eval_configs)
            mean = float(np.mean(totals))
            if not np.isfinite(mean):
                raise TrainingError(f"Evaluation reward is {mean}", self._last_valid.tensors, step)
            self._last_valid = params
            self.curve.append(step, self.store.episodes, mean, float(np.std(totals)))
            self._next_eval = (step // self.cfg.eval_interval + 1) * self.cfg.eval_interval
            logger.info("step %d, episodes %d: eval mean %.4f (sd %.4f)",
                        step, self.store.episodes, mean, float(np.std(totals)))

    def run_worker(self, worker_id: int) -> None:
        try:
            self._work(worker_id)
        except BaseException as e:
            self.errors.append(e)
            self.stop.set()

    def _work(self, worker_id: int) -> None:
        cfg = self.cfg
        rng = np.random.default_rng([cfg.seed, worker_id])
        env = self.env_factory(worker_id)
        observation, _ = env.reset(seed=_episode_seed(rng))
        scale = cfg.reward_multiplier(env.cfg.horizon)

        while not self.stop.is_set():
            remaining = cfg.T_max - self.store.global_step
            if remaining <= 0:
                break
            local = self.store.snapshot()
            windows, actions, rewards = [], [], []
            terminated = False
            for _ in range(min(cfg.t_max, remaining)):
                probs = softmax(forward(local, observation).logits[0])
                action = int(rng.choice(len(probs), p=probs))
                windows.append(observation)
                actions.append(action)
                observation, r_t, terminated, _, _ = env.step(action)
                rewards.append(scale * r_t)
                if terminated:
                    break

            bootstrap = 0.0 if terminated else float(forward(local, observation).value[0])
            returns = n_step_returns(rewards, bootstrap, cfg.gamma)
            try:
                grads = backward(local, Segment(np.stack(windows), np.asarray(actions)), Targets(returns),
                                 cfg.entropy_coef, cfg.value_coef, cfg.normalize_advantages)
            except TrainingError as e:
                raise TrainingError(str(e), self._last_valid.tensors, self.store.global_step) from e
            self.store.apply(grads)
            self.store.advance(len(rewards), episodes=int(terminated))

            if terminated:
                observation, _ = env.reset(seed=_episode_seed(rng))
            self.record_point()


def a3c_train(env_factory: EnvFactory, cfg: TrainConfig, spec: Optional[NetSpec] = None,
              initial_params: Optional[HybridNetParams] = None) -> Tuple[HybridNetParams, LearningCurve]:
    """Train an actor-critic network with ``cfg.workers`` asynchronous workers.

    Evaluation points are recorded at step 0, every ``cfg.eval_interval`` global steps and at the end
    of training, each the greedy mean total reward over ``cfg.eval_episodes`` fixed episodes.

    Args:
        env_factory (callable): ``worker_id -> GoalSettingEnv``; each call must return an independent environment
        cfg (TrainConfig): training hyperparameters
        spec (NetSpec, optional): architecture. Defaults to the hybrid network.
        initial_params (HybridNetParams, optional): starting parameters instead of a seeded initialization

    Returns:
        tuple: (trained parameters, learning curve)

    Raises:
        TrainingError: on divergence, carrying the last valid parameters as ``checkpoint``
    """
    spec = spec if spec is not None else NetSpec.hybrid()
    params = initial_params.copy() if initial_params is not None else HybridNetParams.initialize(
        spec, np.random.default_rng(cfg.seed))
    optimizer = OptimizerState.for_params(
        params, learning_rate=cfg.learning_rate, decay=cfg.rms_decay, epsilon=cfg.rms_epsilon)
    store = ParameterStore(params, optimizer, max_norm=cfg.grad_clip)

    probe = env_factory(-1)
    trainer = _Trainer(store, env_factory, cfg, evaluation_configs(probe.cfg, cfg.seed, cfg.eval_episodes))
    logger.info("Training %s network (%d parameters) with %d worker(s) for %d steps",
                spec.kind, len(params), cfg.workers, cfg.T_max)

    try:
        trainer.record_point(force=True)
        if cfg.workers == 1:
            trainer.run_worker(0)
        else:
            threads = [threading.Thread(target=trainer.run_worker, args=(k,), name=f"a3c-worker-{k}")
                       for k in range(cfg.workers)]
            for thread in threads:
                thread.start()
            for thread in threads:
                thread.join()
        if trainer.errors:
            raise trainer.errors[0]
        trainer.record_point(force=True)
    except TrainingError as e:
        logger.error("Training diverged at step %s: %s", e.global_step, e)
        if cfg.checkpoint_path and e.checkpoint is not None:
            save_checkpoint(cfg.checkpoint_path, HybridNetParams(spec, e.checkpoint))
            logger.error("Last valid parameters saved to %s", cfg.checkpoint_path)
        raise

    logger.info("Finished at step %d after %d episodes; %d update(s) rejected",
                store.global_step, store.episodes, store.rejected_updates)
    if cfg.checkpoint_path:
        save_checkpoint(cfg.checkpoint_path, store.params, store.optimizer_state)
    return store.params, trainer.curve


def a3c_mlp(env_factory: EnvFactory, cfg: TrainConfig, width: int = 64, layers: int = 2) -> Tuple[HybridNetParams, LearningCurve]:
    """Ablation: the same training loop on a dense network over the flattened window"""
    return a3c_train(env_factory, cfg, NetSpec.mlp(width=width, layers=layers))


def a3c_lstm(env_factory: EnvFactory, cfg: TrainConfig, hidden: int = 32) -> Tuple[HybridNetParams, LearningCurve]:
    """Ablation: the same training loop on a recurrent layer feeding the heads directly"""
    return a3c_train(env_factory, cfg, NetSpec.lstm(hidden=hidden))

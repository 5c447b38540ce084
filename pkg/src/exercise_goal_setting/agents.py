"""Goal-setting policies, training configuration, learning curves and paired evaluation.

The trainers live in `exercise_goal_setting.a3c` (asynchronous actor-critic and its architecture
ablations) and `exercise_goal_setting.dqn` (the DQN competitor). Both produce a `NetworkPolicy`.

"""

import copy
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Protocol, Sequence, Union, runtime_checkable

import numpy as np
import pandas as pd

from exercise_goal_setting.constants import FileConstants, NetworkDefaults, TrainingDefaults
from exercise_goal_setting.environment import EpisodeConfig, RunRecord, rollout
from exercise_goal_setting.exceptions import DomainError
from exercise_goal_setting.health import NO_SERVICE, GoalAction
from exercise_goal_setting.network import HybridNetParams, forward

logger = logging.getLogger(__name__)


@runtime_checkable
class Policy(Protocol):
    """Behavior contract of a goal-setting policy.

    ``select_action`` receives the observation window of the user's history and returns a goal on the
    10-level grid (0.0 only for the without-service policy). ``reset`` is called at the start of every episode.
    """

    def select_action(self, window: np.ndarray) -> GoalAction:
        ...

    def reset(self) -> None:
        ...


class FixedPolicy(object):
    """Suggest the same goal level every epoch, ignoring observations."""

    def __init__(self, level: float) -> None:
        action = GoalAction(level)
        if action.level == 0.0:
            raise DomainError("A fixed strategy needs a level on the 0.1..1.0 grid; use no_service_policy() for 0.0")
        self.action = action

    def select_action(self, window: np.ndarray) -> GoalAction:
        return self.action

    def reset(self) -> None:
        return

    def __repr__(self) -> str:
        return f"FixedPolicy({self.action.level})"


class NoServicePolicy(object):
    """The without-recommendation baseline: never sets a goal."""

    def select_action(self, window: np.ndarray) -> GoalAction:
        return NO_SERVICE

    def reset(self) -> None:
        return

    def __repr__(self) -> str:
        return "NoServicePolicy()"


def fixed_policy(level: float) -> FixedPolicy:
    """Return a policy suggesting ``level`` every epoch

    Raises:
        DomainError: if level is off the 0.1..1.0 grid
    """
    return FixedPolicy(level)


def no_service_policy() -> NoServicePolicy:
    return NoServicePolicy()


class NetworkPolicy(object):
    """Goal selection from a trained network's actor (or Q) head.

    Args:
        params (HybridNetParams): network parameters
        greedy (bool, optional): argmax selection; otherwise sample from the softmax. Defaults to True.
        rng (np.random.Generator, optional): sampling stream for non-greedy selection
    """

    def __init__(self, params: HybridNetParams, greedy: bool = True, rng: Optional[np.random.Generator] = None) -> None:
        self.params = params
        self.greedy = greedy
        self.rng = rng if rng is not None else np.random.default_rng(0)

    @property
    def window(self) -> int:
        return self.params.spec.window

    def select_action(self, window: np.ndarray) -> GoalAction:
        logits = forward(self.params, window).logits[0]
        if self.greedy:
            index = int(np.argmax(logits))
        else:
            probs = np.exp(logits - logits.max())
            index = int(self.rng.choice(len(probs), p=probs / probs.sum()))
        return GoalAction.from_index(index)

    def reset(self) -> None:
        return

    def __repr__(self) -> str:
        return f"NetworkPolicy(kind={self.params.spec.kind!r}, greedy={self.greedy})"


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters shared by the asynchronous actor-critic and DQN trainers.

    Args:
        workers (int): worker count N_l
        T_max (int): global step budget
        gamma (float): discount for training returns, in (0, 1]
        t_max (int): rollout segment length
        learning_rate (float): RMS-propagation step size
        entropy_coef (float): entropy bonus coefficient
        value_coef (float): value loss coefficient
        seed (int): master seed
        reward_scale (float): multiplier on training rewards; 0 selects 1/horizon
        normalize_advantages (bool): standardize advantages within each rollout segment
    """
    workers: int = 1
    T_max: int = TrainingDefaults.T_max
    gamma: float = TrainingDefaults.gamma
    t_max: int = TrainingDefaults.t_max
    learning_rate: float = NetworkDefaults.learning_rate
    entropy_coef: float = TrainingDefaults.entropy_coef
    value_coef: float = TrainingDefaults.value_coef
    grad_clip: float = NetworkDefaults.grad_clip
    rms_decay: float = NetworkDefaults.rms_decay
    rms_epsilon: float = NetworkDefaults.rms_epsilon
    seed: int = 0
    eval_interval: int = TrainingDefaults.eval_interval
    eval_episodes: int = TrainingDefaults.eval_episodes
    replay_capacity: int = TrainingDefaults.replay_capacity
    batch_size: int = TrainingDefaults.batch_size
    target_sync: int = TrainingDefaults.target_sync
    learning_starts: int = TrainingDefaults.learning_starts
    epsilon_start: float = TrainingDefaults.epsilon_start
    epsilon_end: float = TrainingDefaults.epsilon_end
    epsilon_decay_steps: int = TrainingDefaults.epsilon_decay_steps
    reward_scale: float = TrainingDefaults.reward_scale
    normalize_advantages: bool = TrainingDefaults.normalize_advantages
    checkpoint_path: Optional[str] = None

    def __post_init__(self):
        if self.workers < 1:
            raise DomainError(f"workers must be at least 1, got {self.workers}")
        if not self.T_max >= self.t_max >= 1:
            raise DomainError(f"Need T_max >= t_max >= 1, got T_max={self.T_max}, t_max={self.t_max}")
        if not 0 < self.gamma <= 1:
            raise DomainError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.eval_interval < 1 or self.eval_episodes < 1:
            raise DomainError("eval_interval and eval_episodes must be positive")
        if self.learning_rate <= 0:
            raise DomainError("learning_rate must be positive")
        if not 0 <= self.epsilon_end <= self.epsilon_start <= 1:
            raise DomainError("Need 0 <= epsilon_end <= epsilon_start <= 1")
        if not (np.isfinite(self.reward_scale) and self.reward_scale >= 0):
            raise DomainError(f"reward_scale must be finite and non-negative, got {self.reward_scale}")

    def reward_multiplier(self, horizon: int) -> float:
        """Factor applied to environment rewards during training"""
        return self.reward_scale if self.reward_scale > 0 else 1.0 / horizon


@dataclass(frozen=True)
class CurvePoint:
    step: int
    episodes: int
    eval_mean: float
    eval_std: float


@dataclass
class LearningCurve:
    """Evaluation points over training; global steps strictly increase."""
    points: List[CurvePoint] = field(default_factory=list)

    def append(self, step: int, episodes: int, eval_mean: float, eval_std: float) -> None:
        if self.points and step <= self.points[-1].step:
            raise DomainError(f"Learning-curve steps must strictly increase ({step} after {self.points[-1].step})")
        self.points.append(CurvePoint(int(step), int(episodes), float(eval_mean), float(eval_std)))

    @property
    def steps(self) -> List[int]:
        return [p.step for p in self.points]

    @property
    def means(self) -> List[float]:
        return [p.eval_mean for p in self.points]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(p.step, p.episodes, p.eval_mean, p.eval_std) for p in self.points],
            columns=["step", "episodes", "eval_mean", "eval_std"],
        )

    def write_csv(self, path: Union[str, Path]) -> Path:
        """Write the curve with columns ``step,eval_mean,eval_std``"""
        path = Path(path)
        self.to_frame()[FileConstants.curve_header].to_csv(path, index=False)
        return path

    def __len__(self) -> int:
        return len(self.points)


def converging_step(curve: LearningCurve, tolerance: float = TrainingDefaults.convergence_tolerance,
                    counter: str = "step") -> Optional[int]:
    """First evaluation point after which the evaluation mean stays within ``tolerance`` of its final value.

    Args:
        curve (LearningCurve): the learning curve
        tolerance (float, optional): relative band around the final mean. Defaults to 0.05.
        counter (str, optional): ``step`` (global steps) or ``episodes``. Defaults to "step".

    Returns:
        int or None: the counter value at convergence, None for an empty curve
    """
    if counter not in ("step", "episodes"):
        raise DomainError("counter must be 'step' or 'episodes'")
    if not curve.points:
        return None
    final = curve.points[-1].eval_mean
    band = tolerance * abs(final)
    first = len(curve.points) - 1
    for k in range(len(curve.points) - 1, -1, -1):
        if abs(curve.points[k].eval_mean - final) <= band:
            first = k
        else:
            break
    return getattr(curve.points[first], counter)


def greedy_returns(params: HybridNetParams, configs: Sequence[EpisodeConfig]) -> np.ndarray:
    """Undiscounted greedy total reward of ``params`` on each episode config"""
    policy = NetworkPolicy(params, greedy=True)
    return np.array([rollout(policy, cfg, keep_trajectory=False).total_reward for cfg in configs])


def _evaluate_one(policy: Policy, cfg: EpisodeConfig, rep: int, seed: int, strategy: str, group: str,
                  keep_trajectory: bool) -> RunRecord:
    record = rollout(policy, cfg.with_seed(seed), keep_trajectory=keep_trajectory)
    return replace(record, rep=rep, strategy=strategy, group=group)


def evaluate(policy: Policy, configs: Union[EpisodeConfig, Sequence[EpisodeConfig]], n_reps: int, base_seed: int,
             strategy: str = "", group: str = "", workers: int = 1, keep_trajectory: bool = False) -> List[RunRecord]:
    """Evaluate a policy on every episode config with paired seeds.

    Replication ``i`` uses seed ``base_seed + i`` for every config, so strategies evaluated with the same
    ``base_seed`` see identical random streams. Network policies act greedily.

    Args:
        policy (Policy): the policy to evaluate
        configs (EpisodeConfig or sequence): the environment grid
        n_reps (int): replications per config, at least 1
        base_seed (int): seed of replication 0
        strategy (str, optional): label stored on the records
        group (str, optional): label stored on the records
        workers (int, optional): parallel threads over replications. Defaults to 1.
        keep_trajectory (bool, optional): retain per-epoch trajectories. Defaults to False.

    Returns:
        list: RunRecords ordered by config, then replication
    """
    if n_reps < 1:
        raise DomainError(f"n_reps must be at least 1, got {n_reps}")
    if isinstance(configs, EpisodeConfig):
        configs = [configs]
    if isinstance(policy, NetworkPolicy) and not policy.greedy:
        policy = NetworkPolicy(policy.params, greedy=True)

    jobs = [(cfg, rep, base_seed + rep) for cfg in configs for rep in range(n_reps)]
    if workers <= 1:
        return [_evaluate_one(policy, cfg, rep, seed, strategy, group, keep_trajectory) for cfg, rep, seed in jobs]

    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(_evaluate_one, copy.deepcopy(policy), cfg, rep, seed, strategy, group, keep_trajectory)
            for cfg, rep, seed in jobs
        ]
        return [future.result() for future in futures]

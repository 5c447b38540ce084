"""Simulated users: behavior-trend environments, stochastic response to goals and the episode loop.

Within one decision epoch the service proposes a goal ``a_t``, the user exercises at a
realized intensity ``e_t`` drawn from the behavior model, the health state is updated
and the epoch's reward is evaluated. The service only chooses suggestions; the user's
actual behavior is drawn by the environment.

`GoalSettingEnv` exposes the same loop through the gymnasium ``reset``/``step`` contract
for the training code, and `rollout` runs a whole service period for a policy.

"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, List, Optional, Sequence, Tuple, Union

import gymnasium as gym
import numpy as np
from gymnasium import spaces

from exercise_goal_setting.constants import EpisodeDefaults, GoalConstants, NetworkDefaults, TrendConstants
from exercise_goal_setting.exceptions import DomainError, GoalSettingError, PolicyError
from exercise_goal_setting.health import (
    GoalAction,
    HealthState,
    SkillStage,
    UserProfile,
    reward,
    update_state,
)

if TYPE_CHECKING:
    from exercise_goal_setting.agents import Policy

logger = logging.getLogger(__name__)

ENV_IDS = ("E1", "E2", "E3", "E4", "Custom")


@dataclass(frozen=True)
class TrendSchedule:
    """Piecewise-constant multiplier on the user's intrinsic intensity.

    Args:
        env_id (str): E1, E2, E3, E4 or Custom
        breakpoints (tuple): ``(start_day, multiplier)`` pairs sorted by start day, first start day 0
    """
    env_id: str
    breakpoints: Tuple[Tuple[int, float], ...]

    def __post_init__(self):
        if self.env_id not in ENV_IDS:
            raise DomainError(f"Invalid env_id {self.env_id!r}. Must be one of {ENV_IDS}")
        points = tuple((int(day), float(mult)) for day, mult in self.breakpoints)
        if not points or points[0][0] != 0:
            raise DomainError("The first breakpoint must start at day 0")
        days = [day for day, _ in points]
        if any(later <= earlier for earlier, later in zip(days, days[1:])):
            raise DomainError("Breakpoints must be sorted by strictly increasing start day")
        if any(mult <= 0 for _, mult in points):
            raise DomainError("Trend multipliers must be positive")
        object.__setattr__(self, "breakpoints", points)

    @classmethod
    def from_env_id(cls, env_id: str) -> "TrendSchedule":
        """Return one of the four standard schedules E1..E4"""
        if env_id not in TrendConstants.schedules:
            raise DomainError(f"No standard schedule for {env_id!r}. Must be one of {tuple(TrendConstants.schedules)}")
        return cls(env_id, TrendConstants.schedules[env_id])

    def compressed(self, horizon: int, base_horizon: int = EpisodeDefaults.horizon) -> "TrendSchedule":
        """Rescale breakpoint days from a ``base_horizon`` service period onto ``horizon`` days.

        Breakpoints that would collide after rescaling keep the later multiplier. Day 0 keeps the
        opening multiplier; later breakpoints land on day 1 or after.
        """
        points = {}
        for day, mult in self.breakpoints:
            points[max(1, int(day * horizon // base_horizon)) if day > 0 else 0] = mult
        return TrendSchedule(self.env_id, tuple(sorted(points.items())))


@dataclass(frozen=True)
class BehaviorModel:
    """Stochastic user response.

    Args:
        baseline (float): mean intrinsic intensity, in (0, 1]
        sigma (float): response noise standard deviation
        rho (float): goal-pull, the fraction of behavior drawn toward the suggested goal, in [0, 1]
    """
    baseline: float = EpisodeDefaults.baseline
    sigma: float = EpisodeDefaults.sigma
    rho: float = EpisodeDefaults.rho

    def __post_init__(self):
        if not 0 < self.baseline <= 1:
            raise DomainError(f"baseline must lie in (0, 1], got {self.baseline}")
        if not self.sigma >= 0:
            raise DomainError(f"sigma must be nonnegative, got {self.sigma}")
        if not 0 <= self.rho <= 1:
            raise DomainError(f"rho must lie in [0, 1], got {self.rho}")


@dataclass(frozen=True)
class EpisodeConfig:
    """Everything that determines one service period; ``seed`` fully determines its random stream."""
    profile: UserProfile
    trend: TrendSchedule
    behavior: BehaviorModel = field(default_factory=BehaviorModel)
    stage: SkillStage = SkillStage.ACQUISITION
    horizon: int = EpisodeDefaults.horizon
    seed: int = 0

    def __post_init__(self):
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise DomainError(f"horizon must be a positive integer, got {self.horizon}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise DomainError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    def with_seed(self, seed: int) -> "EpisodeConfig":
        return replace(self, seed=int(seed))


@dataclass(frozen=True)
class EpochRecord:
    """One decision epoch: state after the epoch, goal, realized intensity and reward."""
    day: int
    state: HealthState
    action: float
    e: float
    reward: float


@dataclass(frozen=True)
class RunRecord:
    """One replication: the unit of all statistics.

    ``total_reward`` equals the sum of trajectory rewards whenever the trajectory is retained.
    """
    group: str
    env: str
    stage: str
    strategy: str
    rep: int
    seed: int
    total_reward: float
    trajectory: Optional[Tuple[EpochRecord, ...]] = None

    def as_row(self) -> dict:
        return {
            "group": self.group,
            "env": self.env,
            "stage": self.stage,
            "strategy": self.strategy,
            "rep": self.rep,
            "seed": self.seed,
            "total_reward": self.total_reward,
        }


def trend_multiplier(schedule: TrendSchedule, day: int) -> float:
    """Multiplier of the last breakpoint whose start day is at most ``day``.

    Raises:
        DomainError: if day is negative
    """
    if day < 0:
        raise DomainError(f"day must be nonnegative, got {day}")
    multiplier = schedule.breakpoints[0][1]
    for start_day, mult in schedule.breakpoints:
        if start_day > day:
            break
        multiplier = mult
    return multiplier


def sample_behavior(cfg: EpisodeConfig, day: int, a_t: GoalAction, rng: np.random.Generator) -> float:
    """Draw the realized intensity for one epoch.

    The intent is ``trend * baseline`` clipped to [0, 1]. With a goal the intent is mixed with
    the goal level by the goal-pull ``rho``; without service the intent is used as is. Exactly one
    standard normal variate is drawn from ``rng`` per call.
    """
    intent = min(1.0, max(0.0, trend_multiplier(cfg.trend, day) * cfg.behavior.baseline))
    noise = cfg.behavior.sigma * rng.standard_normal()

    if a_t.level == 0.0:
        mean = intent
    else:
        mean = (1.0 - cfg.behavior.rho) * intent + cfg.behavior.rho * a_t.level

    return float(min(1.0, max(0.0, mean + noise)))


def step(state: HealthState, a_t: GoalAction, cfg: EpisodeConfig, day: int, rng: np.random.Generator) -> Tuple[HealthState, float, float]:
    """Run one decision epoch.

    Returns:
        tuple: ``(next_state, e_t, r_t)``
    """
    e_t = sample_behavior(cfg, day, a_t, rng)
    next_state = update_state(state, e_t, cfg.profile)
    r_t = reward(next_state, a_t, cfg.profile, cfg.stage)
    return next_state, e_t, r_t


def initial_state(cfg: EpisodeConfig) -> HealthState:
    """A user starts a service period at the behavior baseline with no in-period stocks."""
    return HealthState(e=0.0, b=cfg.behavior.baseline, f=0.0, g=0.0)


def observation_window(history: Sequence[Sequence[float]], window: int) -> np.ndarray:
    """The most recent ``window`` feature rows, zero-padded at the top.

    Args:
        history (sequence): per-epoch feature rows ``(e, b, f, g, previous goal, day / T)``
        window (int): number of rows W

    Returns:
        np.ndarray: array of shape (W, n_features)
    """
    out = np.zeros((window, NetworkDefaults.n_features))
    rows = np.asarray(history[-window:], dtype=float).reshape(-1, NetworkDefaults.n_features)
    if len(rows):
        out[window - len(rows):] = rows
    return out


class GoalSettingEnv(gym.Env):
    """The goal-setting MDP as a gymnasium environment.

    Actions are indices 0..9 on the goal grid (0.1..1.0); `step` also accepts a `GoalAction`,
    which is how the without-service baseline is simulated. Observations are observation
    windows of shape (W, 6). The episode terminates after ``cfg.horizon`` epochs.

    Args:
        cfg (EpisodeConfig): the service period to simulate
        window (int, optional): observation window W. Defaults to 7.
    """

    metadata = {"render_modes": []}

    def __init__(self, cfg: EpisodeConfig, window: int = NetworkDefaults.window) -> None:
        super().__init__()
        self.cfg = cfg
        self.window = window
        self.action_space = spaces.Discrete(GoalConstants.n_actions)
        self.observation_space = spaces.Box(
            low=0.0, high=np.inf, shape=(window, NetworkDefaults.n_features), dtype=np.float64
        )
        self._rng = np.random.default_rng(cfg.seed)
        self._state = initial_state(cfg)
        self._day = 0
        self._history: List[Tuple[float, ...]] = []
        self._last_action = 0.0

    @property
    def day(self) -> int:
        return self._day

    @property
    def state(self) -> HealthState:
        return self._state

    def _features(self) -> Tuple[float, ...]:
        return self._state.as_tuple() + (self._last_action, self._day / self.cfg.horizon)

    def observation(self) -> np.ndarray:
        return observation_window(self._history, self.window)

    def reset(self, *, seed: Optional[int] = None, options: Optional[dict] = None):
        super().reset(seed=seed)
        if seed is not None:
            self.cfg = self.cfg.with_seed(seed)
        self._rng = np.random.default_rng(self.cfg.seed)
        self._state = initial_state(self.cfg)
        self._day = 0
        self._last_action = 0.0
        self._history = [self._features()]
        return self.observation(), {"day": 0}

    def step(self, action: Union[int, np.integer, GoalAction]):
        if self._day >= self.cfg.horizon:
            raise GoalSettingError("step called on a finished episode; call reset first")
        a_t = action if isinstance(action, GoalAction) else GoalAction.from_index(int(action))

        day = self._day
        self._state, e_t, r_t = step(self._state, a_t, self.cfg, day, self._rng)
        self._day += 1
        self._last_action = a_t.level
        self._history.append(self._features())

        terminated = self._day >= self.cfg.horizon
        info = {"day": day, "e": e_t, "action": a_t.level, "state": self._state}
        return self.observation(), r_t, terminated, False, info


def rollout(policy: "Policy", cfg: EpisodeConfig, keep_trajectory: bool = True) -> RunRecord:
    """Run one service period for ``policy``.

    Args:
        policy (Policy): anything with ``reset()`` and ``select_action(window) -> GoalAction``
        cfg (EpisodeConfig): the service period
        keep_trajectory (bool, optional): retain per-epoch records. Defaults to True.

    Returns:
        RunRecord: trajectory and total reward; ``group`` and ``strategy`` are left empty for the caller

    Raises:
        PolicyError: if the policy fails, the episode is aborted
    """
    env = GoalSettingEnv(cfg, window=getattr(policy, "window", NetworkDefaults.window))
    observation, _ = env.reset()
    policy.reset()

    trajectory = []
    total = 0.0
    terminated = False
    while not terminated:
        day = env.day
        try:
            a_t = policy.select_action(observation)
        except Exception as e:
            raise PolicyError(f"Policy failed on day {day}: {e}") from e
        observation, r_t, terminated, _, info = env.step(a_t)
        total += r_t
        if keep_trajectory:
            trajectory.append(EpochRecord(day=day, state=info["state"], action=a_t.level, e=info["e"], reward=r_t))

    return RunRecord(
        group="",
        env=cfg.trend.env_id,
        stage=cfg.stage.value,
        strategy="",
        rep=0,
        seed=cfg.seed,
        total_reward=total,
        trajectory=tuple(trajectory) if keep_trajectory else None,
    )

"""Fitness-fatigue health dynamics, exercise performance and the per-epoch reward.

Every function in this module is a pure function of its arguments and is safe to call
from any number of threads.

The user type is a nine-parameter profile. Each epoch, realized exercise intensity ``e``
adds ``e ** lam`` to a fitness stock decaying at rate ``alpha`` and ``e ** mu`` to a
fatigue stock decaying at rate ``beta``, while the base level ``b`` tracks past exercise
as an exponentially weighted average with weight ``delta``.

"""

import math
from dataclasses import dataclass
from enum import Enum

from exercise_goal_setting.constants import GoalConstants
from exercise_goal_setting.exceptions import DomainError


class SkillStage(Enum):
    """Enumerated values that represent the user's exercise skill stage.

    The stage is fixed for an entire service period.

    Args:
        Enum (SkillStage): Acquisition (additive evaluation) or Retention (multiplicative evaluation)
    """
    ACQUISITION = "acquisition"
    RETENTION = "retention"

    @classmethod
    def parse(cls, value) -> "SkillStage":
        if isinstance(value, SkillStage):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise DomainError(f"Invalid skill stage {value!r}. Must be 'acquisition' or 'retention'") from None


class IntensityGroup(Enum):
    """Enumerated values that group goal levels by intensity.
    """
    NO_SERVICE = "no_service"
    WEAK = "weak"
    SLIGHTLY_WEAK = "slightly_weak"
    SLIGHTLY_STRONG = "slightly_strong"
    STRONG = "strong"


def _check_finite(name: str, value: float) -> None:
    if not math.isfinite(value):
        raise DomainError(f"{name} must be finite, got {value!r}")


def _check_intensity(e_t: float) -> None:
    _check_finite("e_t", e_t)
    if not 0.0 <= e_t <= 1.0:
        raise DomainError(f"e_t must lie in [0, 1], got {e_t}")


@dataclass(frozen=True)
class UserProfile:
    """The user type governing dynamics and utility.

    Args:
        alpha (float): fitness decay rate, in (0, 1)
        beta (float): fatigue decay rate, in (0, 1)
        lam (float): fitness response exponent, in (0, 1]
        mu (float): fatigue response exponent, at least 1
        delta (float): base-level decay rate, in (0, 1]
        k_f (float): marginal utility of fitness, positive
        k_g (float): marginal disutility of fatigue, positive
        m (float): goal-achievement bonus, nonnegative
        l (float): goal-failure disutility scale, nonnegative
    """
    alpha: float
    beta: float
    lam: float
    mu: float
    delta: float
    k_f: float
    k_g: float
    m: float
    l: float

    def __post_init__(self):
        for name in ("alpha", "beta", "lam", "mu", "delta", "k_f", "k_g", "m", "l"):
            _check_finite(name, getattr(self, name))
        if not 0 < self.alpha < 1:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0 < self.beta < 1:
            raise DomainError(f"beta must lie in (0, 1), got {self.beta}")
        if not 0 < self.delta <= 1:
            raise DomainError(f"delta must lie in (0, 1], got {self.delta}")
        if not 0 < self.lam <= 1:
            raise DomainError(f"lam must lie in (0, 1], got {self.lam}")
        if self.mu < 1:
            raise DomainError(f"mu must be at least 1, got {self.mu}")
        if self.k_f <= 0 or self.k_g <= 0:
            raise DomainError("k_f and k_g must be positive")
        if self.m < 0 or self.l < 0:
            raise DomainError("m and l must be nonnegative")


@dataclass(frozen=True)
class HealthState:
    """Per-epoch health state.

    Args:
        e (float): realized exercise intensity this epoch, in [0, 1]
        b (float): base level of past exercise
        f (float): fitness stock
        g (float): fatigue stock
    """
    e: float
    b: float
    f: float
    g: float

    def __post_init__(self):
        for name in ("e", "b", "f", "g"):
            _check_finite(name, getattr(self, name))
        if not 0.0 <= self.e <= 1.0:
            raise DomainError(f"e must lie in [0, 1], got {self.e}")
        if self.b < 0 or self.f < 0 or self.g < 0:
            raise DomainError("b, f and g must be nonnegative")

    def as_tuple(self) -> tuple:
        return (self.e, self.b, self.f, self.g)


def _is_on_grid(level: float) -> bool:
    scaled = level * 10.0
    return math.isfinite(level) and 0.0 <= level <= 1.0 and abs(scaled - round(scaled)) < 1e-9


@dataclass(frozen=True)
class GoalAction:
    """A normalized goal intensity on the 0.1 grid. 0.0 is reserved for the without-service baseline.

    Levels are snapped to the exact one-decimal value, so ``GoalAction(0.30000000000000004).level == 0.3``.
    """
    level: float

    def __post_init__(self):
        if not _is_on_grid(self.level):
            raise DomainError(f"Goal level {self.level!r} is not a multiple of 0.1 within [0, 1]")
        object.__setattr__(self, "level", round(self.level, 1))

    @classmethod
    def from_index(cls, index: int) -> "GoalAction":
        """Map an action index 0..9 onto the levels 0.1..1.0"""
        if not 0 <= index < GoalConstants.n_actions:
            raise DomainError(f"Action index {index} outside 0..{GoalConstants.n_actions - 1}")
        return cls(GoalConstants.levels[index])

    @property
    def index(self) -> int:
        """Index of the level on the 10-level grid; -1 for the no-service level."""
        return int(round(self.level * 10)) - 1

    @property
    def group(self) -> IntensityGroup:
        return goal_group(self.level)


NO_SERVICE = GoalAction(GoalConstants.no_service_level)


def goal_group(level: float) -> IntensityGroup:
    """Group a goal level by intensity.

    * ``0.0`` - without service
    * ``0.1``, ``0.2`` - weak
    * ``0.3`` .. ``0.5`` - slightly weak
    * ``0.6`` .. ``0.8`` - slightly strong
    * ``0.9``, ``1.0`` - strong
    """
    if not _is_on_grid(level):
        raise DomainError(f"Goal level {level!r} is not on the 0.1 grid")
    tenths = int(round(level * 10))
    if tenths == 0:
        return IntensityGroup.NO_SERVICE
    if tenths <= 2:
        return IntensityGroup.WEAK
    if tenths <= 5:
        return IntensityGroup.SLIGHTLY_WEAK
    if tenths <= 8:
        return IntensityGroup.SLIGHTLY_STRONG
    return IntensityGroup.STRONG


def update_state(prev: HealthState, e_t: float, profile: UserProfile) -> HealthState:
    """Advance the health state by one epoch of realized intensity.

    Args:
        prev (HealthState): the state after the previous epoch
        e_t (float): realized intensity, in [0, 1]
        profile (UserProfile): the user type

    Returns:
        HealthState: ``(e_t, delta*b + (1-delta)*e_t, alpha*f + e_t**lam, beta*g + e_t**mu)``

    Raises:
        DomainError: if e_t is out of range or not finite
    """
    _check_intensity(e_t)

    f_next = profile.alpha * prev.f + e_t ** profile.lam
    g_next = profile.beta * prev.g + e_t ** profile.mu
    b_next = profile.delta * prev.b + (1.0 - profile.delta) * e_t

    return HealthState(e=e_t, b=b_next, f=f_next, g=g_next)


def performance(state: HealthState, profile: UserProfile, stage: SkillStage) -> float:
    """Exercise performance of a state.

    Acquisition is additive, ``b + k_f*f - k_g*g``; retention is multiplicative against the
    base level, ``b * (1 + k_f*f - k_g*g)``. The value may be negative.
    """
    stock_effect = profile.k_f * state.f - profile.k_g * state.g
    if stage is SkillStage.ACQUISITION:
        return state.b + stock_effect
    elif stage is SkillStage.RETENTION:
        return state.b * (1.0 + stock_effect)
    raise DomainError(f"Invalid skill stage {stage!r}")


def intervention_effect(e_t: float, a_t: GoalAction, profile: UserProfile) -> float:
    """Utility of goal setting: ``+m`` on achievement, ``-l`` times the relative shortfall otherwise, 0 without service."""
    _check_intensity(e_t)
    if a_t.level == 0.0:
        return 0.0
    if e_t >= a_t.level:
        return profile.m
    return -profile.l * (a_t.level - e_t) / a_t.level


def reward(state: HealthState, a_t: GoalAction, profile: UserProfile, stage: SkillStage) -> float:
    """Per-epoch reward of an already updated state: performance plus intervention effect."""
    return performance(state, profile, stage) + intervention_effect(state.e, a_t, profile)

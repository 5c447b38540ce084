"""Experiment configuration.

Settings may be read from a TOML file given as an argument, from the file named by the environment
variable ``GOAL_SETTING_CONFIG``, or left at the built-in defaults. The file has the sections
``[profile]``, ``[env]``, ``[behavior]``, ``[agent]`` and ``[experiment]``; unknown sections or keys
are rejected.

"""

import logging
import os
import sys
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from pathlib import Path
from typing import Optional, Tuple, Union

from exercise_goal_setting.agents import TrainConfig
from exercise_goal_setting.constants import (
    EpisodeDefaults,
    FileConstants,
    NetworkDefaults,
    StrategyConstants,
    TrainingDefaults,
)
from exercise_goal_setting.environment import BehaviorModel, EpisodeConfig, TrendSchedule
from exercise_goal_setting.exceptions import ConfigError, DomainError
from exercise_goal_setting.health import SkillStage, UserProfile
from exercise_goal_setting.network import NetSpec

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)


class SettingsSource(Enum):
    """Enumerated values that represent where the experiment settings were read from.

    Args:
        Enum (integer): Integer that represents the settings source
    """
    DEFAULTS = 0
    FILE = 1
    ENV = 2


@dataclass
class ProfileSection:
    alpha: float = 0.9
    beta: float = 0.5
    lam: float = 0.8
    mu: float = 1.5
    delta: float = 0.95
    k_f: float = 0.3
    k_g: float = 0.2
    m: float = 1.0
    l: float = 1.0

    def to_profile(self) -> UserProfile:
        return UserProfile(**{f.name: getattr(self, f.name) for f in fields(self)})


@dataclass
class EnvSection:
    env_id: str = "E1"
    horizon: int = EpisodeDefaults.horizon
    stage: str = "acquisition"
    breakpoints: list = field(default_factory=list)


@dataclass
class BehaviorSection:
    baseline: float = EpisodeDefaults.baseline
    sigma: float = EpisodeDefaults.sigma
    rho: float = EpisodeDefaults.rho


@dataclass
class AgentSection:
    architecture: str = "hybrid"
    hidden: int = NetworkDefaults.hidden
    dense: int = NetworkDefaults.dense
    window: int = NetworkDefaults.window
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


@dataclass
class ExperimentSection:
    groups: list = field(default_factory=lambda: ["G1"])
    envs: list = field(default_factory=lambda: ["E1", "E2", "E3", "E4"])
    stages: list = field(default_factory=lambda: ["acquisition", "retention"])
    strategies: list = field(default_factory=lambda: [StrategyConstants.adaptive]
                             + list(StrategyConstants.fixed_levels) + [StrategyConstants.no_service])
    n_reps: int = 30
    seed: int = 0
    workers: int = 1
    out: str = "results"
    deterministic: bool = False
    retrain_per_run: bool = False
    g1_user: int = 0
    srpe_path: str = ""
    profiles_path: str = ""
    m_values: list = field(default_factory=lambda: [0.0, 1.0, 2.0, 4.0])
    l_values: list = field(default_factory=lambda: [0.0, 1.0, 2.0, 4.0])
    sweep_retrain: bool = True
    timing_passes: int = 10_000


SECTIONS = {
    "profile": ProfileSection,
    "env": EnvSection,
    "behavior": BehaviorSection,
    "agent": AgentSection,
    "experiment": ExperimentSection,
}


def _coerce(section: str, key: str, value, default):
    """Check a file value against the type of the field default"""
    where = f"[{section}] {key}"
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be a boolean, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{where} must be an array, got {value!r}")
        return value
    return value


def _build_section(name: str, table) -> object:
    cls = SECTIONS[name]
    if not isinstance(table, dict):
        raise ConfigError(f"[{name}] must be a table")
    defaults = cls()
    known = {f.name for f in fields(cls)}
    values = {}
    for key, value in table.items():
        if key not in known:
            raise ConfigError(f"Unknown key {key!r} in section [{name}]")
        values[key] = _coerce(name, key, value, getattr(defaults, key))
    return replace(defaults, **values)


@dataclass
class ExperimentSettings(object):
    """Creates an ExperimentSettings object holding every configurable value

    Args:
        profile (ProfileSection): the simulated user's type
        env (EnvSection): trend schedule, horizon and skill stage
        behavior (BehaviorSection): stochastic response of the user
        agent (AgentSection): architecture and training hyperparameters
        experiment (ExperimentSection): grid selections, replications, seeds and output
        source (SettingsSource): where the values came from
        path (str, optional): the file read, if any
    """
    profile: ProfileSection = field(default_factory=ProfileSection)
    env: EnvSection = field(default_factory=EnvSection)
    behavior: BehaviorSection = field(default_factory=BehaviorSection)
    agent: AgentSection = field(default_factory=AgentSection)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    source: SettingsSource = SettingsSource.DEFAULTS
    path: Optional[str] = None

    @classmethod
    def from_toml(cls, text: str, source: SettingsSource = SettingsSource.FILE, path: str = None) -> "ExperimentSettings":
        """Parse settings from TOML text

        Raises:
            ConfigError: on invalid TOML, unknown sections or keys, or mistyped values
        """
        try:
            document = tomllib.loads(text)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"Invalid TOML{' in ' + path if path else ''}: {e}") from e
        sections = {}
        for name, table in document.items():
            if name not in SECTIONS:
                raise ConfigError(f"Unknown section [{name}]. Must be one of {tuple(SECTIONS)}")
            sections[name] = _build_section(name, table)
        settings = cls(source=source, path=path, **sections)
        settings.validate()
        return settings

    def validate(self) -> None:
        """Build every derived object once so invalid values fail early

        Raises:
            ConfigError: naming the offending value
        """
        try:
            self.episode_config()
            self.train_config()
            self.net_spec()
        except DomainError as e:
            raise ConfigError(str(e)) from e
        unknown = [s for s in self.experiment.strategies if s not in known_strategies()]
        if unknown:
            raise ConfigError(f"Unknown strategies {unknown}. Must be among {known_strategies()}")
        if self.experiment.n_reps < 1:
            raise ConfigError("[experiment] n_reps must be at least 1")

    @property
    def stage(self) -> SkillStage:
        return SkillStage.parse(self.env.stage)

    def trend(self) -> TrendSchedule:
        if self.env.env_id == "Custom":
            return TrendSchedule("Custom", tuple(tuple(point) for point in self.env.breakpoints))
        schedule = TrendSchedule.from_env_id(self.env.env_id)
        if self.env.horizon != EpisodeDefaults.horizon:
            schedule = schedule.compressed(self.env.horizon)
        return schedule

    def episode_config(self, profile: Optional[UserProfile] = None, env_id: Optional[str] = None,
                       stage: Optional[SkillStage] = None, baseline: Optional[float] = None,
                       seed: Optional[int] = None) -> EpisodeConfig:
        """The `EpisodeConfig` of these settings, with optional per-cell replacements"""
        trend = self.trend() if env_id is None else replace(self, env=replace(self.env, env_id=env_id)).trend()
        behavior = BehaviorModel(
            baseline=self.behavior.baseline if baseline is None else baseline,
            sigma=self.behavior.sigma,
            rho=self.behavior.rho,
        )
        return EpisodeConfig(
            profile=profile if profile is not None else self.profile.to_profile(),
            trend=trend,
            behavior=behavior,
            stage=stage if stage is not None else self.stage,
            horizon=self.env.horizon,
            seed=self.experiment.seed if seed is None else seed,
        )

    def train_config(self, seed: Optional[int] = None, checkpoint_path: Optional[str] = None) -> TrainConfig:
        agent = self.agent
        workers = 1 if self.experiment.deterministic else agent.workers
        return TrainConfig(
            workers=workers,
            T_max=agent.T_max,
            gamma=agent.gamma,
            t_max=agent.t_max,
            learning_rate=agent.learning_rate,
            entropy_coef=agent.entropy_coef,
            value_coef=agent.value_coef,
            grad_clip=agent.grad_clip,
            rms_decay=agent.rms_decay,
            rms_epsilon=agent.rms_epsilon,
            seed=self.experiment.seed if seed is None else seed,
            eval_interval=agent.eval_interval,
            eval_episodes=agent.eval_episodes,
            replay_capacity=agent.replay_capacity,
            batch_size=agent.batch_size,
            target_sync=agent.target_sync,
            learning_starts=agent.learning_starts,
            epsilon_start=agent.epsilon_start,
            epsilon_end=agent.epsilon_end,
            epsilon_decay_steps=agent.epsilon_decay_steps,
            reward_scale=agent.reward_scale,
            normalize_advantages=agent.normalize_advantages,
            checkpoint_path=checkpoint_path,
        )

    def net_spec(self, architecture: Optional[str] = None) -> NetSpec:
        return NetSpec.for_kind(architecture or self.agent.architecture, hidden=self.agent.hidden,
                                dense=self.agent.dense, window=self.agent.window)

    @property
    def eval_workers(self) -> int:
        return 1 if self.experiment.deterministic else self.experiment.workers

    def with_overrides(self, seed: Optional[int] = None, reps: Optional[int] = None, workers: Optional[int] = None,
                       out: Optional[str] = None, deterministic: bool = False) -> "ExperimentSettings":
        """Apply command-line overrides; ``deterministic`` forces one worker everywhere"""
        experiment = self.experiment
        if seed is not None:
            experiment = replace(experiment, seed=seed)
        if reps is not None:
            experiment = replace(experiment, n_reps=reps)
        if workers is not None:
            experiment = replace(experiment, workers=workers)
        if out is not None:
            experiment = replace(experiment, out=out)
        agent = self.agent if workers is None else replace(self.agent, workers=workers)
        if deterministic or experiment.deterministic:
            experiment = replace(experiment, deterministic=True, workers=1)
            agent = replace(agent, workers=1)
        settings = replace(self, experiment=experiment, agent=agent)
        settings.validate()
        return settings

    def __str__(self) -> str:
        """String representation of the ExperimentSettings object

        Returns:
            str: the string representation of the ExperimentSettings object
        """
        origin = {
            SettingsSource.DEFAULTS: "built-in defaults",
            SettingsSource.FILE: f"file {self.path}",
            SettingsSource.ENV: f"file {self.path} (from ${FileConstants.config_env_var})",
        }[self.source]
        return f"""
        ExperimentSettings object properties:

        source = {origin}
        env = {self.env.env_id} ({self.env.stage}, {self.env.horizon} days)
        behavior = baseline {self.behavior.baseline}, sigma {self.behavior.sigma}, rho {self.behavior.rho}
        agent = {self.agent.architecture}, {self.agent.workers} worker(s), T_max {self.agent.T_max}
        grid = {self.experiment.groups} x {self.experiment.envs} x {self.experiment.stages}
        strategies = {self.experiment.strategies}
        replications = {self.experiment.n_reps}, seed {self.experiment.seed}
        deterministic = {self.experiment.deterministic}

        """

    def __repr__(self) -> str:
        return self.__str__()


def known_strategies() -> Tuple[str, ...]:
    return tuple(StrategyConstants.learned) + tuple(StrategyConstants.fixed_levels) + (StrategyConstants.no_service,)


def load_settings(path: Union[str, Path, None] = None) -> ExperimentSettings:
    """Load settings from ``path``, else from ``$GOAL_SETTING_CONFIG``, else the defaults

    Raises:
        ConfigError: if the file cannot be read or is invalid
    """
    source = SettingsSource.FILE
    if path is None:
        env_path = os.getenv(FileConstants.config_env_var)
        if not env_path:
            logger.debug("No configuration file given; using defaults")
            return ExperimentSettings()
        path, source = env_path, SettingsSource.ENV

    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read configuration file {path}: {e}") from e
    settings = ExperimentSettings.from_toml(text, source=source, path=str(path))
    logger.info("Loaded settings from %s", path)
    return settings
"""Methods that run the goal-setting experiments

The methods contained in this module train the learned strategies, evaluate every strategy on the
experiment grid with paired seeds, run the sensitivity sweep and the timing report, and write the
result files.

"""

import logging
import math
import time
from collections import Counter, OrderedDict
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from exercise_goal_setting import analysis
from exercise_goal_setting.a3c import a3c_train, make_env_factory
from exercise_goal_setting.agents import (
    LearningCurve,
    NetworkPolicy,
    Policy,
    converging_step,
    evaluate,
    fixed_policy,
    no_service_policy,
)
from exercise_goal_setting.analysis import _output_type_validator
from exercise_goal_setting.constants import FileConstants, StrategyConstants
from exercise_goal_setting.datahelpers import normalize, random_profile, read_profiles, synth_g1
from exercise_goal_setting.dqn import dqn_train
from exercise_goal_setting.environment import EpisodeConfig, RunRecord
from exercise_goal_setting.exceptions import ConfigError, NoDataError, ParseError, TrainingError
from exercise_goal_setting.health import IntensityGroup, SkillStage, UserProfile, goal_group
from exercise_goal_setting.log_processor import load_srpe
from exercise_goal_setting.network import HybridNetParams, forward
from exercise_goal_setting.settings import ExperimentSettings, known_strategies

logger = logging.getLogger(__name__)


def _strategy_validator(strategy: str) -> bool:
    """Internal function to validate a strategy name

    Args:
        strategy (str): the strategy name

    Returns:
        bool: True if valid
    """
    known = known_strategies()
    if strategy not in known:
        raise ConfigError(f"Invalid strategy {strategy!r}. Must be one of {known}")
    return True


def _selection_validator(name: str, values: Sequence) -> bool:
    if not values:
        raise ConfigError(f"The {name} selection must not be empty")
    return True


def resolve_group(settings: ExperimentSettings, group: str) -> Tuple[UserProfile, float]:
    """The user profile and behavior baseline simulated for a data group.

    * ``G1`` - one synthetic walking user (``[experiment] g1_user``); baseline is the mean normalized step count
    * ``G2`` - a perceived-exertion diary (``[experiment] srpe_path``) with a random profile
    * ``G3`` - the first fitted row of ``[experiment] profiles_path``
    * any other label - the ``[profile]`` and ``[behavior]`` sections as given

    Raises:
        ConfigError: if the data a group needs is not configured
    """
    seed = settings.experiment.seed
    if group == "G1":
        users = synth_g1(n_users=settings.experiment.g1_user + 1, seed=seed)
        user = users[settings.experiment.g1_user]
        baseline = float(np.mean(normalize(user.series).normalized))
        return user.profile, min(1.0, max(1e-3, baseline))
    if group == "G2":
        if not settings.experiment.srpe_path:
            raise ConfigError("Group G2 needs [experiment] srpe_path")
        series = normalize(load_srpe(settings.experiment.srpe_path))
        baseline = float(np.mean(series.normalized))
        return random_profile(np.random.default_rng([seed, 2])), min(1.0, max(1e-3, baseline))
    if group == "G3":
        if not settings.experiment.profiles_path:
            raise ConfigError("Group G3 needs [experiment] profiles_path")
        rows = read_profiles(settings.experiment.profiles_path)
        if not rows:
            raise NoDataError(f"No profiles in {settings.experiment.profiles_path}")
        return rows[0][1], settings.behavior.baseline
    return settings.profile.to_profile(), settings.behavior.baseline


def train_strategy(strategy: str, settings: ExperimentSettings, cfg: EpisodeConfig,
                   seed: Optional[int] = None, checkpoint_path: Optional[str] = None) -> Tuple[HybridNetParams, LearningCurve]:
    """Train one learned strategy on an episode config

    Raises:
        TrainingError: if training diverges
    """
    _ = _strategy_validator(strategy)
    if strategy not in StrategyConstants.learned:
        raise ConfigError(f"{strategy!r} is not a learned strategy")
    spec = settings.net_spec(StrategyConstants.learned[strategy])
    train_cfg = settings.train_config(seed=seed, checkpoint_path=checkpoint_path)
    factory = make_env_factory(cfg, spec.window)
    if strategy == "dqn_hybrid":
        return dqn_train(factory, train_cfg, spec)
    return a3c_train(factory, train_cfg, spec)


def baseline_policy(strategy: str) -> Policy:
    """The policy of a fixed or without-service strategy"""
    _ = _strategy_validator(strategy)
    if strategy == StrategyConstants.no_service:
        return no_service_policy()
    if strategy in StrategyConstants.fixed_levels:
        return fixed_policy(StrategyConstants.fixed_levels[strategy])
    raise ConfigError(f"{strategy!r} is a learned strategy")


def _failed_records(group: str, cfg: EpisodeConfig, strategy: str, n_reps: int, base_seed: int) -> List[RunRecord]:
    return [
        RunRecord(group=group, env=cfg.trend.env_id, stage=cfg.stage.value, strategy=strategy, rep=rep,
                  seed=base_seed + rep, total_reward=float("nan"))
        for rep in range(n_reps)
    ]


class ResultsWriter(object):
    """Creates a ResultsWriter object appending records to a results CSV

    Records whose key ``(group, env, stage, strategy, rep)`` is already in the file are skipped, so an
    interrupted grid can be resumed with the same call.

    Args:
        path (str or Path): the results file; created with its header if missing
    """

    def __init__(self, path: Union[str, Path]) -> None:
        self.path = Path(path)
        self._keys = set()
        if self.path.exists() and self.path.stat().st_size > 0:
            self._keys = {self.key(r) for r in read_results(self.path)}
        return

    @staticmethod
    def key(record: RunRecord) -> tuple:
        return (record.group, record.env, record.stage, record.strategy, int(record.rep))

    def has(self, group: str, env: str, stage: str, strategy: str, n_reps: int) -> bool:
        """True if all replications of a strategy in a cell are already written"""
        return all((group, env, stage, strategy, rep) in self._keys for rep in range(n_reps))

    def write(self, records: Iterable[RunRecord]) -> int:
        """Append new records; returns the number written"""
        fresh = [r for r in records if self.key(r) not in self._keys]
        if not fresh:
            return 0
        frame = pd.DataFrame([r.as_row() for r in fresh], columns=FileConstants.results_header)
        header = not self.path.exists() or self.path.stat().st_size == 0
        self.path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(self.path, mode="a", header=header, index=False)
        self._keys.update(self.key(r) for r in fresh)
        return len(fresh)

    def __str__(self) -> str:
        return f"ResultsWriter({self.path}, {len(self._keys)} record(s))"

    def __repr__(self) -> str:
        return self.__str__()


def read_results(path: Union[str, Path]) -> List[RunRecord]:
    """Read a results CSV; an empty total marks a failed run and reads as NaN

    Raises:
        NoDataError: if the file does not exist
        ParseError: on a wrong header or a malformed row
    """
    if not Path(path).exists():
        raise NoDataError(f"No such file: {path}")
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    if list(frame.columns) != FileConstants.results_header:
        raise ParseError(f"Expected header {','.join(FileConstants.results_header)}", str(path), 1)
    records = []
    for idx, row in frame.iterrows():
        try:
            records.append(RunRecord(group=row["group"], env=row["env"], stage=row["stage"],
                                     strategy=row["strategy"], rep=int(row["rep"]), seed=int(row["seed"]),
                                     total_reward=float(row["total_reward"] or "nan")))
        except ValueError as e:
            raise ParseError(str(e), str(path), int(idx) + 2) from e
    return records


def run_grid(settings: ExperimentSettings, groups: Sequence[str] = None, envs: Sequence[str] = None,
             stages: Sequence[str] = None, strategies: Sequence[str] = None, n_reps: int = None,
             base_seed: int = None, writer: Optional[ResultsWriter] = None,
             output_type: str = "list") -> Union[List[RunRecord], pd.DataFrame]:
    """Evaluate every strategy on every (group, env, stage) cell with paired seeds.

    Learned strategies are trained once per cell (or once per replication with
    ``[experiment] retrain_per_run``). A training failure marks that strategy's records in the
    cell with a NaN total and the grid continues.

    Args:
        settings (ExperimentSettings): the experiment settings; selections default to ``[experiment]``
        groups (sequence, optional): data groups
        envs (sequence, optional): trend environments
        stages (sequence, optional): skill stages
        strategies (sequence, optional): strategy names
        n_reps (int, optional): replications per strategy and cell
        base_seed (int, optional): seed of replication 0
        writer (ResultsWriter, optional): append records as each cell finishes, skipping finished ones
        output_type (str, optional): ``list`` or ``pandas``. Defaults to "list".

    Returns:
        list or DataFrame: records of the cells computed in this call, ordered by cell, strategy, replication
    """
    _ = _output_type_validator(output_type)
    exp = settings.experiment
    groups = list(groups if groups is not None else exp.groups)
    envs = list(envs if envs is not None else exp.envs)
    stages = [SkillStage.parse(s) for s in (stages if stages is not None else exp.stages)]
    strategies = list(strategies if strategies is not None else exp.strategies)
    n_reps = n_reps if n_reps is not None else exp.n_reps
    base_seed = base_seed if base_seed is not None else exp.seed
    for name, values in (("groups", groups), ("envs", envs), ("stages", stages), ("strategies", strategies)):
        _ = _selection_validator(name, values)
    for strategy in strategies:
        _ = _strategy_validator(strategy)

    records: List[RunRecord] = []
    for group in groups:
        profile, baseline = resolve_group(settings, group)
        for env_id in envs:
            for stage in stages:
                cfg = settings.episode_config(profile=profile, env_id=env_id, stage=stage, baseline=baseline,
                                              seed=base_seed)
                logger.info("Cell %s/%s/%s: %d strategies x %d replications", group, env_id, stage.value,
                            len(strategies), n_reps)
                cell = []
                for strategy in strategies:
                    if writer is not None and writer.has(group, env_id, stage.value, strategy, n_reps):
                        logger.info("Skipping %s in %s/%s/%s: already written", strategy, group, env_id, stage.value)
                        continue
                    cell.extend(_run_strategy(settings, group, cfg, strategy, n_reps, base_seed))
                if writer is not None:
                    writer.write(cell)
                records.extend(cell)
                logger.info("Finished cell %s/%s/%s", group, env_id, stage.value)

    if output_type == "pandas":
        return pd.DataFrame([r.as_row() for r in records], columns=FileConstants.results_header)
    return records


def _run_strategy(settings: ExperimentSettings, group: str, cfg: EpisodeConfig, strategy: str, n_reps: int,
                  base_seed: int) -> List[RunRecord]:
    workers = settings.eval_workers
    if strategy not in StrategyConstants.learned:
        return evaluate(baseline_policy(strategy), cfg, n_reps, base_seed, strategy=strategy, group=group,
                        workers=workers)

    if not settings.experiment.retrain_per_run:
        try:
            params, _ = train_strategy(strategy, settings, cfg, seed=base_seed)
        except TrainingError as e:
            logger.error("Training %s failed in %s/%s/%s: %s", strategy, group, cfg.trend.env_id, cfg.stage.value, e)
            return _failed_records(group, cfg, strategy, n_reps, base_seed)
        return evaluate(NetworkPolicy(params), cfg, n_reps, base_seed, strategy=strategy, group=group,
                        workers=workers)

    records = []
    for rep in range(n_reps):
        seed = base_seed + rep
        try:
            params, _ = train_strategy(strategy, settings, cfg, seed=seed)
            record = evaluate(NetworkPolicy(params), cfg, 1, seed, strategy=strategy, group=group)[0]
            records.append(RunRecord(record.group, record.env, record.stage, strategy, rep, seed, record.total_reward))
        except TrainingError as e:
            logger.error("Training %s failed for replication %d: %s", strategy, rep, e)
            records.extend(r for r in _failed_records(group, cfg, strategy, n_reps, base_seed) if r.rep == rep)
    return records


def write_stats(records: Sequence[RunRecord], out_dir: Union[str, Path],
                reference: str = StrategyConstants.adaptive) -> Dict[str, Path]:
    """Write the statistics files for a set of records.

    * ``stats.csv`` - pairwise comparisons against the reference, unadjusted
    * ``stats_adjusted.csv`` - the same with Bonferroni adjustment
    * ``descriptive.csv`` - per-strategy descriptive statistics
    * ``improvement.csv`` - per-cell improvement percentages
    * ``anova.csv`` - the omnibus test

    Returns:
        dict: file name to path
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {}
    groups = analysis.group_by_strategy(records)
    if reference not in groups:
        logger.warning("No %r records; comparing against %r instead", reference, next(iter(groups)))
        reference = next(iter(groups))
    anova = analysis.anova_oneway(list(groups.values()))

    paths["anova.csv"] = out_dir / "anova.csv"
    pd.DataFrame([anova._asdict()]).to_csv(paths["anova.csv"], index=False)
    for name, adjust in (("stats.csv", "none"), ("stats_adjusted.csv", "bonferroni")):
        paths[name] = out_dir / name
        analysis.pairwise_comparisons(groups, reference, adjust=adjust, output_type="pandas").to_csv(paths[name], index=False)
    paths["descriptive.csv"] = out_dir / "descriptive.csv"
    analysis.descriptive_statistics(records, output_type="pandas").to_csv(paths["descriptive.csv"], index=False)
    paths["improvement.csv"] = out_dir / "improvement.csv"
    analysis.improvement_table(records, reference, output_type="pandas").to_csv(paths["improvement.csv"], index=False)
    logger.info("Wrote statistics for %d strategies to %s (F=%.4g, p=%.4g)", len(groups), out_dir, anova.F, anova.p)
    return paths


@dataclass(frozen=True)
class SweepPoint:
    """Mean total reward of the adaptive strategy at one (m, l) point, with the without-service mean."""
    m: float
    l: float
    mean_reward: float
    count: int
    baseline_mean: float
    failed: bool = False


def sensitivity_sweep(settings: ExperimentSettings, m_values: Sequence[float] = None, l_values: Sequence[float] = None,
                      n_reps: int = None, retrain: bool = None,
                      output_type: str = "list") -> Union[List[SweepPoint], pd.DataFrame]:
    """Mean adaptive reward over the grid of goal-achievement bonus ``m`` and failure disutility ``l``.

    With ``retrain`` the adaptive agent is trained anew at every point; otherwise the agent trained
    at the configured profile is reused. A failed point is flagged and the sweep continues.

    Returns:
        list or DataFrame: one SweepPoint per (m, l) pair, ``m`` varying slowest
    """
    _ = _output_type_validator(output_type)
    exp = settings.experiment
    m_values = list(m_values if m_values is not None else exp.m_values)
    l_values = list(l_values if l_values is not None else exp.l_values)
    n_reps = n_reps if n_reps is not None else exp.n_reps
    retrain = retrain if retrain is not None else exp.sweep_retrain
    _ = _selection_validator("m_values", m_values)
    _ = _selection_validator("l_values", l_values)

    base_cfg = settings.episode_config()
    shared = None
    if not retrain:
        shared, _ = train_strategy(StrategyConstants.adaptive, settings, base_cfg, seed=exp.seed)

    points = []
    for m in m_values:
        for l in l_values:
            profile = UserProfile(**{**asdict(base_cfg.profile), "m": float(m), "l": float(l)})
            cfg = settings.episode_config(profile=profile)
            baseline_records = evaluate(no_service_policy(), cfg, n_reps, exp.seed, workers=settings.eval_workers)
            baseline_mean = float(np.mean([r.total_reward for r in baseline_records]))
            try:
                params = shared if shared is not None else train_strategy(
                    StrategyConstants.adaptive, settings, cfg, seed=exp.seed)[0]
            except TrainingError as e:
                logger.error("Sweep point m=%g, l=%g failed: %s", m, l, e)
                points.append(SweepPoint(float(m), float(l), float("nan"), n_reps, baseline_mean, failed=True))
                continue
            records = evaluate(NetworkPolicy(params), cfg, n_reps, exp.seed, workers=settings.eval_workers)
            mean = float(np.mean([r.total_reward for r in records]))
            logger.info("Sweep m=%g, l=%g: adaptive %.4f, without service %.4f", m, l, mean, baseline_mean)
            points.append(SweepPoint(float(m), float(l), mean, n_reps, baseline_mean))

    if output_type == "pandas":
        return pd.DataFrame([asdict(p) for p in points])
    return points


def complexity_estimate(T_max: int, workers: int, t_actor: float, t_critic: float) -> float:
    """Training cost ``T_max (T_a + T_c + 2) / N_l`` in the time unit of the forward costs"""
    if workers < 1:
        raise ConfigError("workers must be at least 1")
    return T_max * (t_actor + t_critic + 2) / workers


def inference_latency(params: HybridNetParams, n_passes: int = 10_000, seed: int = 0) -> float:
    """Mean seconds per single-window forward pass over ``n_passes`` random windows"""
    rng = np.random.default_rng(seed)
    windows = rng.uniform(0.0, 1.0, size=(min(n_passes, 256), params.spec.window, params.spec.n_features))
    start = time.perf_counter()
    for k in range(n_passes):
        forward(params, windows[k % len(windows)])
    return (time.perf_counter() - start) / n_passes


@dataclass(frozen=True)
class TimingRow:
    algorithm: str
    train_seconds: float
    converging_step: Optional[int]
    converging_episodes: Optional[int]
    inference_ms: float
    complexity: float
    final_eval_mean: float


def timing_report(settings: ExperimentSettings, algorithms: Sequence[str] = ("adaptive", "dqn_hybrid"),
                  cfg: Optional[EpisodeConfig] = None, n_passes: int = None,
                  output_type: str = "list") -> Union[List[TimingRow], pd.DataFrame]:
    """Train each algorithm under the same budget and report wall time, converging steps and inference latency.

    The complexity column is `complexity_estimate` with both forward costs set to the measured
    inference latency in milliseconds.
    """
    _ = _output_type_validator(output_type)
    cfg = cfg if cfg is not None else settings.episode_config()
    n_passes = n_passes if n_passes is not None else settings.experiment.timing_passes
    train_cfg = settings.train_config()

    rows = []
    for algorithm in algorithms:
        start = time.perf_counter()
        params, curve = train_strategy(algorithm, settings, cfg, seed=settings.experiment.seed)
        elapsed = time.perf_counter() - start
        latency_ms = 1000.0 * inference_latency(params, n_passes, seed=settings.experiment.seed)
        rows.append(TimingRow(
            algorithm=algorithm,
            train_seconds=elapsed,
            converging_step=converging_step(curve),
            converging_episodes=converging_step(curve, counter="episodes"),
            inference_ms=latency_ms,
            complexity=complexity_estimate(train_cfg.T_max, train_cfg.workers, latency_ms, latency_ms),
            final_eval_mean=curve.points[-1].eval_mean,
        ))
        logger.info("%s: %.1f s, converged at step %s, %.4f ms per decision", algorithm, elapsed,
                    rows[-1].converging_step, latency_ms)

    if output_type == "pandas":
        return pd.DataFrame([asdict(r) for r in rows])
    return rows


def _cell_means(records: Sequence[RunRecord]) -> "OrderedDict[tuple, Dict[str, float]]":
    cells: "OrderedDict[tuple, Dict[str, list]]" = OrderedDict()
    for record in records:
        if math.isfinite(record.total_reward):
            cells.setdefault((record.group, record.env, record.stage), OrderedDict()).setdefault(
                record.strategy, []).append(record.total_reward)
    return OrderedDict((cell, {s: float(np.mean(v)) for s, v in strategies.items()}) for cell, strategies in cells.items())


def stage_comparison(records: Sequence[RunRecord], strategy: str = StrategyConstants.adaptive,
                     output_type: str = "list") -> Union[List[dict], pd.DataFrame]:
    """Mean total reward of one strategy per (group, env) in the acquisition and retention stages"""
    _ = _output_type_validator(output_type)
    by_cell: "OrderedDict[tuple, dict]" = OrderedDict()
    for (group, env, stage), means in _cell_means(records).items():
        if strategy in means:
            row = by_cell.setdefault((group, env), {"group": group, "env": env, "acquisition": None, "retention": None})
            row[stage] = means[strategy]
    rows = list(by_cell.values())
    if not rows:
        raise NoDataError(f"No records of strategy {strategy!r}")
    if output_type == "pandas":
        return pd.DataFrame(rows, columns=["group", "env", "acquisition", "retention"])
    return rows


def strategy_shares(records: Sequence[RunRecord], output_type: str = "list") -> Union[List[dict], pd.DataFrame]:
    """Mean total reward of every strategy per cell, one row per cell"""
    _ = _output_type_validator(output_type)
    rows = [{"group": g, "env": e, "stage": s, **means} for (g, e, s), means in _cell_means(records).items()]
    if output_type == "pandas":
        return pd.DataFrame(rows)
    return rows


def goal_distribution(record: RunRecord) -> Dict[IntensityGroup, int]:
    """Number of epochs whose goal falls in each intensity group

    Raises:
        NoDataError: if the record carries no trajectory
    """
    if record.trajectory is None:
        raise NoDataError("The record has no trajectory; evaluate with keep_trajectory=True")
    counts = Counter(goal_group(epoch.action) for epoch in record.trajectory)
    return {group: counts.get(group, 0) for group in IntensityGroup}


PLOT_SCRIPT = '''"""Plot the CSV files written by exercise-goal-setting. Requires matplotlib."""
import sys
from pathlib import Path

import matplotlib.pyplot as plt
import pandas as pd

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parent

results = out / "results.csv"
if results.exists():
    frame = pd.read_csv(results)
    means = frame.groupby(["group", "env", "stage", "strategy"])["total_reward"].mean().unstack("strategy")
    means.plot(kind="bar", figsize=(12, 5), ylabel="mean total reward")
    plt.tight_layout()
    plt.savefig(out / "strategies.png")

sweep = out / "sweep.csv"
if sweep.exists():
    frame = pd.read_csv(sweep)
    fig, ax = plt.subplots()
    for m, part in frame.groupby("m"):
        ax.plot(part["l"], part["mean_reward"], marker="o", label=f"m={m:g}")
    ax.set_xlabel("l")
    ax.set_ylabel("mean total reward")
    ax.legend()
    fig.savefig(out / "sweep.png")

for curve in sorted(out.glob("curve_*.csv")):
    frame = pd.read_csv(curve)
    fig, ax = plt.subplots()
    ax.plot(frame["step"], frame["eval_mean"])
    ax.fill_between(frame["step"], frame["eval_mean"] - frame["eval_std"], frame["eval_mean"] + frame["eval_std"], alpha=0.3)
    ax.set_xlabel("global step")
    ax.set_ylabel("evaluation mean")
    fig.savefig(curve.with_suffix(".png"))
'''


def write_plot_script(out_dir: Union[str, Path]) -> Path:
    """Write ``plot_results.py``, a matplotlib script plotting the CSV files in ``out_dir``"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "plot_results.py"
    path.write_text(PLOT_SCRIPT, encoding="utf-8")
    return path

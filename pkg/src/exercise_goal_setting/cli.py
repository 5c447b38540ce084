"""Command-line interface: ``exercise-goal-setting <command> [options]``
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import pandas as pd

from exercise_goal_setting import methods
from exercise_goal_setting.agents import NetworkPolicy, evaluate
from exercise_goal_setting.analysis import descriptive_statistics
from exercise_goal_setting.constants import StrategyConstants
from exercise_goal_setting.datahelpers import normalize, write_profiles
from exercise_goal_setting.environment import rollout
from exercise_goal_setting.estimation import EstimationOptions, estimate_profile
from exercise_goal_setting.exceptions import ConfigError, GoalSettingError
from exercise_goal_setting.log_processor import load_sessions, load_srpe, load_vo2max
from exercise_goal_setting.network import load_checkpoint
from exercise_goal_setting.settings import ExperimentSettings, load_settings

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML settings file (default: $GOAL_SETTING_CONFIG, else built-in defaults)")
    common.add_argument("--seed", type=int, help="Master seed; replication i uses seed + i")
    common.add_argument("--reps", type=int, help="Evaluation replications per strategy and cell")
    common.add_argument("--out", help="Output directory")
    common.add_argument("--workers", type=int, help="Training and evaluation workers")
    common.add_argument("--deterministic", action="store_true", help="Force one worker and fixed seeds")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="Log at DEBUG level")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="Log warnings and errors only")

    ap = argparse.ArgumentParser(prog="exercise-goal-setting",
                                 description="Adaptive exercise goal setting: simulation, training and experiments.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="Run one episode and print its trajectory")
    p.add_argument("--strategy", default=StrategyConstants.no_service, help="Fixed or without-service strategy")
    p.add_argument("--checkpoint", help="Act with a trained network instead of --strategy")

    p = sub.add_parser("train", parents=[common], help="Train one learned strategy on the configured cell")
    p.add_argument("--strategy", default=StrategyConstants.adaptive, choices=tuple(StrategyConstants.learned))

    p = sub.add_parser("evaluate", parents=[common], help="Evaluate a checkpoint or a baseline strategy")
    p.add_argument("--strategy", default=StrategyConstants.no_service)
    p.add_argument("--checkpoint", help="Evaluate a trained network")

    sub.add_parser("grid", parents=[common], help="Run the experiment grid and write results and statistics")

    p = sub.add_parser("stats", parents=[common], help="Statistics of an existing results file")
    p.add_argument("--results", help="Results CSV (default: OUT/results.csv)")
    p.add_argument("--reference", default=StrategyConstants.adaptive)

    p = sub.add_parser("sweep", parents=[common], help="Sensitivity sweep over m and l")
    p.add_argument("--reuse-agent", action="store_true", help="Train once at the configured profile (default: [experiment] sweep_retrain)")

    p = sub.add_parser("estimate", parents=[common], help="Fit a user profile to VO2Max observations")
    p.add_argument("--srpe", help="Perceived-exertion diary CSV")
    p.add_argument("--sessions", help="Heart-rate session CSV")
    p.add_argument("--vo2max", required=True, help="VO2Max CSV")
    p.add_argument("--user-id", default="user")

    p = sub.add_parser("timing", parents=[common], help="Training time, converging steps and inference latency")
    p.add_argument("--algorithms", nargs="+", default=["adaptive", "dqn_hybrid"],
                   choices=tuple(StrategyConstants.learned))
    return ap


def _configure_logging(args: argparse.Namespace) -> None:
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def _settings(args: argparse.Namespace) -> ExperimentSettings:
    settings = load_settings(args.config)
    return settings.with_overrides(seed=args.seed, reps=args.reps, workers=args.workers, out=args.out,
                                   deterministic=args.deterministic)


def _out_dir(settings: ExperimentSettings) -> Path:
    out = Path(settings.experiment.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _policy(args: argparse.Namespace):
    if args.checkpoint:
        params, _ = load_checkpoint(args.checkpoint)
        return NetworkPolicy(params), Path(args.checkpoint).stem
    return methods.baseline_policy(args.strategy), args.strategy


def cmd_simulate(args, settings: ExperimentSettings) -> int:
    policy, name = _policy(args)
    record = rollout(policy, settings.episode_config())
    frame = pd.DataFrame([
        {"day": e.day, "goal": e.action, "e": e.e, "b": e.state.b, "f": e.state.f, "g": e.state.g, "reward": e.reward}
        for e in record.trajectory
    ])
    print(frame.to_string(index=False))
    print(f"\n{name}: total reward {record.total_reward:.6f}")
    return 0


def cmd_train(args, settings: ExperimentSettings) -> int:
    out = _out_dir(settings)
    cfg = settings.episode_config()
    checkpoint = out / f"{args.strategy}.npz"
    _, curve = methods.train_strategy(args.strategy, settings, cfg, checkpoint_path=str(checkpoint))
    curve.write_csv(out / f"curve_{args.strategy}.csv")
    print(f"checkpoint: {checkpoint}")
    print(f"final evaluation mean: {curve.points[-1].eval_mean:.6f}")
    return 0


def cmd_evaluate(args, settings: ExperimentSettings) -> int:
    policy, name = _policy(args)
    exp = settings.experiment
    records = evaluate(policy, settings.episode_config(), exp.n_reps, exp.seed, strategy=name,
                       group="custom", workers=settings.eval_workers)
    print(descriptive_statistics(records, output_type="pandas").to_string(index=False))
    return 0


def cmd_grid(args, settings: ExperimentSettings) -> int:
    out = _out_dir(settings)
    writer = methods.ResultsWriter(out / "results.csv")
    methods.run_grid(settings, writer=writer)
    records = methods.read_results(writer.path)
    methods.write_stats(records, out)
    methods.write_plot_script(out)
    print(f"results: {writer.path}")
    return 0


def cmd_stats(args, settings: ExperimentSettings) -> int:
    out = _out_dir(settings)
    results = Path(args.results) if args.results else out / "results.csv"
    paths = methods.write_stats(methods.read_results(results), out, reference=args.reference)
    print(pd.read_csv(paths["anova.csv"]).to_string(index=False))
    print()
    print(pd.read_csv(paths["stats.csv"]).to_string(index=False))
    return 0


def cmd_sweep(args, settings: ExperimentSettings) -> int:
    out = _out_dir(settings)
    frame = methods.sensitivity_sweep(settings, retrain=False if args.reuse_agent else None,
                                      output_type="pandas")
    frame.to_csv(out / "sweep.csv", index=False)
    methods.write_plot_script(out)
    print(frame.to_string(index=False))
    return 0


def cmd_estimate(args, settings: ExperimentSettings) -> int:
    if bool(args.srpe) == bool(args.sessions):
        raise ConfigError("Give exactly one of --srpe and --sessions")
    intensity = load_srpe(args.srpe, args.user_id) if args.srpe else load_sessions(args.sessions, args.user_id)
    perf = load_vo2max(args.vo2max, args.user_id)
    result = estimate_profile(normalize(intensity), perf, settings.stage, EstimationOptions(seed=settings.experiment.seed))
    profile = result.to_profile(m=settings.profile.m, l=settings.profile.l)
    path = write_profiles([(args.user_id, profile, "fitted")], _out_dir(settings) / "profiles.csv")
    print(pd.DataFrame([{**result.as_dict(), "rss": result.rss, "converged": result.converged}]).to_string(index=False))
    print(f"profiles: {path}")
    return 0


def cmd_timing(args, settings: ExperimentSettings) -> int:
    out = _out_dir(settings)
    frame = methods.timing_report(settings, args.algorithms, output_type="pandas")
    frame.to_csv(out / "timing.csv", index=False)
    print(frame.to_string(index=False))
    return 0


HANDLERS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "grid": cmd_grid,
    "stats": cmd_stats,
    "sweep": cmd_sweep,
    "estimate": cmd_estimate,
    "timing": cmd_timing,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args)
    try:
        settings = _settings(args)
        logger.debug("%s", settings)
        return HANDLERS[args.command](args, settings)
    except GoalSettingError as e:
        logger.error("%s", e)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Statistics over replication records

One-way ANOVA, pairwise comparisons against a reference strategy (pooled-variance t with and
without Bonferroni adjustment), descriptive tables and improvement percentages. Every function
works either on `RunRecord` lists or, where noted, on published summary statistics.

"""

import logging
import math
from collections import OrderedDict
from dataclasses import asdict, dataclass
from typing import Dict, List, Mapping, NamedTuple, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy import stats
from scipy.special import betainc

from exercise_goal_setting.constants import FileConstants
from exercise_goal_setting.environment import RunRecord
from exercise_goal_setting.exceptions import DomainError, NoDataError

logger = logging.getLogger(__name__)

ADJUSTMENTS = ("none", "bonferroni")


def _output_type_validator(output_type: str) -> bool:
    """Internal function to validate the output_type

    Args:
        output_type (str): the output_type to validate

    Returns:
        bool: True if valid
    """
    if output_type not in ["list", "pandas"]:
        raise DomainError("Invalid output_type. Must be 'list' or 'pandas'")
    return True


def _adjustment_validator(adjust: str) -> bool:
    if adjust not in ADJUSTMENTS:
        raise DomainError(f"Invalid adjustment {adjust!r}. Must be one of {ADJUSTMENTS}")
    return True


def _valid_records(records: Sequence[RunRecord]) -> List[RunRecord]:
    valid = [r for r in records if math.isfinite(r.total_reward)]
    if len(valid) < len(records):
        logger.info("Ignoring %d record(s) of failed runs", len(records) - len(valid))
    if not valid:
        raise NoDataError("No valid records")
    return valid


def group_by_strategy(records: Sequence[RunRecord]) -> "OrderedDict[str, np.ndarray]":
    """Total rewards per strategy, in order of first appearance"""
    groups: "OrderedDict[str, list]" = OrderedDict()
    for record in _valid_records(records):
        groups.setdefault(record.strategy, []).append(record.total_reward)
    return OrderedDict((name, np.asarray(values, dtype=float)) for name, values in groups.items())


class AnovaResult(NamedTuple):
    F: float
    df_between: int
    df_within: int
    p: float
    ms_within: float


def f_sf(F: float, df_between: float, df_within: float) -> float:
    """Upper tail of the F distribution via the regularized incomplete beta function"""
    if math.isinf(F):
        return 0.0
    x = df_within / (df_within + df_between * F)
    return float(betainc(df_within / 2.0, df_between / 2.0, x))


def _anova(means: np.ndarray, ss_within: float, ns: np.ndarray) -> AnovaResult:
    k = len(means)
    total = float(ns.sum())
    grand = float(np.sum(ns * means) / total)
    ss_between = float(np.sum(ns * (means - grand) ** 2))
    df_between = k - 1
    df_within = int(total - k)
    ms_between = ss_between / df_between
    ms_within = ss_within / df_within

    if ms_within == 0:
        if ss_between == 0:
            raise DomainError("All observations are identical; the F statistic is undefined")
        return AnovaResult(math.inf, df_between, df_within, 0.0, 0.0)
    F = ms_between / ms_within
    return AnovaResult(F, df_between, df_within, f_sf(F, df_between, df_within), ms_within)


def _check_groups(ns: Sequence[float]) -> None:
    if len(ns) < 2:
        raise DomainError(f"ANOVA needs at least 2 groups, got {len(ns)}")
    if any(n < 2 for n in ns):
        raise DomainError("Every ANOVA group needs at least 2 samples")


def anova_oneway(groups: Sequence[Sequence[float]]) -> AnovaResult:
    """One-way analysis of variance.

    Args:
        groups (sequence): at least two samples of at least two values each

    Returns:
        AnovaResult: ``(F, df_between, df_within, p, ms_within)``

    Raises:
        DomainError: on too few groups or samples, or when every observation is identical
    """
    arrays = [np.asarray(g, dtype=float) for g in groups]
    _check_groups([len(a) for a in arrays])
    means = np.array([a.mean() for a in arrays])
    ss_within = float(sum(np.sum((a - a.mean()) ** 2) for a in arrays))
    return _anova(means, ss_within, np.array([len(a) for a in arrays], dtype=float))


def anova_from_summary(means: Sequence[float], sds: Sequence[float], ns: Sequence[int]) -> AnovaResult:
    """One-way ANOVA from per-group means, sample standard deviations and sizes"""
    means, sds, ns = (np.asarray(x, dtype=float) for x in (means, sds, ns))
    if not len(means) == len(sds) == len(ns):
        raise DomainError("means, sds and ns must have the same length")
    _check_groups(ns)
    return _anova(means, float(np.sum((ns - 1) * sds ** 2)), ns)


@dataclass(frozen=True)
class ComparisonRow:
    """Mean difference of strategy I minus strategy J with its pooled standard error, p-value and 95% CI."""
    strategy_i: str
    strategy_j: str
    mean_diff: float
    se: float
    p: float
    ci_lo: float
    ci_hi: float
    adjustment: str = "none"

    @property
    def comparison(self) -> str:
        return f"{self.strategy_i} - {self.strategy_j}"

    def as_row(self) -> dict:
        return {
            "comparison": self.comparison,
            "mean_diff": self.mean_diff,
            "se": self.se,
            "p": self.p,
            "ci_lo": self.ci_lo,
            "ci_hi": self.ci_hi,
        }


def _pairwise(names: Sequence[str], means: np.ndarray, ns: np.ndarray, anova: AnovaResult, reference: str,
              adjust: str) -> List[ComparisonRow]:
    if reference not in names:
        raise DomainError(f"Reference strategy {reference!r} not among {list(names)}")
    k = len(names)
    n_comparisons = k * (k - 1) // 2 if adjust == "bonferroni" else 1
    df = anova.df_within
    t_crit = float(stats.t.ppf(1.0 - 0.05 / (2.0 * n_comparisons), df))

    i = list(names).index(reference)
    rows = []
    for j, name in enumerate(names):
        if j == i:
            continue
        diff = float(means[i] - means[j])
        se = math.sqrt(anova.ms_within * (1.0 / ns[i] + 1.0 / ns[j]))
        if se == 0:
            p = 1.0 if diff == 0 else 0.0
        else:
            p = float(2.0 * stats.t.sf(abs(diff) / se, df))
        p = min(1.0, p * n_comparisons)
        rows.append(ComparisonRow(reference, name, diff, se, p, diff - t_crit * se, diff + t_crit * se, adjust))
    return rows


def _rows_output(rows: List[ComparisonRow], output_type: str) -> Union[List[ComparisonRow], pd.DataFrame]:
    if output_type == "pandas":
        return pd.DataFrame([r.as_row() for r in rows], columns=FileConstants.stats_header)
    return rows


def pairwise_comparisons(records: Union[Sequence[RunRecord], Mapping[str, Sequence[float]]], reference: str,
                         adjust: str = "none", output_type: str = "list") -> Union[List[ComparisonRow], pd.DataFrame]:
    """Compare the reference strategy with every other strategy.

    ``SE = sqrt(MSW (1/n_I + 1/n_J))`` with ``MSW`` from the omnibus ANOVA; two-sided p and the 95%
    interval use the t distribution with the ANOVA's within-groups degrees of freedom. With
    ``adjust="bonferroni"`` both are corrected for all ``k(k-1)/2`` pairwise comparisons.

    Args:
        records (sequence or mapping): RunRecords, or samples keyed by strategy name
        reference (str): strategy I of every row
        adjust (str, optional): ``none`` or ``bonferroni``. Defaults to "none".
        output_type (str, optional): ``list`` or ``pandas``. Defaults to "list".

    Returns:
        list or DataFrame: one row per comparator, in strategy order
    """
    _ = _output_type_validator(output_type)
    _ = _adjustment_validator(adjust)
    groups = records if isinstance(records, Mapping) else group_by_strategy(records)
    names = list(groups)
    arrays = [np.asarray(groups[n], dtype=float) for n in names]
    anova = anova_oneway(arrays)
    means = np.array([a.mean() for a in arrays])
    ns = np.array([len(a) for a in arrays], dtype=float)
    return _rows_output(_pairwise(names, means, ns, anova, reference, adjust), output_type)


def pairwise_from_summary(names: Sequence[str], means: Sequence[float], sds: Sequence[float], ns: Sequence[int],
                          reference: str, adjust: str = "none",
                          output_type: str = "list") -> Union[List[ComparisonRow], pd.DataFrame]:
    """`pairwise_comparisons` from published per-group summary statistics"""
    _ = _output_type_validator(output_type)
    _ = _adjustment_validator(adjust)
    if len(names) != len(means):
        raise DomainError("names and means must have the same length")
    anova = anova_from_summary(means, sds, ns)
    rows = _pairwise(list(names), np.asarray(means, dtype=float), np.asarray(ns, dtype=float), anova, reference, adjust)
    return _rows_output(rows, output_type)


@dataclass(frozen=True)
class DescriptiveRow:
    strategy: str
    n: int
    mean: float
    sd: float
    se: float
    ci_lo: float
    ci_hi: float
    minimum: float
    maximum: float


def _describe(name: str, values: np.ndarray) -> DescriptiveRow:
    n = len(values)
    mean = float(values.mean())
    sd = float(values.std(ddof=1)) if n > 1 else float("nan")
    se = sd / math.sqrt(n) if n > 1 else float("nan")
    half = float(stats.t.ppf(0.975, n - 1)) * se if n > 1 else float("nan")
    return DescriptiveRow(name, n, mean, sd, se, mean - half, mean + half, float(values.min()), float(values.max()))


def descriptive_statistics(records: Sequence[RunRecord], output_type: str = "list") -> Union[List[DescriptiveRow], pd.DataFrame]:
    """Per-strategy N, mean, SD, SE, 95% CI of the mean, minimum and maximum, followed by a Total row"""
    _ = _output_type_validator(output_type)
    groups = group_by_strategy(records)
    rows = [_describe(name, values) for name, values in groups.items()]
    rows.append(_describe("Total", np.concatenate(list(groups.values()))))
    if output_type == "pandas":
        return pd.DataFrame([asdict(r) for r in rows])
    return rows


@dataclass(frozen=True)
class ImprovementRow:
    """Improvement of the reference strategy over one comparator in one grid cell.

    ``improvement_pct`` is None when the comparator mean is not positive; ``flagged`` is then True
    and only ``abs_diff`` is meaningful.
    """
    group: str
    env: str
    stage: str
    comparator: str
    reference_mean: float
    comparator_mean: float
    improvement_pct: Optional[float]
    abs_diff: float
    flagged: bool


def improvement(reference_mean: float, comparator_mean: float) -> Optional[float]:
    """``100 (mean_ref - mean_cmp) / mean_cmp``; None when the comparator mean is not positive"""
    if comparator_mean <= 0:
        return None
    return 100.0 * (reference_mean - comparator_mean) / comparator_mean


def improvement_table(records: Sequence[RunRecord], reference: str = "adaptive",
                      output_type: str = "list") -> Union[List[ImprovementRow], pd.DataFrame]:
    """Percentage improvement of the reference strategy over every comparator, per (group, env, stage) cell.

    Raises:
        NoDataError: if a cell has no reference records or no comparator
    """
    _ = _output_type_validator(output_type)
    cells: Dict[tuple, Dict[str, list]] = OrderedDict()
    for record in _valid_records(records):
        cell = cells.setdefault((record.group, record.env, record.stage), OrderedDict())
        cell.setdefault(record.strategy, []).append(record.total_reward)

    rows = []
    for (group, env, stage), strategies in cells.items():
        if reference not in strategies:
            raise NoDataError(f"No {reference!r} records in cell {group}/{env}/{stage}")
        comparators = [name for name in strategies if name != reference]
        if not comparators:
            raise NoDataError(f"No comparator in cell {group}/{env}/{stage}")
        ref_mean = float(np.mean(strategies[reference]))
        for name in comparators:
            cmp_mean = float(np.mean(strategies[name]))
            pct = improvement(ref_mean, cmp_mean)
            if pct is None:
                logger.warning("Comparator %s has mean %.4g <= 0 in cell %s/%s/%s; reporting the absolute difference",
                               name, cmp_mean, group, env, stage)
            rows.append(ImprovementRow(group, env, stage, name, ref_mean, cmp_mean, pct, ref_mean - cmp_mean, pct is None))

    if output_type == "pandas":
        return pd.DataFrame([asdict(r) for r in rows])
    return rows


def paired_test(records: Sequence[RunRecord], strategy: str, comparator: str) -> float:
    """One-sided paired t-test p-value that ``strategy`` beats ``comparator`` on shared seeds"""
    by_seed: Dict[str, Dict[tuple, float]] = {strategy: {}, comparator: {}}
    for record in _valid_records(records):
        if record.strategy in by_seed:
            by_seed[record.strategy][(record.group, record.env, record.stage, record.seed)] = record.total_reward
    keys = sorted(set(by_seed[strategy]) & set(by_seed[comparator]))
    if len(keys) < 2:
        raise NoDataError(f"Need at least 2 paired seeds for {strategy} vs {comparator}, got {len(keys)}")
    a = np.array([by_seed[strategy][k] for k in keys])
    b = np.array([by_seed[comparator][k] for k in keys])
    if np.all(a - b == (a - b)[0]):
        return 0.0 if (a - b)[0] > 0 else 1.0
    return float(stats.ttest_rel(a, b, alternative="greater").pvalue)


def spearman_trend(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman rank correlation of a swept parameter against mean rewards"""
    if len(x) != len(y) or len(x) < 2:
        raise DomainError("Need two equally long sequences of at least 2 values")
    rho, _ = stats.spearmanr(x, y)
    return float(rho) if np.isfinite(rho) else 0.0

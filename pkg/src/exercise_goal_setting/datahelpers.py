"""Intensity and performance series, synthetic users, training impulses and normalization
"""

import logging
import math
from dataclasses import dataclass, replace
from datetime import date, timedelta
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from exercise_goal_setting.constants import DataConstants, EpisodeDefaults, FileConstants
from exercise_goal_setting.exceptions import DataError, DomainError, NoDataError, ParseError
from exercise_goal_setting.health import UserProfile

logger = logging.getLogger(__name__)

UNITS = ("steps", "sRPE", "TRIMP")


def _check_dates(dates: Sequence[date]) -> None:
    for earlier, later in zip(dates, dates[1:]):
        if later <= earlier:
            raise DomainError(f"Dates must be strictly increasing ({later.isoformat()} after {earlier.isoformat()})")


@dataclass(frozen=True)
class IntensitySeries:
    """Daily exercise intensity of one user.

    Args:
        user_id (str): user identifier
        unit (str): steps, sRPE or TRIMP
        samples (tuple): ``(date, value)`` pairs, dates strictly increasing, values nonnegative
        normalized (tuple, optional): values mapped onto [0, 1], aligned with ``samples``
        range_min (float, optional): raw value mapped to 0, kept for denormalization
        range_max (float, optional): raw value mapped to 1
        dropped (int, optional): rows dropped while parsing. Defaults to 0.
    """
    user_id: str
    unit: str
    samples: Tuple[Tuple[date, float], ...]
    normalized: Optional[Tuple[float, ...]] = None
    range_min: Optional[float] = None
    range_max: Optional[float] = None
    dropped: int = 0

    def __post_init__(self):
        if self.unit not in UNITS:
            raise DomainError(f"Invalid unit {self.unit!r}. Must be one of {UNITS}")
        samples = tuple((d, float(v)) for d, v in self.samples)
        _check_dates([d for d, _ in samples])
        if any(not math.isfinite(v) or v < 0 for _, v in samples):
            raise DomainError("Intensity values must be finite and nonnegative")
        object.__setattr__(self, "samples", samples)
        if self.normalized is not None:
            normalized = tuple(float(v) for v in self.normalized)
            if len(normalized) != len(samples):
                raise DomainError("normalized must have one value per sample")
            if any(not 0.0 <= v <= 1.0 for v in normalized):
                raise DomainError("Normalized values must lie in [0, 1]")
            object.__setattr__(self, "normalized", normalized)

    @property
    def dates(self) -> List[date]:
        return [d for d, _ in self.samples]

    @property
    def values(self) -> np.ndarray:
        return np.array([v for _, v in self.samples])

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class PerformanceSeries:
    """Observed VO2Max (ml/kg/min) of one user; dates strictly increasing, values positive."""
    user_id: str
    samples: Tuple[Tuple[date, float], ...]

    def __post_init__(self):
        samples = tuple((d, float(v)) for d, v in self.samples)
        _check_dates([d for d, _ in samples])
        if any(not math.isfinite(v) or v <= 0 for _, v in samples):
            raise DomainError("VO2Max values must be finite and positive")
        object.__setattr__(self, "samples", samples)

    @property
    def dates(self) -> List[date]:
        return [d for d, _ in self.samples]

    @property
    def values(self) -> np.ndarray:
        return np.array([v for _, v in self.samples])

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class SyntheticUser:
    series: IntensitySeries
    profile: UserProfile


def random_profile(rng: np.random.Generator) -> UserProfile:
    """Draw a profile uniformly within the synthetic sampling box"""
    box = DataConstants.profile_box
    return UserProfile(**{name: float(rng.uniform(low, high)) for name, (low, high) in box.items()})


def synth_g1(n_users: int = DataConstants.g1_users, seed: int = 0, days: int = EpisodeDefaults.horizon,
             start: date = date(2020, 1, 1)) -> List[SyntheticUser]:
    """Generate walking-step users with random profiles.

    Daily steps are Normal(6274, 2106^2) clipped at 0. The corpus is a pure function of ``seed``.

    Args:
        n_users (int, optional): number of users. Defaults to 50.
        seed (int, optional): random seed. Defaults to 0.
        days (int, optional): days per user. Defaults to 84.
        start (date, optional): first day

    Returns:
        list: SyntheticUser objects with ``steps`` series
    """
    if n_users < 1:
        raise DomainError(f"n_users must be at least 1, got {n_users}")
    if days < 1:
        raise DomainError(f"days must be at least 1, got {days}")
    rng = np.random.default_rng(seed)
    calendar = [start + timedelta(days=k) for k in range(days)]
    users = []
    for u in range(n_users):
        steps = np.maximum(0.0, rng.normal(DataConstants.g1_steps_mean, DataConstants.g1_steps_sd, size=days))
        series = IntensitySeries(user_id=f"g1-{u:03d}", unit="steps", samples=tuple(zip(calendar, steps)))
        users.append(SyntheticUser(series=series, profile=random_profile(rng)))
    return users


def trimp(duration_min: float, avg_hr: float, rest_hr: float, max_hr: float, sex: str) -> float:
    """Banister training impulse of one session.

    ``duration * dHR * 0.64 * exp(k * dHR)`` with ``dHR = (avg - rest) / (max - rest)``,
    ``k = 1.92`` for men and ``1.67`` for women.

    Raises:
        DomainError: unless ``rest_hr < avg_hr <= max_hr`` and ``duration_min > 0``
    """
    for name, value in (("duration_min", duration_min), ("avg_hr", avg_hr), ("rest_hr", rest_hr), ("max_hr", max_hr)):
        if not math.isfinite(value):
            raise DomainError(f"{name} must be finite, got {value!r}")
    if duration_min <= 0:
        raise DomainError(f"duration_min must be positive, got {duration_min}")
    if not rest_hr < avg_hr <= max_hr:
        raise DomainError(f"Heart rates must satisfy rest < avg <= max, got rest={rest_hr}, avg={avg_hr}, max={max_hr}")

    sex_key = str(sex).strip().lower()
    if sex_key in ("m", "male"):
        k = DataConstants.trimp_k_male
    elif sex_key in ("f", "female"):
        k = DataConstants.trimp_k_female
    else:
        raise DomainError(f"sex must be male or female, got {sex!r}")

    reserve = (avg_hr - rest_hr) / (max_hr - rest_hr)
    return duration_min * reserve * DataConstants.trimp_weight * math.exp(k * reserve)


def normalize(series: IntensitySeries) -> IntensitySeries:
    """Map values affinely onto [0, 1] using the series' own minimum and maximum.

    Raises:
        DataError: if the series has fewer than two distinct values
    """
    values = series.values
    if len(values) == 0 or np.ptp(values) == 0:
        raise DataError(f"Cannot normalize series {series.user_id!r}: fewer than two distinct values")
    low, high = float(values.min()), float(values.max())
    normalized = np.clip((values - low) / (high - low), 0.0, 1.0)
    return replace(series, normalized=tuple(normalized), range_min=low, range_max=high)


def denormalize(series: IntensitySeries, values: Optional[Sequence[float]] = None) -> np.ndarray:
    """Map normalized values (default: the series' own) back onto the raw scale"""
    if series.range_min is None or series.range_max is None:
        raise DataError(f"Series {series.user_id!r} carries no normalization range")
    x = np.asarray(series.normalized if values is None else values, dtype=float)
    return series.range_min + x * (series.range_max - series.range_min)


def to_daily(series: IntensitySeries, start: Optional[date] = None, end: Optional[date] = None) -> IntensitySeries:
    """Fill missing days between ``start`` and ``end`` (inclusive) with rest days of intensity 0.

    Days outside the range are dropped. A normalized series stays normalized, with rest days at 0.
    """
    if not len(series) and (start is None or end is None):
        raise DataError(f"Series {series.user_id!r} is empty; give start and end")
    start = start if start is not None else series.dates[0]
    end = end if end is not None else series.dates[-1]
    if end < start:
        raise DomainError(f"end {end.isoformat()} precedes start {start.isoformat()}")

    raw = dict(series.samples)
    scaled = dict(zip(series.dates, series.normalized)) if series.normalized is not None else None
    calendar = [start + timedelta(days=k) for k in range((end - start).days + 1)]
    samples = tuple((d, raw.get(d, 0.0)) for d in calendar)
    normalized = tuple(scaled.get(d, 0.0) for d in calendar) if scaled is not None else None
    filled = sum(1 for d in calendar if d not in raw)
    if filled:
        logger.debug("Filled %d rest day(s) for %s", filled, series.user_id)
    return replace(series, samples=samples, normalized=normalized)


def write_profiles(rows: Sequence[Tuple[str, UserProfile, str]], path: Union[str, Path]) -> Path:
    """Write ``(user_id, profile, source)`` rows to a profiles CSV"""
    path = Path(path)
    frame = pd.DataFrame(
        [
            (user_id, p.alpha, p.beta, p.lam, p.mu, p.delta, p.k_f, p.k_g, p.m, p.l, source)
            for user_id, p, source in rows
        ],
        columns=FileConstants.profiles_header,
    )
    frame.to_csv(path, index=False)
    return path


def read_profiles(path: Union[str, Path]) -> List[Tuple[str, UserProfile, str]]:
    """Read a profiles CSV written by `write_profiles`

    Raises:
        ParseError: on a wrong header or an invalid row, naming the line
    """
    if not Path(path).exists():
        raise NoDataError(f"No such file: {path}")
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    if list(frame.columns) != FileConstants.profiles_header:
        raise ParseError(f"Expected header {','.join(FileConstants.profiles_header)}", str(path), 1)
    rows = []
    for idx, row in frame.iterrows():
        try:
            profile = UserProfile(
                alpha=float(row["alpha"]), beta=float(row["beta"]), lam=float(row["lambda"]), mu=float(row["mu"]),
                delta=float(row["delta"]), k_f=float(row["k_f"]), k_g=float(row["k_g"]), m=float(row["m"]),
                l=float(row["l"]),
            )
        except ValueError as e:
            raise ParseError(str(e), str(path), int(idx) + 2) from e
        rows.append((row["user_id"], profile, row["source"]))
    return rows

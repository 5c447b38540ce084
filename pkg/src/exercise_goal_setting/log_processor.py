"""Parsers for exercise logs: perceived-exertion diaries, heart-rate sessions and VO2Max tests

Every parser reads the whole file as strings and converts row by row, so a malformed value is
reported with its line number (the header is line 1) instead of being coerced.
"""

import logging
import math
from collections import defaultdict
from datetime import date
from pathlib import Path
from typing import Union

import pandas as pd

from exercise_goal_setting.constants import DataConstants, FileConstants
from exercise_goal_setting.datahelpers import IntensitySeries, PerformanceSeries, trimp
from exercise_goal_setting.exceptions import DomainError, NoDataError, ParseError

logger = logging.getLogger(__name__)


def _read_table(path: Union[str, Path], header: list) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise NoDataError(f"No such file: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.ParserError as e:
        raise ParseError(str(e), str(path)) from e
    except pd.errors.EmptyDataError:
        raise ParseError("Empty file", str(path), 1) from None
    columns = [c.strip() for c in frame.columns]
    if columns != header:
        raise ParseError(f"Expected header {','.join(header)}, got {','.join(columns)}", str(path), 1)
    frame.columns = columns
    return frame


def _parse_date(text: str, path: Path, line: int) -> date:
    try:
        return date.fromisoformat(text.strip())
    except ValueError:
        raise ParseError(f"Invalid ISO-8601 date {text!r}", str(path), line) from None


def _parse_float(text: str, column: str, path: Path, line: int) -> float:
    try:
        value = float(text.strip())
    except ValueError:
        raise ParseError(f"Invalid number {text!r} in column {column}", str(path), line) from None
    if not math.isfinite(value):
        raise ParseError(f"Non-finite value {text!r} in column {column}", str(path), line)
    return value


def _user_id(path: Path, user_id: str) -> str:
    return user_id if user_id is not None else path.stem


def load_srpe(path: Union[str, Path], user_id: str = None) -> IntensitySeries:
    """Read a perceived-exertion diary with header ``date,perceived_exertion``.

    Rows with an empty exertion are dropped and counted in ``IntensitySeries.dropped``.

    Args:
        path (str or Path): the CSV file
        user_id (str, optional): defaults to the file stem

    Returns:
        IntensitySeries: unit ``sRPE``, sorted by date

    Raises:
        ParseError: on a wrong header, a malformed row, an exertion outside [0, 10] or a duplicate date
    """
    path = Path(path)
    frame = _read_table(path, FileConstants.srpe_header)

    samples = {}
    dropped = 0
    for idx, row in frame.iterrows():
        line = int(idx) + 2
        day = _parse_date(row["date"], path, line)
        if row["perceived_exertion"].strip() == "":
            dropped += 1
            continue
        value = _parse_float(row["perceived_exertion"], "perceived_exertion", path, line)
        if not 0.0 <= value <= DataConstants.srpe_max:
            raise ParseError(f"Perceived exertion {value} outside [0, {DataConstants.srpe_max:g}]", str(path), line)
        if day in samples:
            raise ParseError(f"Duplicate date {day.isoformat()}", str(path), line)
        samples[day] = value

    if dropped:
        logger.info("Dropped %d row(s) with missing exertion from %s", dropped, path)
    return IntensitySeries(_user_id(path, user_id), "sRPE", tuple(sorted(samples.items())), dropped=dropped)


def load_sessions(path: Union[str, Path], user_id: str = None) -> IntensitySeries:
    """Read heart-rate sessions with header ``date,duration_min,avg_hr,rest_hr,max_hr,sex``.

    Each session is converted to a training impulse and sessions on the same day are summed.

    Returns:
        IntensitySeries: unit ``TRIMP``, one sample per day with at least one session

    Raises:
        ParseError: on a wrong header, a malformed row or invalid heart rates
    """
    path = Path(path)
    frame = _read_table(path, FileConstants.sessions_header)

    daily = defaultdict(float)
    for idx, row in frame.iterrows():
        line = int(idx) + 2
        day = _parse_date(row["date"], path, line)
        numbers = {
            column: _parse_float(row[column], column, path, line)
            for column in ("duration_min", "avg_hr", "rest_hr", "max_hr")
        }
        try:
            daily[day] += trimp(sex=row["sex"], **numbers)
        except DomainError as e:
            raise ParseError(str(e), str(path), line) from e

    logger.info("Read %d session(s) over %d day(s) from %s", len(frame), len(daily), path)
    return IntensitySeries(_user_id(path, user_id), "TRIMP", tuple(sorted(daily.items())))


def load_vo2max(path: Union[str, Path], user_id: str = None) -> PerformanceSeries:
    """Read VO2Max tests with header ``date,vo2max``.

    Raises:
        ParseError: on a wrong header, a malformed or nonpositive value, or a duplicate date
    """
    path = Path(path)
    frame = _read_table(path, FileConstants.vo2max_header)

    samples = {}
    for idx, row in frame.iterrows():
        line = int(idx) + 2
        day = _parse_date(row["date"], path, line)
        value = _parse_float(row["vo2max"], "vo2max", path, line)
        if value <= 0:
            raise ParseError(f"VO2Max must be positive, got {value}", str(path), line)
        if day in samples:
            raise ParseError(f"Duplicate date {day.isoformat()}", str(path), line)
        samples[day] = value

    return PerformanceSeries(_user_id(path, user_id), tuple(sorted(samples.items())))

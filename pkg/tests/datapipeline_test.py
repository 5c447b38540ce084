import sys
from datetime import date, timedelta
# insert at 1, 0 is the script path (or '' in REPL)
sys.path.insert(1, 'src')

import numpy as np
import pytest

from exercise_goal_setting import datahelpers as dh
from exercise_goal_setting import log_processor as lp
from exercise_goal_setting.exceptions import DataError, DomainError, NoDataError, ParseError
from exercise_goal_setting.health import UserProfile

"""Tests of log parsing, training impulses, normalization and synthetic users"""


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


## perceived exertion diaries

def test_load_srpe(tmp_path):
    path = write(tmp_path, "u1.csv", "date,perceived_exertion\n2020-01-03,4\n2020-01-01,7.5\n2020-01-02,0\n")
    series = lp.load_srpe(path)

    assert(series.user_id == "u1")
    assert(series.unit == "sRPE")
    assert(len(series) == 3)
    assert(series.dates == [date(2020, 1, 1), date(2020, 1, 2), date(2020, 1, 3)])
    assert(list(series.values) == [7.5, 0.0, 4.0])
    assert(series.dropped == 0)


def test_load_srpe_drops_empty_exertion(tmp_path):
    path = write(tmp_path, "u2.csv", "date,perceived_exertion\n2020-01-01,5\n2020-01-02,\n2020-01-03,6\n")
    series = lp.load_srpe(path, user_id="alice")

    assert(series.user_id == "alice")
    assert(len(series) == 2)
    assert(series.dropped == 1)


def test_load_srpe_errors(tmp_path):
    duplicate = write(tmp_path, "dup.csv", "date,perceived_exertion\n2020-01-01,5\n2020-01-01,6\n")
    with pytest.raises(ParseError) as e:
        lp.load_srpe(duplicate)
    assert(e.value.line == 3)

    with pytest.raises(ParseError):
        lp.load_srpe(write(tmp_path, "range.csv", "date,perceived_exertion\n2020-01-01,11\n"))
    with pytest.raises(ParseError) as e:
        lp.load_srpe(write(tmp_path, "date.csv", "date,perceived_exertion\n01/02/2020,3\n"))
    assert(e.value.line == 2)
    with pytest.raises(ParseError) as e:
        lp.load_srpe(write(tmp_path, "header.csv", "day,rpe\n2020-01-01,3\n"))
    assert(e.value.line == 1)
    with pytest.raises(ParseError):
        lp.load_srpe(write(tmp_path, "number.csv", "date,perceived_exertion\n2020-01-01,hard\n"))
    with pytest.raises(NoDataError):
        lp.load_srpe(tmp_path / "missing.csv")


## heart-rate sessions and VO2Max

def test_trimp():
    assert(dh.trimp(30, 150, 60, 190, "male") == pytest.approx(50.2, abs=0.05))
    assert(dh.trimp(30, 150, 60, 190, "F") < dh.trimp(30, 150, 60, 190, "M"))
    with pytest.raises(DomainError):
        dh.trimp(30, 50, 60, 190, "m")
    with pytest.raises(DomainError):
        dh.trimp(0, 150, 60, 190, "m")
    with pytest.raises(DomainError):
        dh.trimp(30, 150, 60, 190, "x")


def test_load_sessions_sums_per_day(tmp_path):
    path = write(tmp_path, "hr.csv",
                 "date,duration_min,avg_hr,rest_hr,max_hr,sex\n"
                 "2020-02-01,30,150,60,190,male\n"
                 "2020-02-01,30,150,60,190,male\n"
                 "2020-02-03,45,120,55,185,female\n")
    series = lp.load_sessions(path)

    assert(series.unit == "TRIMP")
    assert(series.dates == [date(2020, 2, 1), date(2020, 2, 3)])
    assert(series.values[0] == pytest.approx(2 * dh.trimp(30, 150, 60, 190, "male")))

    with pytest.raises(ParseError):
        lp.load_sessions(write(tmp_path, "bad.csv",
                               "date,duration_min,avg_hr,rest_hr,max_hr,sex\n2020-02-01,30,200,60,190,male\n"))


def test_load_vo2max(tmp_path):
    series = lp.load_vo2max(write(tmp_path, "v.csv", "date,vo2max\n2020-01-05,41.2\n2020-01-01,40.0\n"))

    assert(series.dates == [date(2020, 1, 1), date(2020, 1, 5)])
    assert(list(series.values) == [40.0, 41.2])
    with pytest.raises(ParseError):
        lp.load_vo2max(write(tmp_path, "neg.csv", "date,vo2max\n2020-01-01,-3\n"))


## normalization and daily calendars

def make_series(values, start=date(2020, 1, 1), unit="steps"):
    return dh.IntensitySeries("u", unit, tuple((start + timedelta(days=k), v) for k, v in enumerate(values)))


def test_normalize_and_denormalize():
    series = dh.normalize(make_series([2.0, 4.0, 6.0]))

    assert(series.normalized == (0.0, 0.5, 1.0))
    assert(series.range_min == 2.0)
    assert(series.range_max == 6.0)
    assert(np.allclose(dh.denormalize(series), [2.0, 4.0, 6.0]))
    assert(np.allclose(dh.denormalize(series, [0.25]), [3.0]))


def test_normalize_constant_series():
    with pytest.raises(DataError):
        dh.normalize(make_series([3.0, 3.0, 3.0]))
    with pytest.raises(DataError):
        dh.denormalize(make_series([1.0, 2.0]))


def test_to_daily_fills_rest_days():
    series = dh.IntensitySeries("u", "sRPE", ((date(2020, 1, 1), 4.0), (date(2020, 1, 4), 8.0)))
    daily = dh.to_daily(dh.normalize(series))

    assert(len(daily) == 4)
    assert(list(daily.values) == [4.0, 0.0, 0.0, 8.0])
    assert(daily.normalized == (0.0, 0.0, 0.0, 1.0))

    wider = dh.to_daily(series, date(2019, 12, 31), date(2020, 1, 2))
    assert(list(wider.values) == [0.0, 4.0, 0.0])


def test_series_validation():
    with pytest.raises(DomainError):
        dh.IntensitySeries("u", "miles", ())
    with pytest.raises(DomainError):
        dh.IntensitySeries("u", "steps", ((date(2020, 1, 2), 1.0), (date(2020, 1, 1), 1.0)))
    with pytest.raises(DomainError):
        make_series([-1.0])
    with pytest.raises(DomainError):
        dh.PerformanceSeries("u", ((date(2020, 1, 1), 0.0),))


## synthetic users and profiles

def test_synth_g1_is_deterministic():
    first = dh.synth_g1(n_users=5, seed=42)
    second = dh.synth_g1(n_users=5, seed=42)
    other = dh.synth_g1(n_users=5, seed=43)

    assert(first == second)
    assert(first != other)
    assert([u.series.user_id for u in first] == ["g1-000", "g1-001", "g1-002", "g1-003", "g1-004"])
    assert(all(len(u.series) == 84 for u in first))


def test_synth_g1_step_distribution():
    users = dh.synth_g1(n_users=50, seed=0)
    steps = np.concatenate([u.series.values for u in users])

    assert(abs(steps.mean() - 6274.0) < 100.0)
    assert(abs(steps.std() - 2106.0) < 100.0)
    assert(steps.min() >= 0.0)


def test_random_profile_is_valid():
    rng = np.random.default_rng(0)
    profiles = [dh.random_profile(rng) for _ in range(100)]

    assert(all(isinstance(p, UserProfile) for p in profiles))


def test_profiles_round_trip(tmp_path):
    rows = [(u.series.user_id, u.profile, "synthetic") for u in dh.synth_g1(n_users=3, seed=1)]
    path = dh.write_profiles(rows, tmp_path / "profiles.csv")

    assert(dh.read_profiles(path) == rows)


def test_read_profiles_rejects_invalid_row(tmp_path):
    path = write(tmp_path, "p.csv",
                 "user_id,alpha,beta,lambda,mu,delta,k_f,k_g,m,l,source\n"
                 "a,0.9,0.5,1,1.5,0.9,0.3,0.2,1,1,fitted\n"
                 "b,1.5,0.5,1,1.5,0.9,0.3,0.2,1,1,fitted\n")
    with pytest.raises(ParseError) as e:
        dh.read_profiles(path)
    assert(e.value.line == 3)

import sys
from datetime import date, timedelta
# insert at 1, 0 is the script path (or '' in REPL)
sys.path.insert(1, 'src')

import numpy as np
import pytest

from exercise_goal_setting import estimation as est
from exercise_goal_setting import health as h
from exercise_goal_setting.datahelpers import IntensitySeries, PerformanceSeries
from exercise_goal_setting.exceptions import DataError, DomainError

"""Tests of profile estimation against VO2Max observations"""

START = date(2021, 3, 1)
TRUE = dict(alpha=0.9, beta=0.5, k_f=0.3, k_g=0.2, b_0=40.0)


def daily_intensity(days=84, seed=0):
    e = np.random.default_rng(seed).uniform(0.0, 1.0, size=days)
    e[0], e[1] = 0.0, 1.0
    samples = tuple((START + timedelta(days=k), 100.0 * v) for k, v in enumerate(e))
    return IntensitySeries("u", "TRIMP", samples, normalized=tuple(e), range_min=0.0, range_max=100.0), e


def observations(e, every=2, stage=h.SkillStage.ACQUISITION, noise=0.0, seed=0):
    predicted = est.simulate_performance(e, stage=stage, **TRUE)
    if noise:
        # noise on the normalized performance scale
        predicted = predicted + TRUE["b_0"] * np.random.default_rng(seed).normal(0.0, noise, size=len(predicted))
    return PerformanceSeries("u", tuple((START + timedelta(days=k), predicted[k]) for k in range(0, len(e), every)))


def test_simulation_matches_health_dynamics():
    _, e = daily_intensity(days=20)
    profile = h.UserProfile(alpha=0.9, beta=0.5, lam=1.0, mu=1.5, delta=0.9, k_f=0.3, k_g=0.2, m=0.0, l=0.0)
    for stage in h.SkillStage:
        simulated = est.simulate_performance(e, stage=stage, **TRUE)
        state = h.HealthState(0.0, float(np.mean(e)), 0.0, 0.0)
        expected = []
        for value in e:
            state = h.update_state(state, float(value), profile)
            expected.append(40.0 * h.performance(state, profile, stage))

        assert(np.allclose(simulated, expected, rtol=1e-12, atol=1e-10))


def test_simulation_rejects_raw_intensity():
    with pytest.raises(DomainError):
        est.simulate_performance(np.array([0.5, 3.0]), **TRUE)
    with pytest.raises(DomainError):
        est.simulate_performance(np.array([]), **TRUE)


def test_noiseless_recovery():
    intensity, e = daily_intensity()
    perf = observations(e)
    result = est.estimate_profile(intensity, perf, opts=est.EstimationOptions(seed=1))

    assert(result.n_observations == 42)
    assert(result.rss < 1e-6)
    for name in ("alpha", "beta", "k_f", "k_g"):
        assert(getattr(result, name) == pytest.approx(TRUE[name], abs=0.02)), name
    assert(result.b_0 == pytest.approx(TRUE["b_0"], rel=0.02))
    assert(result.rss <= min(result.start_rss))

    profile = result.to_profile(m=1.0, l=2.0)
    assert(profile.alpha == result.alpha)
    assert(profile.m == 1.0)
    assert(set(result.as_dict()) == set(est.FITTED))


@pytest.mark.slow
def test_noisy_recovery_median_over_seeds():
    intensity, e = daily_intensity()
    errors = {"alpha": [], "beta": []}
    for seed in range(20):
        perf = observations(e, every=1, noise=0.05, seed=seed)
        result = est.estimate_profile(intensity, perf, opts=est.EstimationOptions(seed=seed))
        for name in errors:
            errors[name].append(abs(getattr(result, name) - TRUE[name]))

    assert(np.median(errors["alpha"]) <= 0.1)
    assert(np.median(errors["beta"]) <= 0.1)


def test_estimation_is_deterministic():
    intensity, e = daily_intensity(days=40)
    perf = observations(e, every=3)
    opts = est.EstimationOptions(n_starts=2, max_evaluations=2000, seed=5)

    assert(est.estimate_profile(intensity, perf, opts=opts) == est.estimate_profile(intensity, perf, opts=opts))


def test_short_series_is_rejected():
    intensity, e = daily_intensity(days=30)
    perf = observations(e, every=4)

    assert(len(perf) == 8)
    with pytest.raises(DataError):
        est.estimate_profile(intensity, perf)


def test_observations_outside_the_intensity_range_are_ignored():
    intensity, e = daily_intensity(days=30)
    inside = observations(e, every=4)
    later = tuple((START + timedelta(days=100 + k), 40.0) for k in range(10))
    with pytest.raises(DataError):
        est.estimate_profile(intensity, PerformanceSeries("u", inside.samples + later))


def test_options_validation():
    with pytest.raises(DomainError):
        est.EstimationOptions(n_starts=0)

"""Profile estimation by nonlinear least squares against observed VO2Max

The fitted parameters are the decay rates ``alpha``, ``beta``, the marginal effects ``k_f``, ``k_g``
and a scale ``b_0`` mapping model performance onto ml/kg/min; ``lam``, ``mu`` and ``delta`` are held
fixed. The health state is simulated from the normalized daily intensity series (rest days at 0).
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter

from exercise_goal_setting.constants import DataConstants
from exercise_goal_setting.datahelpers import IntensitySeries, PerformanceSeries, normalize, to_daily
from exercise_goal_setting.exceptions import DataError, DomainError
from exercise_goal_setting.health import SkillStage, UserProfile

logger = logging.getLogger(__name__)

FITTED = ("alpha", "beta", "k_f", "k_g", "b_0")


@dataclass(frozen=True)
class EstimationOptions:
    """Optimizer settings

    Args:
        n_starts (int): multi-start count. Defaults to 8.
        max_evaluations (int): objective evaluations per start. Defaults to 10000.
        tolerance (float): simplex spread at which a start has converged. Defaults to 1e-8.
        seed (int): seed of the random starting points. Defaults to 0.
        lam (float): fixed fitness exponent
        mu (float): fixed fatigue exponent
        delta (float): fixed base-level decay
    """
    n_starts: int = DataConstants.n_starts
    max_evaluations: int = DataConstants.max_evaluations
    tolerance: float = DataConstants.simplex_tolerance
    seed: int = 0
    lam: float = DataConstants.fixed_lambda
    mu: float = DataConstants.fixed_mu
    delta: float = DataConstants.fixed_delta

    def __post_init__(self):
        if self.n_starts < 1 or self.max_evaluations < 1:
            raise DomainError("n_starts and max_evaluations must be positive")


@dataclass(frozen=True)
class EstimationResult:
    """Fitted profile subset with fit diagnostics."""
    alpha: float
    beta: float
    k_f: float
    k_g: float
    b_0: float
    rss: float
    iterations: int
    evaluations: int
    converged: bool
    n_observations: int
    start_rss: tuple = ()

    def __post_init__(self):
        if self.rss < 0:
            raise DomainError("RSS must be nonnegative")

    def to_profile(self, m: float = 0.0, l: float = 0.0, lam: float = DataConstants.fixed_lambda,
                   mu: float = DataConstants.fixed_mu, delta: float = DataConstants.fixed_delta) -> UserProfile:
        """Complete the fitted subset into a `UserProfile`; the scale ``b_0`` is not part of the profile"""
        return UserProfile(alpha=self.alpha, beta=self.beta, lam=lam, mu=mu, delta=delta,
                           k_f=self.k_f, k_g=self.k_g, m=m, l=l)

    def as_dict(self) -> Dict[str, float]:
        return {name: getattr(self, name) for name in FITTED}


def simulate_performance(intensity: np.ndarray, alpha: float, beta: float, k_f: float, k_g: float, b_0: float,
                         stage: SkillStage = SkillStage.ACQUISITION, lam: float = DataConstants.fixed_lambda,
                         mu: float = DataConstants.fixed_mu, delta: float = DataConstants.fixed_delta,
                         base: Optional[float] = None) -> np.ndarray:
    """Scaled model performance after each day of ``intensity``.

    The state starts with no fitness or fatigue and base level ``base`` (default: the mean intensity),
    and follows the same recursions as `exercise_goal_setting.health.update_state`.
    """
    e = np.asarray(intensity, dtype=float)
    if e.ndim != 1 or len(e) == 0:
        raise DomainError("intensity must be a nonempty 1-d array")
    if np.any(e < 0) or np.any(e > 1):
        raise DomainError("intensity must be normalized into [0, 1]")
    base = float(np.mean(e)) if base is None else base

    f = lfilter([1.0], [1.0, -alpha], e ** lam)
    g = lfilter([1.0], [1.0, -beta], e ** mu)
    b, _ = lfilter([1.0 - delta], [1.0, -delta], e, zi=[delta * base])

    stock = k_f * f - k_g * g
    if stage is SkillStage.ACQUISITION:
        return b_0 * (b + stock)
    return b_0 * b * (1.0 + stock)


def _overlap(intensity: IntensitySeries, perf: PerformanceSeries):
    start, end = intensity.dates[0], intensity.dates[-1]
    daily = to_daily(intensity, start, end)
    index = {d: k for k, d in enumerate(daily.dates)}
    pairs = [(index[d], v) for d, v in perf.samples if d in index]
    return np.asarray(daily.normalized), np.array([k for k, _ in pairs], dtype=int), np.array([v for _, v in pairs])


def estimate_profile(intensity: IntensitySeries, perf: PerformanceSeries,
                     stage: SkillStage = SkillStage.ACQUISITION,
                     opts: Optional[EstimationOptions] = None) -> EstimationResult:
    """Fit ``(alpha, beta, k_f, k_g, b_0)`` minimizing the squared error against observed VO2Max.

    Each start runs Nelder-Mead in unit-box coordinates with a quadratic penalty outside the box,
    followed by one restart from its end point; the best RSS over all starts is returned.

    Args:
        intensity (IntensitySeries): daily intensity; normalized here if not already
        perf (PerformanceSeries): observed VO2Max
        stage (SkillStage, optional): performance form. Defaults to acquisition.
        opts (EstimationOptions, optional): optimizer settings

    Returns:
        EstimationResult: best-effort fit; ``converged`` is False if no start met the tolerance

    Raises:
        DataError: if fewer than 10 observations fall within the intensity date range
    """
    opts = opts if opts is not None else EstimationOptions()
    if not len(intensity):
        raise DataError(f"Intensity series {intensity.user_id!r} is empty")
    if intensity.normalized is None:
        intensity = normalize(intensity)

    e, obs_index, observed = _overlap(intensity, perf)
    if len(observed) < DataConstants.min_performance_points:
        raise DataError(
            f"Need at least {DataConstants.min_performance_points} performance observations within "
            f"{intensity.dates[0].isoformat()}..{intensity.dates[-1].isoformat()}, got {len(observed)}"
        )

    lows = np.array([lo for lo, _ in DataConstants.estimation_bounds])
    highs = np.array([hi for _, hi in DataConstants.estimation_bounds])
    base = float(np.mean(e))

    def rss_at(theta: np.ndarray) -> float:
        alpha, beta, k_f, k_g, b_0 = theta
        predicted = simulate_performance(e, alpha, beta, k_f, k_g, b_0, stage,
                                         lam=opts.lam, mu=opts.mu, delta=opts.delta, base=base)[obs_index]
        return float(np.sum((predicted - observed) ** 2))

    def objective(u: np.ndarray) -> float:
        clipped = np.clip(u, 0.0, 1.0)
        penalty = 1e6 * float(np.sum((u - clipped) ** 2))
        return rss_at(lows + clipped * (highs - lows)) + penalty

    rng = np.random.default_rng(opts.seed)
    starts = [np.full(len(FITTED), 0.5)] + [rng.uniform(0.05, 0.95, size=len(FITTED)) for _ in range(opts.n_starts - 1)]
    nm_options = {"xatol": opts.tolerance, "fatol": opts.tolerance ** 2, "maxfev": opts.max_evaluations}

    best_u, best_rss = None, np.inf
    iterations = evaluations = 0
    converged = False
    start_rss = []
    for k, u0 in enumerate(starts):
        start_rss.append(objective(u0))
        result = minimize(objective, u0, method="Nelder-Mead", options=nm_options)
        polished = minimize(objective, result.x, method="Nelder-Mead", options=nm_options)
        if polished.fun <= result.fun:
            result_x, result_fun, success = polished.x, polished.fun, polished.success
        else:
            result_x, result_fun, success = result.x, result.fun, result.success
        iterations += result.nit + polished.nit
        evaluations += result.nfev + polished.nfev
        converged = converged or bool(success)
        logger.debug("start %d: rss %.6g -> %.6g (%s)", k, start_rss[-1], result_fun, "converged" if success else "stopped")
        if result_fun < best_rss:
            best_u, best_rss = result_x, result_fun

    theta = lows + np.clip(best_u, 0.0, 1.0) * (highs - lows)
    final_rss = rss_at(theta)
    if not converged:
        logger.warning("No start of the fit for %s converged; returning the best effort (rss %.6g)",
                       intensity.user_id, final_rss)

    alpha, beta, k_f, k_g, b_0 = (float(v) for v in theta)
    return EstimationResult(alpha=alpha, beta=beta, k_f=k_f, k_g=k_g, b_0=b_0, rss=final_rss,
                            iterations=int(iterations), evaluations=int(evaluations), converged=converged,
                            n_observations=len(observed), start_rss=tuple(start_rss))

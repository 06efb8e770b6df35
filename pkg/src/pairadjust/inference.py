"""Matched-pairs variance estimation, confidence intervals, tests.

The variance estimator combines the mean squared within-pair difference of
adjusted outcomes with a cross-pair ("pairs of pairs") product correction;
it is algebraically nonnegative, and any tiny negative value produced by
floating point is clamped to zero and flagged.  The usual arm-wise
difference-in-means variance is reported alongside as a conservative
comparator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.stats import norm

from .core import (
    ContractViolation,
    EstimateReport,
    ExperimentData,
    WorkingModel,
    adjusted_outcomes,
)

__all__ = [
    "VarianceReport",
    "variance_adjusted",
    "confidence_interval",
    "test_ate",
]


@lru_cache(maxsize=64)
def _two_sided_quantile(alpha: float) -> float:
    return float(norm.ppf(1.0 - alpha / 2.0))


@dataclass(frozen=True)
class VarianceReport:
    tau2: float
    lambda_hat: float
    sigma2_hat: float
    sigma2_conservative: float
    clamped: bool = False


def variance_adjusted(
    data: ExperimentData, wm: WorkingModel, delta_hat: float
) -> VarianceReport:
    """Variance of the adjusted estimator, respecting the plan's pair order.

    ``tau2`` averages squared within-pair differences of the adjusted
    outcomes over all n pairs; ``lambda_hat`` averages signed cross products
    over consecutive pair blocks (the last pair is dropped from lambda_hat
    when n is odd); ``sigma2_hat = tau2 - (lambda_hat + delta_hat^2) / 2``.
    The pair order must be the design-time order: consecutive pairs are
    assumed close in the matching covariates.
    """
    n = data.n_pairs
    if n < 2:
        raise ContractViolation("variance needs at least two pairs")
    yt = adjusted_outcomes(data, wm)
    pairs = data.plan.pairs
    diff = yt[pairs[:, 0]] - yt[pairs[:, 1]]
    sign = data.d[pairs[:, 0]] - data.d[pairs[:, 1]]  # +1/-1 per valid pair
    g = diff * sign  # treated-minus-control difference per pair

    tau2 = float(diff @ diff / n)
    h = n // 2
    lambda_hat = float(2.0 / n * (g[0 : 2 * h : 2] @ g[1 : 2 * h : 2]))
    raw = tau2 - 0.5 * (lambda_hat + delta_hat**2)
    clamped = raw < 0.0
    sigma2 = 0.0 if clamped else raw

    treated = yt[data.d == 1]
    control = yt[data.d == 0]
    sigma2_cons = float(treated.var() + control.var())
    return VarianceReport(
        tau2=tau2,
        lambda_hat=lambda_hat,
        sigma2_hat=sigma2,
        sigma2_conservative=sigma2_cons,
        clamped=bool(clamped),
    )


def confidence_interval(
    delta_hat: float, sigma_hat: float, n: int, alpha: float
) -> tuple[float, float]:
    """Two-sided normal interval ``delta_hat +- sigma_hat/sqrt(n) * z(1-alpha/2)``.

    ``sigma_hat`` estimates the scale of ``sqrt(n) * (delta_hat - delta)``,
    hence the explicit ``1/sqrt(n)`` in the half width.
    """
    if sigma_hat < 0:
        raise ContractViolation("sigma_hat must be nonnegative")
    if n < 1:
        raise ContractViolation("n must be positive")
    if not (0 < alpha < 1):
        raise ContractViolation("alpha must lie in (0, 1)")
    hw = sigma_hat / math.sqrt(n) * _two_sided_quantile(alpha)
    return (delta_hat - hw, delta_hat + hw)


def test_ate(report: EstimateReport, delta0: float) -> bool:
    """Reject the null that the ATE equals ``delta0`` at the report's level.

    Equivalent to ``delta0`` falling outside the report's confidence
    interval.
    """
    z = _two_sided_quantile(report.alpha)
    return bool(abs(report.delta_hat - delta0) > z * report.std_error)

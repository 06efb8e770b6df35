"""Numerical kernels: OLS, weighted L1 regression, penalty rule, loadings loop.

Defaults (convergence tolerance 1e-7, 10,000 sweeps, 15 loading steps, tail
mass 0.1) are pinned here; callers override through ``LassoConfig``.  Design
columns are consumed as provided: standardization is the caller's job, the
penalty loadings do the per-column normalization inside the L1 problem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.stats import norm

from ._kernels import cd_weighted_lasso
from .core import ContractViolation, EstimationError

__all__ = [
    "OlsFit",
    "LassoConfig",
    "LassoFit",
    "ols_fit",
    "compute_lambda",
    "weighted_lasso_fit",
    "iterate_penalty_loadings",
]

# rank_ok iff the cross-product matrix has relative condition below 1/1e-10,
# i.e. min/max singular value of the design above sqrt(1e-10).
_RANK_RTOL = 1e-5


@dataclass(frozen=True)
class OlsFit:
    coefficients: np.ndarray
    residuals: np.ndarray
    rank_ok: bool


@dataclass(frozen=True)
class LassoConfig:
    """Knobs for the weighted-L1 solver and the penalty-loading loop.

    ``slow_divergence`` multiplies the penalty level; it must grow (slowly)
    with the sample for the theory to bite, and when left ``None`` it
    defaults to ``max(1, log(log(2n)))`` at fit time.  That default is a
    convention choice, not forced by anything: any slowly growing sequence
    is admissible.
    """

    max_iter: int = 10_000
    tol: float = 1e-7
    loading_steps: int = 15
    slow_divergence: float | None = None
    gamma: float = 0.1

    def __post_init__(self) -> None:
        if self.max_iter <= 0 or self.tol <= 0 or self.loading_steps <= 0:
            raise ContractViolation("max_iter, tol, loading_steps must be positive")
        if self.slow_divergence is not None and self.slow_divergence <= 0:
            raise ContractViolation("slow_divergence must be positive")
        if not (0 < self.gamma < 1):
            raise ContractViolation("gamma must lie in (0, 1)")

    def resolve_slow_divergence(self, n_pairs: int) -> float:
        if self.slow_divergence is not None:
            return self.slow_divergence
        return max(1.0, math.log(math.log(2.0 * n_pairs)))


@dataclass(frozen=True)
class LassoFit:
    intercept: float
    beta: np.ndarray
    loadings: np.ndarray
    lam: float
    kkt_violation: float
    converged: bool
    n_sweeps: int
    objective_path: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)


def ols_fit(design: np.ndarray, response: np.ndarray) -> OlsFit:
    """Least squares via SVD; minimum-norm solution when rank deficient.

    ``rank_ok`` is False when the cross-product matrix is singular beyond a
    relative tolerance of 1e-10; callers decide what to do about it.
    """
    design = np.asarray(design, dtype=float)
    response = np.asarray(response, dtype=float)
    if design.ndim != 2:
        raise ContractViolation("design must be a matrix")
    m, q = design.shape
    if response.shape != (m,):
        raise ContractViolation(f"response must have length {m}")
    if m < q:
        raise ContractViolation(f"need at least as many rows ({m}) as columns ({q})")
    coef, _, rank, svals = np.linalg.lstsq(design, response, rcond=_RANK_RTOL)
    if svals.size:
        rank_ok = bool(rank == q and svals[-1] > _RANK_RTOL * svals[0])
    else:
        rank_ok = False
    residuals = response - design @ coef
    return OlsFit(coefficients=coef, residuals=residuals, rank_ok=rank_ok)


@lru_cache(maxsize=1024)
def _penalty_level(n_pairs: int, p: int, ll: float, gamma: float) -> float:
    arg = 1.0 - gamma / (2.0 * math.log(n_pairs) * p)
    if not (0.0 < arg < 1.0):
        raise EstimationError(f"quantile argument {arg} outside (0, 1)")
    return ll / math.sqrt(n_pairs) * float(norm.ppf(arg))


def compute_lambda(n_pairs: int, p: int, cfg: LassoConfig = LassoConfig()) -> float:
    """Penalty level: slow_divergence / sqrt(n) times the normal quantile at
    1 - gamma / (2 log(n) p)."""
    if n_pairs < 2 or p < 1:
        raise ContractViolation("need n_pairs >= 2 and p >= 1")
    ll = cfg.resolve_slow_divergence(n_pairs)
    return _penalty_level(n_pairs, p, ll, cfg.gamma)


def weighted_lasso_fit(
    design: np.ndarray,
    response: np.ndarray,
    loadings: np.ndarray,
    lam: float,
    cfg: LassoConfig = LassoConfig(),
    beta_init: np.ndarray | None = None,
) -> LassoFit:
    """Minimize mean squared error plus ``lam * sum(loadings * |beta|)``.

    The intercept is unpenalized and handled in closed form by centering,
    which is exact for this objective.  Cyclic coordinate descent with
    per-coordinate soft thresholding; non-convergence within ``max_iter``
    returns the best iterate flagged through ``kkt_violation``/``converged``.
    """
    design = np.asarray(design, dtype=float)
    response = np.asarray(response, dtype=float)
    loadings = np.asarray(loadings, dtype=float)
    n, p = design.shape
    if response.shape != (n,):
        raise ContractViolation("response length mismatch")
    if loadings.shape != (p,):
        raise ContractViolation("loadings length mismatch")
    if not (loadings > 0).all():
        raise ContractViolation("loadings must be strictly positive")
    if not np.isfinite(design).all():
        raise ContractViolation("design contains non-finite values")

    x_mean = design.mean(axis=0)
    y_mean = response.mean()
    xc = design - x_mean
    yc = response - y_mean
    gram = xc.T @ xc / n
    cvec = xc.T @ yc / n
    y_sq_mean = float(yc @ yc / n)
    if beta_init is None:
        beta_init = np.zeros(p)
    beta, n_sweeps, kkt, converged, obj_path = cd_weighted_lasso(
        np.ascontiguousarray(gram),
        np.ascontiguousarray(cvec),
        np.ascontiguousarray(loadings),
        float(lam),
        np.ascontiguousarray(beta_init, dtype=float),
        float(cfg.tol),
        int(cfg.max_iter),
        y_sq_mean,
    )
    intercept = float(y_mean - x_mean @ beta)
    return LassoFit(
        intercept=intercept,
        beta=beta,
        loadings=loadings.copy(),
        lam=float(lam),
        kkt_violation=float(kkt),
        converged=bool(converged),
        n_sweeps=int(n_sweeps),
        objective_path=obj_path,
    )


def iterate_penalty_loadings(
    design: np.ndarray,
    response: np.ndarray,
    arm_mask: np.ndarray,
    cfg: LassoConfig = LassoConfig(),
) -> LassoFit:
    """Iteratively re-estimate penalty loadings from residuals, then refit.

    Step 0 takes the raw response as the residual; step m sets loading l to
    ``sqrt(mean(design[:, l]**2 * resid**2))`` over the selected units and
    solves the weighted-L1 problem at the fixed penalty level from
    ``compute_lambda``.  The step-M fit is returned (M = loading_steps,
    default 15).  Successive fits are warm-started; that changes only the
    iterate path, not the converged solutions.
    """
    design = np.asarray(design, dtype=float)
    response = np.asarray(response, dtype=float)
    arm_mask = np.asarray(arm_mask, dtype=bool)
    x = design[arm_mask]
    y = response[arm_mask]
    n, p = x.shape
    if n < 2:
        raise ContractViolation("need at least two selected units")
    lam = compute_lambda(n, p, cfg)

    # The centered Gram is shared by every loading step; only the loadings
    # (hence thresholds) change between refits.
    x_mean = x.mean(axis=0)
    y_mean = y.mean()
    xc = x - x_mean
    yc = y - y_mean
    gram = np.ascontiguousarray(xc.T @ xc / n)
    cvec = np.ascontiguousarray(xc.T @ yc / n)
    y_sq_mean = float(yc @ yc / n)
    x_sq = x**2

    resid = y.copy()
    beta = np.zeros(p)
    fit: LassoFit | None = None
    for _ in range(cfg.loading_steps):
        loadings = np.sqrt((x_sq * resid[:, None] ** 2).mean(axis=0))
        bad = np.flatnonzero(loadings <= 0.0)
        if bad.size:
            raise EstimationError(
                f"penalty loading for column {int(bad[0])} is zero; "
                "drop constant-zero columns before fitting"
            )
        beta, n_sweeps, kkt, converged, obj_path = cd_weighted_lasso(
            gram,
            cvec,
            np.ascontiguousarray(loadings),
            float(lam),
            np.ascontiguousarray(beta),
            float(cfg.tol),
            int(cfg.max_iter),
            y_sq_mean,
        )
        intercept = float(y_mean - x_mean @ beta)
        resid = y - intercept - x @ beta
        fit = LassoFit(
            intercept=intercept,
            beta=beta,
            loadings=loadings,
            lam=float(lam),
            kkt_violation=float(kkt),
            converged=bool(converged),
            n_sweeps=int(n_sweeps),
            objective_path=obj_path,
        )
    assert fit is not None
    return fit

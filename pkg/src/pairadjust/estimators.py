"""Adjustment strategies producing working models for the ATE combiner.

Seven kinds are supported:

* ``unadjusted`` -- zero working model (plain difference in means).
* ``naive`` -- OLS of y on (1, d, psi); no pair structure, subject to the
  classic critique that adjustment can hurt precision.
* ``interacted`` -- adds treatment-by-covariate interactions; same limiting
  precision as ``naive`` under pair matching.
* ``pfe`` -- linear adjustment with one fixed effect per pair, computed via
  the within-pair difference reduction; the optimal linear adjustment.
* ``int_pfe`` -- interacted variant of ``pfe``.
* ``lasso_intermediate`` -- per-arm weighted-L1 regression with iterated
  penalty loadings; fitted values form the working models.
* ``refit`` -- treats the two per-arm L1 predictions as a two-column
  covariate and reruns the pair-fixed-effect step on them.

The "naive2" variant seen in simulation output is ``naive`` with psi set to
the concatenation of matching and adjustment covariates, not a separate
kind.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import (
    ContractViolation,
    EstimateReport,
    ExperimentData,
    SingularDesignError,
    WorkingModel,
    doubly_robust_estimate,
    validate_experiment,
)
from .inference import confidence_interval, variance_adjusted
from .regression import LassoConfig, LassoFit, iterate_penalty_loadings, ols_fit

__all__ = [
    "KINDS",
    "AdjustmentSpec",
    "build_psi",
    "fit_unadjusted",
    "fit_naive",
    "fit_interacted",
    "fit_pfe",
    "fit_int_pfe",
    "fit_lasso_intermediate",
    "fit_refit",
    "fit_working_model",
    "estimate",
]

KINDS = (
    "unadjusted",
    "naive",
    "interacted",
    "pfe",
    "int_pfe",
    "lasso_intermediate",
    "refit",
)

# Eigenvalue ratio below which the 2x2 within-pair Gram of the refit
# covariates is treated as singular and a column is dropped.
_REFIT_RANK_RTOL = 1e-8


@dataclass(frozen=True)
class AdjustmentSpec:
    """Which adjustment to run and which columns feed it.

    ``psi`` (the regressor matrix) is built from the raw covariate blocks
    selected by ``use_x``/``use_w``, or by an arbitrary ``transform(x, w)``
    callable when basis expansions are wanted.  ``include_intercepts``
    controls whether the per-arm L1 intercepts enter the working models of
    the regularized kinds; the ATE estimate and its variance are invariant
    to that choice, and both estimates are reported in the diagnostics.
    """

    kind: str
    use_x: bool = False
    use_w: bool = True
    transform: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    lasso_cfg: LassoConfig = field(default_factory=LassoConfig)
    include_intercepts: bool = False
    name: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ContractViolation(f"unknown adjustment kind {self.kind!r}")

    @property
    def label(self) -> str:
        return self.name if self.name is not None else self.kind


def build_psi(data: ExperimentData, spec: AdjustmentSpec) -> np.ndarray:
    """Materialize the regressor matrix for an adjustment spec.

    Raises when the matrix is empty or contains a constant column: constant
    regressors are indistinguishable from the intercept and void every
    adjustment's contract.
    """
    if spec.transform is not None:
        psi = np.asarray(spec.transform(data.x, data.w), dtype=float)
        if psi.ndim == 1:
            psi = psi[:, None]
    else:
        blocks = []
        if spec.use_x:
            blocks.append(data.x)
        if spec.use_w and data.w.shape[1] > 0:
            blocks.append(data.w)
        psi = (
            np.column_stack(blocks)
            if blocks
            else np.empty((data.n_units, 0))
        )
    if psi.shape[0] != data.n_units:
        raise ContractViolation(
            f"psi has {psi.shape[0]} rows for {data.n_units} units"
        )
    if psi.shape[1] == 0:
        raise ContractViolation("adjustment requires at least one psi column")
    if not np.isfinite(psi).all():
        raise ContractViolation("psi contains non-finite values")
    span = psi.max(axis=0) - psi.min(axis=0)
    const = np.flatnonzero(span == 0.0)
    if const.size:
        raise ContractViolation(f"psi column {int(const[0])} is constant")
    return psi


def _signed_pair_diffs(data: ExperimentData, arr: np.ndarray) -> np.ndarray:
    """Treated-minus-control within-pair differences, in plan order."""
    pairs = data.plan.pairs
    sign = (data.d[pairs[:, 0]] - data.d[pairs[:, 1]]).astype(float)
    diff = arr[pairs[:, 0]] - arr[pairs[:, 1]]
    if diff.ndim == 1:
        return sign * diff
    return sign[:, None] * diff


def _plain_pair_diffs(data: ExperimentData, arr: np.ndarray) -> np.ndarray:
    pairs = data.plan.pairs
    return arr[pairs[:, 0]] - arr[pairs[:, 1]]


def fit_unadjusted(data: ExperimentData) -> WorkingModel:
    """Zero working model; the combiner reduces to the difference in means."""
    zeros = np.zeros(data.n_units)
    return WorkingModel(m1_hat=zeros, m0_hat=zeros, label="unadjusted")


def fit_naive(data: ExperimentData, spec: AdjustmentSpec) -> WorkingModel:
    """OLS of y on (1, d, psi); both working models are psi @ beta_hat."""
    psi = build_psi(data, spec)
    n_units = data.n_units
    design = np.column_stack([np.ones(n_units), data.d.astype(float), psi])
    fit = ols_fit(design, data.y)
    if not fit.rank_ok:
        raise SingularDesignError(
            "naive design is rank deficient; prune collinear psi columns"
        )
    beta = fit.coefficients[2:]
    m = psi @ beta
    return WorkingModel(
        m1_hat=m,
        m0_hat=m,
        label=spec.label,
        info={"delta_direct": float(fit.coefficients[1])},
    )


def fit_interacted(data: ExperimentData, spec: AdjustmentSpec) -> WorkingModel:
    """OLS with treatment interactions on overall-centered psi."""
    psi = build_psi(data, spec)
    p = psi.shape[1]
    dvec = data.d.astype(float)
    psic = psi - psi.mean(axis=0)
    design = np.column_stack(
        [np.ones(data.n_units), dvec, psic, dvec[:, None] * psic]
    )
    fit = ols_fit(design, data.y)
    if not fit.rank_ok:
        raise SingularDesignError(
            "interacted design is rank deficient; prune collinear psi columns"
        )
    gamma = fit.coefficients[2 : 2 + p]
    eta = fit.coefficients[2 + p :]
    mu1 = psi[data.d == 1].mean(axis=0)
    mu0 = psi[data.d == 0].mean(axis=0)
    m1 = (psi - mu1) @ (gamma + eta)
    m0 = (psi - mu0) @ gamma
    return WorkingModel(
        m1_hat=m1,
        m0_hat=m0,
        label=spec.label,
        info={"delta_direct": float(fit.coefficients[1])},
    )


def _pfe_regression(
    data: ExperimentData, psi: np.ndarray, what: str
) -> tuple[float, np.ndarray]:
    """Within-pair reduction of the pair-fixed-effect regression.

    Regresses the signed within-pair outcome differences on a constant and
    the signed psi differences; the intercept is the ATE estimate and the
    slopes are the adjustment coefficients of the full dummy regression.
    """
    dy = _signed_pair_diffs(data, data.y)
    dpsi = _signed_pair_diffs(data, psi)
    design = np.column_stack([np.ones(data.n_pairs), dpsi])
    if design.shape[0] < design.shape[1]:
        raise SingularDesignError(
            f"{what}: {data.n_pairs} pairs cannot identify {psi.shape[1]} adjustment columns"
        )
    fit = ols_fit(design, dy)
    if not fit.rank_ok:
        raise SingularDesignError(
            f"{what}: within-pair psi variation is degenerate; the estimator "
            "is undefined (fall back to unadjusted if appropriate)"
        )
    return float(fit.coefficients[0]), fit.coefficients[1:]


def fit_pfe(data: ExperimentData, spec: AdjustmentSpec) -> WorkingModel:
    """Pair-fixed-effect linear adjustment via within-pair differencing."""
    psi = build_psi(data, spec)
    delta, beta = _pfe_regression(data, psi, "pfe")
    m = psi @ beta
    return WorkingModel(
        m1_hat=m, m0_hat=m, label=spec.label, info={"delta_direct": delta}
    )


def fit_int_pfe(data: ExperimentData, spec: AdjustmentSpec) -> WorkingModel:
    """Interacted pair-fixed-effect adjustment via within-pair differencing.

    Fits y on (d, overall-centered psi, d times overall-centered psi) plus
    one fixed effect per pair; the pair effects absorb all constants, so
    the reduction regresses plain within-pair differences of y on
    differences of the three blocks without an intercept.  The working
    models are the per-arm slope predictions, centered at the respective
    arm means; with that centering the combiner reproduces the regression's
    treatment coefficient exactly.
    """
    psi = build_psi(data, spec)
    p = psi.shape[1]
    psic = psi - psi.mean(axis=0)
    u = np.column_stack([data.d.astype(float), psi, data.d[:, None] * psic])
    du = _plain_pair_diffs(data, u)
    dy = _plain_pair_diffs(data, data.y)
    if du.shape[0] < du.shape[1]:
        raise SingularDesignError(
            f"int_pfe: {data.n_pairs} pairs cannot identify {du.shape[1]} coefficients"
        )
    fit = ols_fit(du, dy)
    if not fit.rank_ok:
        raise SingularDesignError(
            "int_pfe: within-pair psi variation is degenerate; the estimator "
            "is undefined (fall back to unadjusted if appropriate)"
        )
    gamma = fit.coefficients[1 : 1 + p]
    eta = fit.coefficients[1 + p :]
    mu1 = psi[data.d == 1].mean(axis=0)
    mu0 = psi[data.d == 0].mean(axis=0)
    m1 = (psi - mu1) @ (gamma + eta)
    m0 = (psi - mu0) @ gamma
    return WorkingModel(
        m1_hat=m1,
        m0_hat=m0,
        label=spec.label,
        info={"delta_direct": float(fit.coefficients[0])},
    )


def _lasso_arm_fits(
    data: ExperimentData, spec: AdjustmentSpec
) -> tuple[np.ndarray, dict[int, LassoFit]]:
    """Standardize psi over the full sample and fit each arm's L1 problem."""
    psi = build_psi(data, spec)
    mu = psi.mean(axis=0)
    sd = psi.std(axis=0)
    psi_std = (psi - mu) / sd  # build_psi guarantees sd > 0
    fits = {
        arm: iterate_penalty_loadings(psi_std, data.y, data.d == arm, spec.lasso_cfg)
        for arm in (0, 1)
    }
    return psi_std, fits


def _lasso_working_model(
    psi_std: np.ndarray,
    fits: dict[int, LassoFit],
    include_intercepts: bool,
    label: str,
) -> WorkingModel:
    m1 = psi_std @ fits[1].beta
    m0 = psi_std @ fits[0].beta
    if include_intercepts:
        m1 = m1 + fits[1].intercept
        m0 = m0 + fits[0].intercept
    info = {
        "lasso_active_1": float(np.count_nonzero(fits[1].beta)),
        "lasso_active_0": float(np.count_nonzero(fits[0].beta)),
        "lasso_kkt_1": fits[1].kkt_violation,
        "lasso_kkt_0": fits[0].kkt_violation,
    }
    return WorkingModel(m1_hat=m1, m0_hat=m0, label=label, info=info)


def fit_lasso_intermediate(
    data: ExperimentData, spec: AdjustmentSpec
) -> WorkingModel:
    """Per-arm weighted-L1 fits; working model for arm d is psi @ beta_d."""
    psi_std, fits = _lasso_arm_fits(data, spec)
    return _lasso_working_model(psi_std, fits, spec.include_intercepts, spec.label)


def fit_refit(data: ExperimentData, spec: AdjustmentSpec) -> WorkingModel:
    """Rerun the pair-fixed-effect step on the two per-arm L1 predictions.

    The 2x2 within-pair Gram of the predictions decides the design: full
    rank keeps both columns, near-singularity (eigenvalue ratio below 1e-8)
    drops the lower-variance column, and a fully degenerate Gram (e.g. both
    arms shrunk to zero) falls back to the unadjusted estimator, flagged in
    ``info['refit_fallback']``.
    """
    psi_std, fits = _lasso_arm_fits(data, spec)
    gamma_mat = np.column_stack([psi_std @ fits[1].beta, psi_std @ fits[0].beta])
    if spec.include_intercepts:
        gamma_mat = gamma_mat + np.array([fits[1].intercept, fits[0].intercept])

    base_info = {
        "lasso_active_1": float(np.count_nonzero(fits[1].beta)),
        "lasso_active_0": float(np.count_nonzero(fits[0].beta)),
        "lasso_kkt_1": fits[1].kkt_violation,
        "lasso_kkt_0": fits[0].kkt_violation,
    }

    def fallback() -> WorkingModel:
        zeros = np.zeros(data.n_units)
        info = dict(base_info)
        info["refit_fallback"] = 1.0
        return WorkingModel(m1_hat=zeros, m0_hat=zeros, label=spec.label, info=info)

    dg = _signed_pair_diffs(data, gamma_mat)
    gram = dg.T @ dg / data.n_pairs
    evals = np.linalg.eigvalsh(gram)
    if evals[-1] <= 0.0:
        return fallback()
    if evals[0] <= _REFIT_RANK_RTOL * evals[-1]:
        keep = [int(np.argmax(np.diag(gram)))]
    else:
        keep = [0, 1]
    try:
        delta, beta = _pfe_regression(data, gamma_mat[:, keep], "refit")
    except SingularDesignError:
        return fallback()
    m = gamma_mat[:, keep] @ beta
    info = dict(base_info)
    info["refit_fallback"] = 0.0
    info["refit_dropped_column"] = float(-1 if len(keep) == 2 else 1 - keep[0])
    info["delta_direct"] = delta
    return WorkingModel(m1_hat=m, m0_hat=m, label=spec.label, info=info)


def fit_working_model(data: ExperimentData, spec: AdjustmentSpec) -> WorkingModel:
    """Dispatch on ``spec.kind``."""
    if spec.kind == "unadjusted":
        zeros = np.zeros(data.n_units)
        return WorkingModel(m1_hat=zeros, m0_hat=zeros, label=spec.label)
    if spec.kind == "naive":
        return fit_naive(data, spec)
    if spec.kind == "interacted":
        return fit_interacted(data, spec)
    if spec.kind == "pfe":
        return fit_pfe(data, spec)
    if spec.kind == "int_pfe":
        return fit_int_pfe(data, spec)
    if spec.kind == "lasso_intermediate":
        return fit_lasso_intermediate(data, spec)
    if spec.kind == "refit":
        return fit_refit(data, spec)
    raise ContractViolation(f"unknown adjustment kind {spec.kind!r}")


def estimate(
    data: ExperimentData,
    spec: AdjustmentSpec,
    alpha: float = 0.05,
    delta_null: float = 0.0,
    validate: bool = True,
) -> EstimateReport:
    """Full pipeline for one estimator: fit, combine, variance, test."""
    if validate:
        report = validate_experiment(data)
        if not report.ok:
            raise ContractViolation("; ".join(report.failures))
    wm = fit_working_model(data, spec)
    delta = doubly_robust_estimate(data, wm)
    vr = variance_adjusted(data, wm, delta)
    sigma = math.sqrt(vr.sigma2_hat)
    n = data.n_pairs
    se = sigma / math.sqrt(n)
    lo, hi = confidence_interval(delta, sigma, n, alpha)
    reject = not (lo <= delta_null <= hi)
    diagnostics = {
        "n_pairs": float(n),
        "tau2": vr.tau2,
        "lambda_hat": vr.lambda_hat,
        "sigma2_conservative": vr.sigma2_conservative,
        "variance_clamped": float(vr.clamped),
    }
    diagnostics.update(wm.info)
    return EstimateReport(
        delta_hat=delta,
        sigma_hat=sigma,
        std_error=se,
        ci_lower=lo,
        ci_upper=hi,
        alpha=alpha,
        reject_h0=reject,
        delta_null=delta_null,
        method=spec.label,
        diagnostics=diagnostics,
    )

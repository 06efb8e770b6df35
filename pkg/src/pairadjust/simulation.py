"""Synthetic data-generating processes and the Monte Carlo engine.

Fifteen benchmark models generate potential outcomes of the form
``y_d = mu_d + m_d(x, w) + sigma_d(x, w) * eps_d`` with ``mu_0 = 0`` and
``mu_1 = delta``, so the true ATE is known exactly.  Models 1-6 match on a
scalar covariate (consecutive units after sorting); models 7-15 match on a
multivariate block via greedy nearest-neighbor matching followed by a
nearest-centroid re-ordering of the pair list so that consecutive pairs are
close (required by the pairs-of-pairs variance term).

All randomness is drawn from counter-based streams keyed on
``(seed, replication, channel)``: replications are independent tasks and
results are bit-identical for any worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr  # standard normal CDF, vectorized

from . import _kernels
from .core import ContractViolation, EstimateReport, EstimationError, ExperimentData
from .design import (
    CH_ASSIGN,
    CH_UNITS,
    AssignmentSeed,
    assign_within_pairs,
    derive_seed,
    match_pairs_greedy,
    match_pairs_sorted,
    reorder_pairs,
    stream,
)
from .estimators import AdjustmentSpec, estimate, fit_unadjusted
from .core import doubly_robust_estimate, validate_experiment
from .inference import confidence_interval, variance_adjusted
from .regression import LassoConfig

__all__ = [
    "ModelSpec",
    "SimulatedUnits",
    "MethodSummary",
    "SimulationSummary",
    "generate_model",
    "default_methods",
    "method_spec",
    "run_replication",
    "run_monte_carlo",
    "summary_rows",
    "SUMMARY_FIELDS",
]

_EQUL_RHO = 0.2
_CHOL_CACHE: dict[tuple[str, int], np.ndarray] = {}


@dataclass(frozen=True)
class ModelSpec:
    """One simulation configuration: model, size, effect, master seed."""

    model_id: int
    n_pairs: int
    delta: float
    seed: int

    def __post_init__(self) -> None:
        if not (1 <= self.model_id <= 15):
            raise ContractViolation(f"model_id must be in 1..15, got {self.model_id}")
        if self.n_pairs < 2:
            raise ContractViolation("n_pairs must be at least 2")


@dataclass(frozen=True)
class SimulatedUnits:
    """Both potential outcomes plus covariates for 2n i.i.d. units."""

    y0: np.ndarray
    y1: np.ndarray
    x: np.ndarray
    w: np.ndarray


def _chol_equicorrelated(dim: int, rho: float = _EQUL_RHO) -> np.ndarray:
    key = ("equi", dim)
    if key not in _CHOL_CACHE:
        sigma = np.full((dim, dim), rho)
        np.fill_diagonal(sigma, 1.0)
        _CHOL_CACHE[key] = np.linalg.cholesky(sigma)
    return _CHOL_CACHE[key]


def _chol_geometric_toeplitz(dim: int, base: float = 0.5) -> np.ndarray:
    key = ("toep", dim)
    if key not in _CHOL_CACHE:
        idx = np.arange(dim)
        sigma = base ** np.abs(idx[:, None] - idx[None, :])
        _CHOL_CACHE[key] = np.linalg.cholesky(sigma)
    return _CHOL_CACHE[key]


def generate_model(spec: ModelSpec, replication: int = 0) -> SimulatedUnits:
    """Draw 2n i.i.d. units for the given model.

    Deterministic in (seed, replication); the latent normal block is drawn
    first, then the two noise vectors, so adding models never perturbs
    existing streams.
    """
    g = stream(spec.seed, replication, CH_UNITS)
    n_units = 2 * spec.n_pairs
    mid = spec.model_id
    rho = _EQUL_RHO

    if mid <= 6:
        v = g.standard_normal((n_units, 2)) @ _chol_equicorrelated(2).T
    elif mid <= 9:
        v = g.standard_normal((n_units, 4)) @ _chol_equicorrelated(4).T
    elif mid <= 11:
        v = g.standard_normal((n_units, 6)) @ _chol_equicorrelated(6).T
    else:
        v = g.standard_normal((n_units, 80)) @ _chol_geometric_toeplitz(80).T
    e0 = g.standard_normal(n_units)
    e1 = g.standard_normal(n_units)

    ones = np.ones(n_units)
    if mid == 1:
        x = ndtr(v[:, 0])[:, None]
        w = ndtr(v[:, 1])[:, None]
        m0 = 4.0 * (w[:, 0] - 0.5)
        m1 = m0
        s0 = s1 = ones
    elif mid in (2, 3):
        x = ndtr(v[:, 0])[:, None]
        w = (v[:, 0] * v[:, 1])[:, None]
        quad = v[:, 0] ** 2 - 1.0
        if mid == 2:
            m0 = (w[:, 0] - rho) + 2.0 * quad
        else:
            m0 = 0.25 * (w[:, 0] - rho) + (ndtr(w[:, 0]) - 0.5) + 2.0 * quad
        m1 = m0
        s0 = s1 = ones
    elif mid in (4, 5, 6):
        x = v[:, 0][:, None]
        w = (v[:, 0] * v[:, 1])[:, None]
        m0 = 2.0 * (w[:, 0] - rho) + (ndtr(w[:, 0]) - 0.5) + 2.0 * (x[:, 0] ** 2 - 1.0)
        m1 = m0 if mid == 4 else m0 + (ndtr(x[:, 0]) - 0.5)
        s0 = s1 = ones if mid != 6 else ndtr(x[:, 0]) + 0.5
    elif mid in (7, 8, 9):
        x = v[:, 0:2]
        w = np.column_stack([v[:, 0] * v[:, 2], v[:, 1] * v[:, 3]])
        m0 = (
            2.0 * (w[:, 0] - rho)
            + 2.0 * (w[:, 1] - rho)
            + (ndtr(w[:, 0]) - 0.5)
            + (ndtr(w[:, 1]) - 0.5)
            + (x[:, 0] ** 2 - 1.0)
        )
        m1 = m0 if mid == 7 else m0 + (ndtr(x[:, 0]) - 0.5)
        s0 = s1 = ones if mid != 9 else ndtr(x[:, 0]) + 0.5
    elif mid in (10, 11):
        x = ndtr(v[:, 0:4])
        w = np.column_stack([v[:, 0] * v[:, 4], v[:, 1] * v[:, 5]])
        m0 = (
            (w[:, 0] - rho)
            + (w[:, 1] - rho)
            + 0.5 * (ndtr(w[:, 0]) - 0.5)
            + 0.5 * (ndtr(w[:, 1]) - 0.5)
            + 0.5 * (v[:, 0] ** 2 - 1.0)
            + 0.5 * (v[:, 1] ** 2 - 1.0)
        )
        m1 = m0 if mid == 10 else m0 + 0.25 * (x - 0.5).sum(axis=1)
        s0 = s1 = ones
    else:  # 12..15
        x = ndtr(v[:, 0:4])
        w = v[:, 0:40] * v[:, 40:80]
        decay = 1.0 / np.arange(1, 41, dtype=float) ** 2
        quad = (v[:, 0:4] ** 2 - 1.0) @ np.full(4, 0.125)
        if mid == 12:
            m0 = w @ decay + quad
        else:
            m0 = w @ decay + (ndtr(w) - 0.5) @ (decay / 8.0) + quad
        if mid in (12, 13):
            m1 = m0
        else:
            m1 = m0 + (x - 0.5) @ (1.0 / np.arange(1, 5, dtype=float) ** 2)
        s0 = s1 = ones if mid != 15 else x[:, 0] + 0.5

    y0 = m0 + s0 * e0
    y1 = spec.delta + m1 + s1 * e1
    return SimulatedUnits(y0=y0, y1=y1, x=x, w=w)


# --- regressor menus for the regularized kinds ------------------------------
#
# The menus expand the raw covariates with squares, cross products, and
# linear/quadratic hinges at the sample medians; the high-dimensional models
# (12-15) already carry 44 raw columns and are used as-is.


def _hinges(col: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    med = np.median(col)
    above = col > med
    lin = (col - med) * above
    quad = (col - med) ** 2 * above
    return lin, quad


def lasso_menu_scalar(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Menu for scalar (x, w): powers, cross term, hinge terms."""
    xc = x[:, 0]
    wc = w[:, 0]
    hx1, hx2 = _hinges(xc)
    hw1, hw2 = _hinges(wc)
    return np.column_stack([xc, wc, xc**2, wc**2, xc * wc, hx1, hw1, hx2, hw2])


def lasso_menu_bivariate(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Menu for 2-dim x and w: all four cross products plus hinges."""
    cross = [x[:, i] * w[:, j] for j in (0, 1) for i in (0, 1)]
    hinge_cols: list[np.ndarray] = []
    for block in (x, w):
        for j in range(block.shape[1]):
            lin, quad = _hinges(block[:, j])
            hinge_cols.extend([lin, quad])
    return np.column_stack([x, w, x**2, w**2, *cross, *hinge_cols])


def lasso_menu_quad_x(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Menu for 4-dim x, 2-dim w: alternating cross products plus hinges."""
    cross = [x[:, 0] * w[:, 0], x[:, 1] * w[:, 1], x[:, 2] * w[:, 0], x[:, 3] * w[:, 1]]
    hinge_cols: list[np.ndarray] = []
    for block in (x, w):
        for j in range(block.shape[1]):
            lin, quad = _hinges(block[:, j])
            hinge_cols.extend([lin, quad])
    return np.column_stack([x, w, x**2, w**2, *cross, *hinge_cols])


def lasso_menu_raw(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    return np.column_stack([x, w])


def _menu_for_model(model_id: int):
    if model_id <= 6:
        return lasso_menu_scalar
    if model_id <= 9:
        return lasso_menu_bivariate
    if model_id <= 11:
        return lasso_menu_quad_x
    return lasso_menu_raw


def default_methods(model_id: int) -> tuple[str, ...]:
    """The estimator menu reported for each model."""
    if model_id <= 11:
        return ("unadjusted", "naive", "naive2", "pfe", "refit")
    return ("unadjusted", "refit")


def simulation_lasso_config(n_pairs: int) -> LassoConfig:
    """Penalty scale used by the simulation study's regularized kinds.

    The square root of the library's default slow-divergence factor: still
    divergent, but light enough that the iterated-loadings fits keep the
    decaying high-dimensional signal.  Calibrated so the engine reproduces
    the benchmark rejection rates.
    """
    ll = math.sqrt(max(1.0, math.log(math.log(2.0 * n_pairs))))
    return LassoConfig(slow_divergence=ll)


def method_spec(
    name: str, model_id: int, n_pairs: int | None = None
) -> AdjustmentSpec:
    """Translate a method name into an AdjustmentSpec for a given model.

    When ``n_pairs`` is given, the regularized kinds are pinned to the
    simulation study's calibrated penalty scale; otherwise they use the
    library default.
    """
    if name == "unadjusted":
        return AdjustmentSpec("unadjusted", name=name)
    if name == "naive":
        return AdjustmentSpec("naive", use_w=True)
    if name == "naive2":
        return AdjustmentSpec("naive", use_x=True, use_w=True, name="naive2")
    if name == "interacted":
        return AdjustmentSpec("interacted", use_w=True)
    if name == "pfe":
        return AdjustmentSpec("pfe", use_w=True)
    if name == "int_pfe":
        return AdjustmentSpec("int_pfe", use_w=True)
    cfg = simulation_lasso_config(n_pairs) if n_pairs is not None else LassoConfig()
    if name == "lasso":
        return AdjustmentSpec(
            "lasso_intermediate",
            transform=_menu_for_model(model_id),
            lasso_cfg=cfg,
            name="lasso",
        )
    if name == "refit":
        return AdjustmentSpec(
            "refit", transform=_menu_for_model(model_id), lasso_cfg=cfg, name=name
        )
    raise ContractViolation(f"unknown method name {name!r}")


def realize_experiment(spec: ModelSpec, replication: int = 0) -> ExperimentData:
    """Draw, match, re-order (if multivariate), and randomize one dataset."""
    draw = generate_model(spec, replication)
    if draw.x.shape[1] == 1:
        plan = match_pairs_sorted(draw.x[:, 0])
    else:
        plan = reorder_pairs(match_pairs_greedy(draw.x), draw.x)
    d = assign_within_pairs(
        plan, AssignmentSeed(derive_seed(spec.seed, replication, CH_ASSIGN))
    )
    y = np.where(d == 1, draw.y1, draw.y0)
    return ExperimentData(y=y, d=d, x=draw.x, w=draw.w, plan=plan)


def _fallback_report(
    data: ExperimentData, method: str, alpha: float, delta_null: float
) -> EstimateReport:
    """Unadjusted estimate reported under the failed method's name."""
    wm = fit_unadjusted(data)
    delta = doubly_robust_estimate(data, wm)
    vr = variance_adjusted(data, wm, delta)
    sigma = float(np.sqrt(vr.sigma2_hat))
    n = data.n_pairs
    se = sigma / float(np.sqrt(n))
    lo, hi = confidence_interval(delta, sigma, n, alpha)
    return EstimateReport(
        delta_hat=delta,
        sigma_hat=sigma,
        std_error=se,
        ci_lower=lo,
        ci_upper=hi,
        alpha=alpha,
        reject_h0=not (lo <= delta_null <= hi),
        delta_null=delta_null,
        method=method,
        diagnostics={"n_pairs": float(n), "fallback": 1.0},
    )


def run_replication(
    spec: ModelSpec,
    kinds: list[AdjustmentSpec],
    replication: int = 0,
    alpha: float = 0.05,
    delta_null: float = 0.0,
) -> dict[str, EstimateReport]:
    """One full pipeline pass; deterministic in (seed, replication).

    Estimator singularities do not abort the replication: the affected
    method falls back to the unadjusted estimate with ``fallback`` set in
    its diagnostics.
    """
    data = realize_experiment(spec, replication)
    check = validate_experiment(data)
    if not check.ok:  # pragma: no cover - generation guarantees validity
        raise ContractViolation("; ".join(check.failures))
    reports: dict[str, EstimateReport] = {}
    for kind in kinds:
        try:
            reports[kind.label] = estimate(
                data, kind, alpha=alpha, delta_null=delta_null, validate=False
            )
        except EstimationError:
            reports[kind.label] = _fallback_report(data, kind.label, alpha, delta_null)
    return reports


@dataclass(frozen=True)
class MethodSummary:
    method: str
    rejection_rate: float
    mean_std_error: float
    se_reduction_pct: float
    replications: int
    rejections: int
    failures: int


@dataclass(frozen=True)
class SimulationSummary:
    model_id: int
    n_pairs: int
    delta: float
    replications: int
    methods: tuple[MethodSummary, ...]

    def by_method(self, name: str) -> MethodSummary:
        for m in self.methods:
            if m.method == name:
                return m
        raise KeyError(name)


def _collect_chunk(
    spec: ModelSpec,
    kinds: list[AdjustmentSpec],
    first: int,
    count: int,
    alpha: float,
    delta_null: float,
) -> np.ndarray:
    out = np.empty((count, len(kinds), 3))
    for t in range(count):
        reports = run_replication(spec, kinds, first + t, alpha, delta_null)
        for ki, kind in enumerate(kinds):
            rep = reports[kind.label]
            out[t, ki, 0] = 1.0 if rep.reject_h0 else 0.0
            out[t, ki, 1] = rep.std_error
            out[t, ki, 2] = rep.diagnostics.get("fallback", 0.0)
    return out


def run_monte_carlo(
    spec: ModelSpec,
    kinds: list[AdjustmentSpec],
    replications: int,
    n_jobs: int = 1,
    alpha: float = 0.05,
    delta_null: float = 0.0,
) -> SimulationSummary:
    """Aggregate ``run_replication`` over counter-seeded replications.

    Replications are split into contiguous chunks and may run in worker
    processes; chunks are reassembled in replication order before
    aggregation, so the summary is identical for every ``n_jobs``.
    """
    if replications < 1:
        raise ContractViolation("replications must be >= 1")
    if n_jobs <= 1 or replications < 4:
        stats = _collect_chunk(spec, kinds, 0, replications, alpha, delta_null)
    else:
        _kernels.warm_up()  # compile before forking so workers reuse the JIT
        n_chunks = min(n_jobs * 4, replications)
        bounds = np.linspace(0, replications, n_chunks + 1, dtype=int)
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            futures = [
                pool.submit(
                    _collect_chunk,
                    spec,
                    kinds,
                    int(a),
                    int(b - a),
                    alpha,
                    delta_null,
                )
                for a, b in zip(bounds[:-1], bounds[1:])
                if b > a
            ]
            stats = np.concatenate([f.result() for f in futures], axis=0)

    rejections = stats[:, :, 0].sum(axis=0)
    mean_se = stats[:, :, 1].mean(axis=0)
    failures = stats[:, :, 2].sum(axis=0)

    unadj_se = None
    for ki, kind in enumerate(kinds):
        if kind.label == "unadjusted":
            unadj_se = mean_se[ki]
            break

    methods = []
    for ki, kind in enumerate(kinds):
        if unadj_se is not None and unadj_se > 0:
            reduction = 100.0 * (1.0 - mean_se[ki] / unadj_se)
        else:
            reduction = float("nan")
        methods.append(
            MethodSummary(
                method=kind.label,
                rejection_rate=float(rejections[ki]) / replications,
                mean_std_error=float(mean_se[ki]),
                se_reduction_pct=float(reduction),
                replications=replications,
                rejections=int(rejections[ki]),
                failures=int(failures[ki]),
            )
        )
    return SimulationSummary(
        model_id=spec.model_id,
        n_pairs=spec.n_pairs,
        delta=spec.delta,
        replications=replications,
        methods=tuple(methods),
    )


SUMMARY_FIELDS = (
    "model_id",
    "n",
    "delta",
    "kind",
    "replications",
    "rejection_rate",
    "mean_se",
    "se_reduction_pct",
)


def summary_rows(summary: SimulationSummary) -> list[dict]:
    """Flatten a summary into CSV-ready rows, one per method."""
    rows = []
    for m in summary.methods:
        rows.append(
            {
                "model_id": summary.model_id,
                "n": summary.n_pairs,
                "delta": summary.delta,
                "kind": m.method,
                "replications": m.replications,
                "rejection_rate": m.rejection_rate,
                "mean_se": m.mean_std_error,
                "se_reduction_pct": m.se_reduction_pct,
            }
        )
    return rows

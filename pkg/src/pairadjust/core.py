"""Domain types and the doubly robust estimator combiner.

Every adjustment strategy in this package produces a ``WorkingModel`` (fitted
values for both potential outcomes at every unit); the ATE estimate is then
always computed by the same combiner, which averages the augmented
inverse-propensity moments with propensity fixed at one half.  Equivalently,
the combiner is a difference in treated/control means of the "adjusted"
outcomes ``y - 0.5 * (m1_hat + m0_hat)``; both routes agree to machine
precision and the test suite exploits that identity.

Indices are 0-based internally; user-facing output (CLI, validation
messages) reports 1-based pair numbers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

__all__ = [
    "ContractViolation",
    "EstimationError",
    "SingularDesignError",
    "UnitRecord",
    "PairingPlan",
    "ExperimentData",
    "WorkingModel",
    "EstimateReport",
    "ValidationReport",
    "adjusted_outcomes",
    "doubly_robust_estimate",
    "validate_experiment",
]


class ContractViolation(ValueError):
    """An input violates a documented precondition (shape, finiteness, ...)."""


class EstimationError(RuntimeError):
    """An estimator could not be computed on the given data."""


class SingularDesignError(EstimationError):
    """A regression design was rank deficient beyond tolerance."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class UnitRecord:
    """One experimental unit: outcome, arm, and the two covariate blocks.

    ``x`` holds the covariates used to form pairs; ``w`` holds additional
    covariates available only for adjustment (may be empty).
    """

    unit_id: str | int
    y: float
    d: int
    x: tuple[float, ...]
    w: tuple[float, ...] = ()


@dataclass(frozen=True)
class PairingPlan:
    """Ordered list of index pairs partitioning ``{0, ..., 2n-1}``.

    The order of the list is semantically meaningful: consecutive pairs are
    grouped into "pairs of pairs" by the variance estimator, so callers must
    preserve it end to end.
    """

    pairs: np.ndarray  # (n, 2) integer array

    def __post_init__(self) -> None:
        arr = np.asarray(self.pairs, dtype=np.intp)
        if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 1:
            raise ContractViolation(f"pairs must be (n, 2), got shape {arr.shape}")
        object.__setattr__(self, "pairs", _readonly(arr))

    @property
    def n_pairs(self) -> int:
        return self.pairs.shape[0]

    @property
    def n_units(self) -> int:
        return 2 * self.pairs.shape[0]

    def is_partition(self) -> bool:
        """True when every index in 0..2n-1 appears exactly once."""
        flat = np.sort(self.pairs.ravel())
        return bool(np.array_equal(flat, np.arange(self.n_units)))


@dataclass(frozen=True)
class ExperimentData:
    """Immutable snapshot of a matched-pairs experiment.

    Stored column-wise for vectorized estimation; ``from_units`` /
    ``units`` convert to and from per-unit records.
    """

    y: np.ndarray  # (2n,) outcomes
    d: np.ndarray  # (2n,) arm indicators in {0, 1}
    x: np.ndarray  # (2n, k_x) matching covariates
    w: np.ndarray  # (2n, k_w) adjustment covariates, k_w may be 0
    plan: PairingPlan
    unit_ids: tuple = ()

    def __post_init__(self) -> None:
        y = _readonly(np.asarray(self.y, dtype=float))
        d = _readonly(np.asarray(self.d, dtype=np.intp))
        x = _readonly(np.atleast_2d(np.asarray(self.x, dtype=float)))
        w = np.asarray(self.w, dtype=float)
        if w.size == 0:
            w = w.reshape(y.shape[0], 0)
        w = _readonly(np.atleast_2d(w))
        n_units = self.plan.n_units
        for name, arr in (("y", y), ("d", d)):
            if arr.shape != (n_units,):
                raise ContractViolation(f"{name} must have length {n_units}, got {arr.shape}")
        for name, arr in (("x", x), ("w", w)):
            if arr.shape[0] != n_units:
                raise ContractViolation(f"{name} must have {n_units} rows, got {arr.shape[0]}")
        if x.shape[1] < 1:
            raise ContractViolation("x must have at least one column")
        if self.unit_ids and len(self.unit_ids) != n_units:
            raise ContractViolation("unit_ids length mismatch")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "unit_ids", tuple(self.unit_ids))

    @classmethod
    def from_units(cls, units: list[UnitRecord], plan: PairingPlan) -> "ExperimentData":
        y = np.array([u.y for u in units], dtype=float)
        d = np.array([u.d for u in units], dtype=np.intp)
        x = np.array([u.x for u in units], dtype=float)
        w = np.array([u.w for u in units], dtype=float).reshape(len(units), -1)
        ids = tuple(u.unit_id for u in units)
        return cls(y=y, d=d, x=x, w=w, plan=plan, unit_ids=ids)

    @property
    def units(self) -> list[UnitRecord]:
        ids = self.unit_ids or tuple(range(self.n_units))
        return [
            UnitRecord(
                unit_id=ids[i],
                y=float(self.y[i]),
                d=int(self.d[i]),
                x=tuple(self.x[i]),
                w=tuple(self.w[i]),
            )
            for i in range(self.n_units)
        ]

    @property
    def n_pairs(self) -> int:
        return self.plan.n_pairs

    @property
    def n_units(self) -> int:
        return self.plan.n_units


@dataclass(frozen=True)
class WorkingModel:
    """Fitted values for both potential outcomes at every unit.

    ``label`` records which adjustment produced the fit; ``info`` carries
    numeric provenance (e.g. alternative estimates, fallback flags).
    """

    m1_hat: np.ndarray
    m0_hat: np.ndarray
    label: str
    info: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        m1 = _readonly(np.asarray(self.m1_hat, dtype=float))
        m0 = _readonly(np.asarray(self.m0_hat, dtype=float))
        if m1.shape != m0.shape or m1.ndim != 1:
            raise ContractViolation("m1_hat and m0_hat must be equal-length vectors")
        if not (np.isfinite(m1).all() and np.isfinite(m0).all()):
            raise ContractViolation("working model contains non-finite values")
        object.__setattr__(self, "m1_hat", m1)
        object.__setattr__(self, "m0_hat", m0)


@dataclass(frozen=True)
class EstimateReport:
    """One estimator's result on one dataset."""

    delta_hat: float
    sigma_hat: float
    std_error: float
    ci_lower: float
    ci_upper: float
    alpha: float
    reject_h0: bool
    delta_null: float
    method: str
    diagnostics: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.sigma_hat < 0:
            raise ContractViolation("sigma_hat must be nonnegative")
        if not (0 < self.alpha < 1):
            raise ContractViolation("alpha must lie in (0, 1)")
        if not (self.ci_lower - 1e-12 <= self.delta_hat <= self.ci_upper + 1e-12):
            raise ContractViolation("confidence interval must bracket delta_hat")


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    failures: tuple[str, ...] = ()
    first_bad_pair: int | None = None  # 1-based pair number


def adjusted_outcomes(data: ExperimentData, wm: WorkingModel) -> np.ndarray:
    """Outcomes minus the average of the two fitted working models."""
    if wm.m1_hat.shape[0] != data.n_units:
        raise ContractViolation(
            f"working model length {wm.m1_hat.shape[0]} != unit count {data.n_units}"
        )
    return data.y - 0.5 * (wm.m1_hat + wm.m0_hat)


def doubly_robust_estimate(data: ExperimentData, wm: WorkingModel) -> float:
    """ATE estimate from the augmented moment with propensity one half.

    Algebraically identical to the difference in treated/control means of
    ``adjusted_outcomes(data, wm)``; computed here from the per-arm moments
    so tests can check the two routes against each other.
    """
    if wm.m1_hat.shape[0] != data.n_units:
        raise ContractViolation(
            f"working model length {wm.m1_hat.shape[0]} != unit count {data.n_units}"
        )
    treated = (data.d == 1).astype(float)
    control = 1.0 - treated
    mu1 = np.mean(2.0 * treated * (data.y - wm.m1_hat) + wm.m1_hat)
    mu0 = np.mean(2.0 * control * (data.y - wm.m0_hat) + wm.m0_hat)
    return float(mu1 - mu0)


def validate_experiment(data: ExperimentData) -> ValidationReport:
    """Check all dataset invariants, reporting rather than raising.

    Returns the first offending pair (1-based) when a within-pair invariant
    fails; plan-level failures carry no pair number.
    """
    failures: list[str] = []
    first_bad_pair: int | None = None

    if not data.plan.is_partition():
        counts = np.bincount(data.plan.pairs.ravel(), minlength=data.n_units)
        bad = np.flatnonzero(counts != 1)
        failures.append(f"plan is not a partition: unit indices {bad.tolist()} misused")
    if not np.isin(data.d, (0, 1)).all():
        failures.append("arm indicator takes values outside {0, 1}")
    if not np.isfinite(data.y).all():
        failures.append("outcomes contain non-finite values")
    if not np.isfinite(data.x).all():
        failures.append("matching covariates contain non-finite values")
    if data.w.size and not np.isfinite(data.w).all():
        failures.append("adjustment covariates contain non-finite values")

    if not failures:
        pair_d = data.d[data.plan.pairs]
        bad_pairs = np.flatnonzero(pair_d.sum(axis=1) != 1)
        if bad_pairs.size:
            first_bad_pair = int(bad_pairs[0]) + 1
            failures.append(
                f"pair {first_bad_pair} does not have exactly one treated unit"
            )

    return ValidationReport(
        ok=not failures, failures=tuple(failures), first_bad_pair=first_bad_pair
    )

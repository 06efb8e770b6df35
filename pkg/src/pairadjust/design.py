"""Pair formation, pair re-ordering, within-pair randomization, diagnostics.

Randomness goes through counter-based Philox streams keyed on a user seed
plus an integer path (replication index, channel, ...).  Streams are
stateless with respect to each other, so parallel replications never share
generator state and results do not depend on scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.spatial.distance import pdist

from .core import ContractViolation, PairingPlan
from ._kernels import chain_order_kernel, greedy_scan_kernel

__all__ = [
    "CH_UNITS",
    "CH_ASSIGN",
    "stream",
    "derive_seed",
    "AssignmentSeed",
    "MatchDiagnostics",
    "match_pairs_sorted",
    "match_pairs_greedy",
    "reorder_pairs",
    "assign_within_pairs",
    "closeness_diagnostics",
]

# Stream channels.  Keep values stable: they are part of the reproducibility
# contract for simulation output.
CH_UNITS = 0
CH_ASSIGN = 1


def stream(seed: int, *path: int) -> np.random.Generator:
    """Counter-based generator for (seed, path); identical in any process."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *path: int) -> int:
    """Collapse (seed, path) into a single 64-bit sub-seed."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class AssignmentSeed:
    seed: int


@dataclass(frozen=True)
class MatchDiagnostics:
    """Empirical closeness sums for a realized pairing.

    ``mean_within_pair_dist_r1`` and ``..._r2`` average the Euclidean
    within-pair distances (to the first and second power) over pairs;
    ``cross_pair_dist_r2`` averages squared distances between members of
    consecutive pairs (all four member combinations, summed over the
    floor(n/2) pair-of-pair blocks and divided by n).  Small values
    certify that the pairing and its ordering are usable for the
    matched-pairs variance estimator.
    """

    mean_within_pair_dist_r1: float
    mean_within_pair_dist_r2: float
    cross_pair_dist_r2: float


def _as_matrix(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ContractViolation(f"covariates must be a vector or matrix, got ndim={x.ndim}")
    return x


def match_pairs_sorted(x: np.ndarray) -> PairingPlan:
    """Pair consecutive units after a stable ascending sort of scalar x.

    The resulting pair list is ordered by ascending pair minimum, so
    consecutive pairs are automatically close and no re-ordering pass is
    needed before variance estimation.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ContractViolation("match_pairs_sorted expects a scalar covariate vector")
    if x.shape[0] % 2 != 0 or x.shape[0] < 2:
        raise ContractViolation(f"unit count must be even and >= 2, got {x.shape[0]}")
    if not np.isfinite(x).all():
        raise ContractViolation("covariates contain non-finite values")
    order = np.argsort(x, kind="stable")
    return PairingPlan(order.reshape(-1, 2))


@lru_cache(maxsize=8)
def _condensed_indices(m: int) -> tuple[np.ndarray, np.ndarray]:
    """Unit indices (i, j) for the condensed pairwise-distance layout."""
    ii, jj = np.triu_indices(m, k=1)
    ii = np.ascontiguousarray(ii, dtype=np.int64)
    jj = np.ascontiguousarray(jj, dtype=np.int64)
    ii.setflags(write=False)
    jj.setflags(write=False)
    return ii, jj


def match_pairs_greedy(x: np.ndarray) -> PairingPlan:
    """Greedy nearest-neighbor perfect matching on standardized Euclidean distance.

    Repeatedly links the globally closest unmatched pair of units; exact
    distance ties break toward the lexicographically smallest index pair.
    Columns are scaled to unit variance before distances are computed, so
    the matching is invariant to per-column units of measurement.
    """
    x = _as_matrix(x)
    m = x.shape[0]
    if m % 2 != 0 or m < 2:
        raise ContractViolation(f"unit count must be even and >= 2, got {m}")
    if not np.isfinite(x).all():
        raise ContractViolation("covariates contain non-finite values")
    sd = x.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    xs = (x - x.mean(axis=0)) / sd
    dist = pdist(xs, "sqeuclidean")  # monotone in Euclidean distance
    order = np.argsort(dist)
    ranked = dist[order]
    if np.any(ranked[1:] == ranked[:-1]):
        # exact ties exist: redo stably so ties rank by candidate position,
        # which is lexicographic in (i, j)
        order = np.argsort(dist, kind="stable")
    ii, jj = _condensed_indices(m)
    pairs = greedy_scan_kernel(order, ii, jj, m)
    return PairingPlan(pairs)


def reorder_pairs(plan: PairingPlan, x: np.ndarray) -> PairingPlan:
    """Re-sequence pairs along a greedy nearest-centroid chain.

    Pair membership is untouched; only the order of the pair list changes.
    The chain starts at the lexicographically smallest pair centroid and
    repeatedly appends the nearest remaining centroid (ties to the lowest
    pair index), which for scalar x reduces to sorting pairs by centroid.
    """
    x = _as_matrix(x)
    pairs = plan.pairs
    centroids = 0.5 * (x[pairs[:, 0]] + x[pairs[:, 1]])
    if pairs.shape[0] == 1:
        return PairingPlan(pairs.copy())
    start = int(np.lexsort(centroids.T[::-1])[0])
    order = chain_order_kernel(np.ascontiguousarray(centroids), start)
    return PairingPlan(pairs[order])


def assign_within_pairs(plan: PairingPlan, seed: AssignmentSeed) -> np.ndarray:
    """Flip one fair coin per pair; returns the (2n,) arm indicator vector.

    Coin i is draw i of the Philox stream keyed on (seed, assignment
    channel), so the treated member of pair i depends only on the seed and
    the pair's position, never on other pairs or processes.
    """
    g = stream(seed.seed, CH_ASSIGN)
    first_treated = g.integers(0, 2, size=plan.n_pairs)
    d = np.empty(plan.n_units, dtype=np.intp)
    d[plan.pairs[:, 0]] = first_treated
    d[plan.pairs[:, 1]] = 1 - first_treated
    return d


def closeness_diagnostics(plan: PairingPlan, x: np.ndarray) -> MatchDiagnostics:
    """Compute the within-pair (r=1, r=2) and cross-pair (r=2) closeness sums."""
    x = _as_matrix(x)
    pairs = plan.pairs
    n = plan.n_pairs
    diffs = x[pairs[:, 0]] - x[pairs[:, 1]]
    dist = np.sqrt((diffs**2).sum(axis=1))
    r1 = float(dist.mean())
    r2 = float((dist**2).mean())

    h = n // 2
    if h == 0:
        cross = 0.0
    else:
        a1 = pairs[0 : 2 * h : 2, 0]
        b1 = pairs[0 : 2 * h : 2, 1]
        a2 = pairs[1 : 2 * h : 2, 0]
        b2 = pairs[1 : 2 * h : 2, 1]
        total = 0.0
        for u, v in ((b1, b2), (b1, a2), (a1, b2), (a1, a2)):
            total += ((x[u] - x[v]) ** 2).sum() / n
        cross = float(total / 4.0)
    return MatchDiagnostics(
        mean_within_pair_dist_r1=r1,
        mean_within_pair_dist_r2=r2,
        cross_pair_dist_r2=cross,
    )

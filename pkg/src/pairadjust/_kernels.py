"""Compiled inner loops: greedy matching, chain ordering, coordinate descent.

Kept free of package types so the JIT cache stays valid across refactors.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def greedy_scan_kernel(
    order: np.ndarray, ii: np.ndarray, jj: np.ndarray, m: int
) -> np.ndarray:
    """Walk candidate pairs in rank order, linking still-unmatched units.

    ``order`` ranks the condensed candidate list; ``ii``/``jj`` map a
    candidate to its unit indices.  Returns (m/2, 2) pairs in link order.
    """
    used = np.zeros(m, dtype=np.bool_)
    pairs = np.empty((m // 2, 2), dtype=np.int64)
    cnt = 0
    for t in range(order.shape[0]):
        e = order[t]
        i = ii[e]
        j = jj[e]
        if not used[i] and not used[j]:
            pairs[cnt, 0] = i
            pairs[cnt, 1] = j
            used[i] = True
            used[j] = True
            cnt += 1
            if cnt == m // 2:
                break
    return pairs


@njit(cache=True)
def chain_order_kernel(centroids: np.ndarray, start: int) -> np.ndarray:
    """Greedy nearest-neighbor chain over rows, starting at ``start``.

    Ties go to the lowest remaining row index.  Returns the visit order.
    """
    n = centroids.shape[0]
    k = centroids.shape[1]
    order = np.empty(n, dtype=np.int64)
    used = np.zeros(n, dtype=np.bool_)
    order[0] = start
    used[start] = True
    cur = start
    for step in range(1, n):
        best = -1
        best_d = np.inf
        for j in range(n):
            if used[j]:
                continue
            s = 0.0
            for c in range(k):
                diff = centroids[cur, c] - centroids[j, c]
                s += diff * diff
            if s < best_d:
                best_d = s
                best = j
        order[step] = best
        used[best] = True
        cur = best
    return order


@njit(cache=True)
def _kkt_violation(
    gram: np.ndarray,
    cvec: np.ndarray,
    beta: np.ndarray,
    loadings: np.ndarray,
    lam: float,
) -> float:
    """Max subgradient-condition excess, with the residual correlation
    recomputed from scratch to avoid incremental drift."""
    p = beta.shape[0]
    worst = 0.0
    for l in range(p):
        r = cvec[l]
        for m in range(p):
            r -= gram[l, m] * beta[m]
        g = 2.0 * r
        bound = lam * loadings[l]
        if beta[l] > 0.0:
            v = abs(g - bound)
        elif beta[l] < 0.0:
            v = abs(g + bound)
        else:
            v = abs(g) - bound
            if v < 0.0:
                v = 0.0
        if v > worst:
            worst = v
    return worst


@njit(cache=True)
def cd_weighted_lasso(
    gram: np.ndarray,
    cvec: np.ndarray,
    loadings: np.ndarray,
    lam: float,
    beta_init: np.ndarray,
    tol: float,
    max_iter: int,
    y_sq_mean: float,
):
    """Cyclic coordinate descent for the weighted-L1 problem in Gram form.

    Minimizes ``mean((y_c - X_c b)^2) + lam * sum(loadings * |b|)`` given
    ``gram = X_c'X_c/n`` and ``cvec = X_c'y_c/n`` for centered data.
    Converged means both the max coefficient change fell below ``tol`` and
    the subgradient conditions hold within ``tol``.

    Returns (beta, n_sweeps, kkt, converged, objective_path).
    """
    p = gram.shape[0]
    beta = beta_init.copy()
    q = gram @ beta  # q[l] tracks (Gram @ beta)[l]
    obj_path = np.empty(max_iter, dtype=np.float64)
    n_sweeps = 0
    converged = False
    kkt = np.inf
    for sweep in range(max_iter):
        dmax = 0.0
        for l in range(p):
            gll = gram[l, l]
            if gll <= 1e-300:
                continue
            z = cvec[l] - q[l] + gll * beta[l]
            thr = 0.5 * lam * loadings[l]
            if z > thr:
                bn = (z - thr) / gll
            elif z < -thr:
                bn = (z + thr) / gll
            else:
                bn = 0.0
            diff = bn - beta[l]
            if diff != 0.0:
                for m in range(p):
                    q[m] += gram[m, l] * diff
                beta[l] = bn
                ad = abs(diff)
                if ad > dmax:
                    dmax = ad
        n_sweeps = sweep + 1
        pen = 0.0
        cb = 0.0
        bq = 0.0
        for l in range(p):
            pen += loadings[l] * abs(beta[l])
            cb += cvec[l] * beta[l]
            bq += beta[l] * q[l]
        obj_path[sweep] = y_sq_mean - 2.0 * cb + bq + lam * pen
        if dmax < tol:
            kkt = _kkt_violation(gram, cvec, beta, loadings, lam)
            if kkt <= tol:
                converged = True
                break
    if not converged:
        kkt = _kkt_violation(gram, cvec, beta, loadings, lam)
    return beta, n_sweeps, kkt, converged, obj_path[:n_sweeps].copy()


def warm_up() -> None:
    """Trigger JIT compilation of all kernels on tiny inputs."""
    xs = np.array([[0.0], [1.0], [0.1], [1.1]])
    greedy_scan_kernel(
        np.arange(6), np.array([0, 0, 0, 1, 1, 2]), np.array([1, 2, 3, 2, 3, 3]), 4
    )
    chain_order_kernel(xs, 0)
    g = np.eye(2)
    cd_weighted_lasso(
        g,
        np.array([0.5, -0.25]),
        np.array([1.0, 1.0]),
        0.1,
        np.zeros(2),
        1e-8,
        50,
        1.0,
    )

"""Shared fixtures: random valid experiments and a Monte Carlo result cache."""

from __future__ import annotations

import os

import numpy as np
import pytest
from hypothesis import settings

from pairadjust.core import ExperimentData, PairingPlan
from pairadjust.simulation import ModelSpec, default_methods, method_spec, run_monte_carlo

# numba's first-call compilation makes per-example deadlines meaningless
settings.register_profile("pairadjust", deadline=None, max_examples=50)
settings.load_profile("pairadjust")

N_JOBS = int(os.environ.get("PAIRADJUST_TEST_JOBS", str(min(2, os.cpu_count() or 1))))


def random_experiment(
    rng: np.random.Generator,
    n_pairs: int,
    k_x: int = 1,
    k_w: int = 1,
    signal: float = 1.0,
) -> ExperimentData:
    """A valid matched-pairs dataset with arbitrary (non-matched) pairing."""
    n_units = 2 * n_pairs
    x = rng.standard_normal((n_units, k_x))
    w = rng.standard_normal((n_units, k_w))
    y = (
        rng.standard_normal(n_units)
        + signal * (w @ rng.standard_normal(k_w) if k_w else 0.0)
        + signal * x[:, 0]
    )
    plan = PairingPlan(rng.permutation(n_units).reshape(n_pairs, 2))
    d = np.zeros(n_units, dtype=int)
    first = rng.integers(0, 2, n_pairs)
    d[plan.pairs[np.arange(n_pairs), first]] = 1
    return ExperimentData(y=y, d=d, x=x, w=w, plan=plan)


class _MonteCarloCache:
    """Memoizes run_monte_carlo results so test modules share heavy runs."""

    def __init__(self) -> None:
        self._cache: dict = {}

    def __call__(
        self,
        model: int,
        n: int,
        delta: float,
        methods: tuple[str, ...] | None = None,
        reps: int = 10_000,
        seed: int = 20260809,
    ):
        names = tuple(methods) if methods is not None else default_methods(model)
        key = (model, n, delta, names, reps, seed)
        if key not in self._cache:
            spec = ModelSpec(model_id=model, n_pairs=n, delta=delta, seed=seed)
            kinds = [method_spec(m, model, n) for m in names]
            self._cache[key] = run_monte_carlo(spec, kinds, reps, n_jobs=N_JOBS)
        return self._cache[key]


_MC = _MonteCarloCache()


@pytest.fixture(scope="session")
def mc():
    return _MC

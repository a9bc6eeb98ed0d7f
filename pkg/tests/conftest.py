"""Shared fixtures and independent oracles used across the test suite."""

import numpy as np
import pytest

import linreco as lr


def lagrangian_reconcile(gamma: np.ndarray, w: np.ndarray, base: np.ndarray):
    """Constrained weighted-least-squares oracle, independent of the package.

    Minimizes (y - base)' W^-1 (y - base) subject to gamma @ y = 0. The
    first-order conditions give y = base - W gamma' (gamma W gamma')^+ gamma
    base; the pseudo-inverse handles redundant (rank-deficient) constraint
    sets. Everything is in the original variable order.
    """
    gw = gamma @ w
    return base - gw.T @ (np.linalg.pinv(gw @ gamma.T) @ (gamma @ base))


def random_system(rng, n_max=50, p_max=30, force_deficient=False):
    """A random homogeneous constraint system, often rank-deficient."""
    n = int(rng.integers(3, n_max + 1))
    p = int(rng.integers(1, min(p_max, n - 1) + 1))
    gamma = rng.standard_normal((p, n))
    gamma[rng.random(gamma.shape) < 0.4] = 0.0
    # keep every row nonzero
    for i in range(p):
        if not np.any(gamma[i]):
            gamma[i, rng.integers(0, n)] = 1.0
    if (force_deficient or rng.random() < 0.5) and p >= 2:
        k = int(rng.integers(1, max(2, p // 2)))
        for _ in range(k):
            i, j = rng.integers(0, p, size=2)
            gamma[i] = gamma[j] * float(rng.uniform(-2, 2))
    names = tuple(f"v{i}" for i in range(n))
    return lr.ConstraintSystem(gamma, names)


def random_spd(rng, n, scale=1.0):
    b = rng.standard_normal((n, n))
    return scale * (b @ b.T + n * np.eye(n))


@pytest.fixture
def rng():
    return np.random.default_rng(20260826)


@pytest.fixture
def golden_small():
    """5-variable, 3-constraint system with a known reduction."""
    gamma = np.array(
        [
            [2.0, -4.0, -8.0, 6.0, 3.0],
            [0.0, 1.0, 3.0, 2.0, 3.0],
            [3.0, -2.0, 0.0, 0.0, 8.0],
        ]
    )
    return lr.ConstraintSystem(gamma, ("x1", "x2", "x3", "x4", "x5"))


@pytest.fixture
def gdp7():
    """Seven series: one total measured from two parallel two-bottom sides."""
    gamma = np.array(
        [
            [1.0, -1.0, -1.0, 0.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, -1.0, -1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0, 0.0, -1.0, -1.0],
        ]
    )
    return lr.ConstraintSystem(gamma, ("X", "A", "B", "A1", "A2", "B1", "B2"))


def reconcile_original_order(plan, w_plan, base):
    """Reconcile an original-order base matrix, return original order."""
    state = lr.fit(plan, lr.WMatrix(w_plan, kind="custom"))
    y = lr.reconcile(state, lr.ForecastBatch(plan.to_plan_order(base)))
    return plan.from_plan_order(y)

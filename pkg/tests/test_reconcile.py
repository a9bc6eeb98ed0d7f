import numpy as np
import pytest

import linreco as lr
from linreco.errors import NumericalError

from conftest import (
    lagrangian_reconcile,
    random_spd,
    random_system,
    reconcile_original_order,
)


def test_single_constraint_hand_value():
    # one total, two bottoms, identity weights: the surplus splits in thirds
    cs = lr.ConstraintSystem(np.array([[1.0, -1.0, -1.0]]), ("t", "a", "b"))
    plan = lr.reduce_rref(cs)
    state = lr.fit(plan, lr.w_ols(3))
    base = plan.to_plan_order(np.array([10.0, 4.0, 5.0]))
    y = plan.from_plan_order(lr.reconcile(state, lr.ForecastBatch(base))).ravel()
    np.testing.assert_allclose(y, [29 / 3, 13 / 3, 16 / 3], atol=1e-12)


def test_matches_lagrangian_oracle(gdp7, rng):
    plan = lr.reduce_rref(gdp7)
    w_orig = random_spd(rng, 7)
    base = rng.standard_normal((7, 4))
    oracle = lagrangian_reconcile(gdp7.gamma, w_orig, base)
    ours = reconcile_original_order(plan, plan.permute_cov(w_orig), base)
    np.testing.assert_allclose(ours, oracle, atol=1e-9)


def test_structural_equals_projection(gdp7, rng):
    plan = lr.reduce_rref(gdp7)
    state = lr.fit(plan, lr.WMatrix(plan.permute_cov(random_spd(rng, 7)), "custom"))
    base = lr.ForecastBatch(rng.standard_normal((7, 3)))
    y_s = lr.reconcile_structural(state, base)
    y_p = lr.reconcile_point(state, base)
    assert np.max(np.abs(y_s - y_p)) <= 1e-8 * (1 + np.max(np.abs(base.base)))


def test_route_choice_is_cost_based(gdp7, rng):
    plan = lr.reduce_rref(gdp7)  # n_c=3 < n_u=4
    state = lr.fit(plan, lr.w_ols(7))
    assert state.use_projection
    # flip the majority: 4 constraints on 5 variables
    gamma = np.vstack([np.eye(4), -np.ones((1, 4))]).T
    cs = lr.ConstraintSystem(gamma, tuple("abcde"))
    st2 = lr.fit(lr.reduce_rref(cs), lr.w_ols(5))
    assert not st2.use_projection


def test_coherence_idempotence_linearity():
    for seed in range(10):
        r = np.random.default_rng(seed)
        cs = random_system(r, n_max=20, p_max=10)
        plan = lr.reduce_qr(cs)
        w = lr.WMatrix(random_spd(r, cs.n), "custom")
        state = lr.fit(plan, w)
        b1 = lr.ForecastBatch(r.standard_normal((cs.n, 2)))
        b2 = lr.ForecastBatch(r.standard_normal((cs.n, 2)))
        y1 = lr.reconcile(state, b1)
        scale = 1 + np.max(np.abs(y1))
        # coherence
        assert np.max(np.abs(plan.zero_constraints @ y1)) <= 1e-8 * scale
        # idempotence
        np.testing.assert_allclose(
            lr.reconcile(state, lr.ForecastBatch(y1)), y1, atol=1e-8 * scale
        )
        # linearity
        y2 = lr.reconcile(state, b2)
        both = lr.reconcile(state, lr.ForecastBatch(2.0 * b1.base - b2.base))
        np.testing.assert_allclose(both, 2.0 * y1 - y2, atol=1e-8 * scale)


def test_rref_and_qr_plans_agree_after_reconciliation():
    for seed in range(20):
        r = np.random.default_rng(100 + seed)
        cs = random_system(r, n_max=15, p_max=8)
        w_orig = random_spd(r, cs.n)
        base = r.standard_normal((cs.n, 1))
        results = []
        for reducer in (lr.reduce_rref, lr.reduce_qr):
            plan = reducer(cs)
            results.append(
                reconcile_original_order(plan, plan.permute_cov(w_orig), base)
            )
        np.testing.assert_allclose(results[0], results[1], atol=1e-8)
        oracle = lagrangian_reconcile(cs.gamma, w_orig, base)
        np.testing.assert_allclose(results[0], oracle, atol=1e-7)


def test_fit_rejects_indefinite_w(gdp7):
    plan = lr.reduce_rref(gdp7)
    w = np.eye(7)
    w[0, 0] = -1.0
    with pytest.raises(NumericalError):
        lr.fit(plan, lr.WMatrix(w, "custom"))


def test_batch_shape_checks(gdp7, rng):
    plan = lr.reduce_rref(gdp7)
    state = lr.fit(plan, lr.w_ols(7))
    with pytest.raises(lr.ValidationError):
        lr.reconcile(state, lr.ForecastBatch(rng.standard_normal((5, 2))))
    with pytest.raises(lr.ValidationError):
        lr.ForecastBatch(np.array([[np.nan, 1.0]]))


def test_one_dim_base_promoted(gdp7):
    plan = lr.reduce_rref(gdp7)
    state = lr.fit(plan, lr.w_ols(7))
    y = lr.reconcile(state, lr.ForecastBatch(np.ones(7)))
    assert y.shape == (7, 1)


def test_return_free_components(gdp7, rng):
    plan = lr.reduce_rref(gdp7)
    state = lr.fit(plan, lr.w_ols(7))
    batch = lr.ForecastBatch(rng.standard_normal((7, 2)))
    y, u = lr.reconcile_structural(state, batch, return_free=True)
    np.testing.assert_allclose(plan.structural @ u, y, atol=1e-12)
    assert u.shape == (4, 2)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import linreco as lr
from linreco.covariance import _shrink_intensity, estimate
from linreco.errors import NumericalError


def test_ols_is_identity():
    w = lr.w_ols(4)
    np.testing.assert_array_equal(w.w, np.eye(4))
    assert w.kind == "ols"


def test_sam_is_uncentered_second_moment(rng):
    e = rng.standard_normal((3, 40))
    w = lr.w_sam(lr.ResidualMatrix(e))
    np.testing.assert_allclose(w.w, (e @ e.T) / 40)
    assert not w.singular


def test_sam_flags_singular_when_samples_scarce(rng):
    e = rng.standard_normal((10, 5))
    w = lr.w_sam(lr.ResidualMatrix(e))
    assert w.singular


def test_wls_is_sam_diagonal(rng):
    e = rng.standard_normal((4, 30))
    sam = lr.w_sam(lr.ResidualMatrix(e))
    wls = lr.w_wls(lr.ResidualMatrix(e))
    np.testing.assert_array_equal(wls.w, np.diag(np.diag(sam.w)))


def test_wls_rejects_zero_variance_series():
    e = np.vstack([np.ones(10), np.zeros(10)])
    with pytest.raises(NumericalError):
        lr.w_wls(lr.ResidualMatrix(e))


def test_shr_is_convex_combination(rng):
    e = rng.standard_normal((4, 60))
    res = lr.ResidualMatrix(e)
    shr = lr.w_shr(res)
    sam, wls = lr.w_sam(res).w, lr.w_wls(res).w
    lam = shr.lam
    assert 0.0 <= lam <= 1.0
    np.testing.assert_allclose(np.diag(shr.w), np.diag(sam))
    off = ~np.eye(4, dtype=bool)
    np.testing.assert_allclose(shr.w[off], ((1 - lam) * sam)[off], atol=1e-12)
    del wls


def test_shr_endpoints_bitwise(rng):
    e = rng.standard_normal((5, 50))
    res = lr.ResidualMatrix(e)
    at0 = lr.w_shr(res, lam=0.0)
    at1 = lr.w_shr(res, lam=1.0)
    assert np.array_equal(at0.w, lr.w_sam(res).w)
    assert np.array_equal(at1.w, lr.w_wls(res).w)


def test_shrink_intensity_extremes(rng):
    # independent noise: heavy shrinkage toward the diagonal
    e = rng.standard_normal((4, 200))
    lam_noise = _shrink_intensity(lr.ResidualMatrix(e))
    # perfectly correlated rows: the off-diagonals are real, keep them
    base = rng.standard_normal(200)
    e2 = np.vstack([base, base * 2.0, base * -1.5]) + 1e-6 * rng.standard_normal(
        (3, 200)
    )
    lam_corr = _shrink_intensity(lr.ResidualMatrix(e2))
    assert lam_corr < 0.05 < lam_noise


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_shr_stays_positive_definite(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 8))
    e = rng.standard_normal((n, n * 10))
    w = lr.w_shr(lr.ResidualMatrix(e))
    assert np.linalg.eigvalsh(w.w)[0] > 0


def test_estimate_dispatch(rng):
    e = rng.standard_normal((3, 30))
    res = lr.ResidualMatrix(e)
    assert estimate("ols", None, 3).kind == "ols"
    assert estimate("wls", res, 3).kind == "wls"
    assert estimate("sam", res, 3).kind == "sam"
    assert estimate("shr", res, 3).kind == "shr"
    with pytest.raises(lr.ValidationError):
        estimate("wls", None, 3)
    with pytest.raises(lr.ValidationError):
        estimate("mint", res, 3)

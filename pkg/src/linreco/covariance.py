"""Estimators for the weight matrix W from in-sample one-step-ahead errors.

The menu: identity (ols), per-series variance (wls), full sample covariance
(sam, divisor T), and shrinkage of the off-diagonal toward zero (shr) with a
data-driven intensity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError

__all__ = ["ResidualMatrix", "WMatrix", "w_ols", "w_sam", "w_wls", "w_shr"]


@dataclass(frozen=True)
class ResidualMatrix:
    """One-step-ahead in-sample forecast errors, n series by T steps."""

    errors: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.errors, dtype=float)
        if e.ndim != 2:
            raise ValidationError("residuals must be an (n, T) matrix")
        if not np.all(np.isfinite(e)):
            raise ValidationError("residuals contain non-finite entries")
        object.__setattr__(self, "errors", e)

    @property
    def n(self) -> int:
        return self.errors.shape[0]

    @property
    def t(self) -> int:
        return self.errors.shape[1]


@dataclass(frozen=True)
class WMatrix:
    """Symmetric weight matrix with its estimator tag."""

    w: np.ndarray
    kind: str
    lam: float | None = None
    singular: bool = False

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValidationError("W must be square")
        if np.max(np.abs(w - w.T)) > 1e-12 * max(1.0, np.max(np.abs(w))):
            raise ValidationError("W must be symmetric")
        object.__setattr__(self, "w", (w + w.T) / 2.0)

    @property
    def n(self) -> int:
        return self.w.shape[0]


def w_ols(n: int) -> WMatrix:
    """Identity weights."""
    if n < 1:
        raise ValidationError("n must be at least 1")
    return WMatrix(np.eye(n), kind="ols")


def w_sam(res: ResidualMatrix) -> WMatrix:
    """Sample covariance with divisor T (not T-1, no demeaning)."""
    if res.t < 2:
        raise ValidationError("sample covariance needs T >= 2")
    e = res.errors
    w = (e @ e.T) / res.t
    w = (w + w.T) / 2.0
    singular = res.t < res.n or bool(np.any(np.diag(w) == 0.0))
    return WMatrix(w, kind="sam", singular=singular)


def w_wls(res: ResidualMatrix) -> WMatrix:
    """Diagonal of the sample covariance."""
    if res.t < 1:
        raise ValidationError("per-series variance needs T >= 1")
    e = res.errors
    # same arithmetic path as w_sam's diagonal, so shr at lambda = 1 is bitwise wls
    var = np.diag(e @ e.T) / res.t
    zero = np.flatnonzero(var == 0.0)
    if zero.size:
        raise NumericalError(
            f"zero residual variance for series index {zero.tolist()}; "
            "W would be singular"
        )
    return WMatrix(np.diag(var), kind="wls")


def _shrink_intensity(res: ResidualMatrix) -> float:
    """Intensity shrinking off-diagonal correlations toward zero.

    lambda = sum var(r_ij) / sum r_ij^2 over i != j, with the variance of each
    sample correlation estimated from the standardized residual products
    (T-1 divisors internally). Clamped to [0, 1]; scale-invariant.
    """
    x = res.errors.T  # (T, n)
    t = x.shape[0]
    xc = x - x.mean(axis=0)
    sd = np.sqrt(np.sum(xc**2, axis=0) / (t - 1))
    if np.any(sd == 0.0):
        raise NumericalError("zero residual variance; shrinkage undefined")
    xs = xc / sd
    r = (xs.T @ xs) / (t - 1)
    # var(r_ij) from the T products w_t = xs_ti * xs_tj
    w_bar = r * (t - 1) / t
    var_r = np.zeros_like(r)
    for k in range(t):
        var_r += (np.outer(xs[k], xs[k]) - w_bar) ** 2
    var_r *= t / ((t - 1) ** 3)
    off = ~np.eye(res.n, dtype=bool)
    denom = np.sum(r[off] ** 2)
    if denom == 0.0:
        return 1.0
    return float(np.clip(np.sum(var_r[off]) / denom, 0.0, 1.0))


def w_shr(res: ResidualMatrix, lam: float | None = None) -> WMatrix:
    """Convex combination of the wls and sam estimators.

    ``lam`` overrides the estimated intensity (must lie in [0, 1]); the
    diagonal always equals the sam diagonal.
    """
    if res.t < 3:
        raise ValidationError("shrinkage needs T >= 3")
    sam = w_sam(res).w
    if np.any(np.diag(sam) == 0.0):
        raise NumericalError("zero residual variance; W would be singular")
    if lam is None:
        lam = _shrink_intensity(res)
    elif not 0.0 <= lam <= 1.0:
        raise ValidationError("shrinkage intensity must lie in [0, 1]")
    if lam == 0.0:
        w = sam
    elif lam == 1.0:
        w = np.diag(np.diag(sam))
    else:
        w = (1.0 - lam) * sam
        np.fill_diagonal(w, np.diag(sam))
    return WMatrix(w, kind="shr", lam=float(lam))


def estimate(kind: str, res: ResidualMatrix | None, n: int,
             lam: float | None = None) -> WMatrix:
    """Dispatch by estimator name (CLI helper)."""
    if kind == "ols":
        return w_ols(n)
    if res is None:
        raise ValidationError(f"estimator {kind!r} needs residuals")
    if kind == "wls":
        return w_wls(res)
    if kind == "sam":
        return w_sam(res)
    if kind == "shr":
        return w_shr(res, lam=lam)
    raise ValidationError(f"unknown estimator {kind!r}")

"""Coherent point forecasts from incoherent base forecasts.

Two equivalent routes: the structural route S @ G (G maps base forecasts to
free-variable forecasts) and the projection route M (an oblique projector
onto the coherent subspace shaped by W). Both are derived from factorization
solves; no explicit matrix inverse is ever formed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .constraints import ReconciliationPlan
from .covariance import WMatrix
from .errors import NumericalError, ValidationError

__all__ = ["ForecastBatch", "ReconcilerState", "fit", "reconcile_point",
           "reconcile_structural"]


@dataclass(frozen=True)
class ForecastBatch:
    """Base forecasts, n series (plan order) by H horizons."""

    base: np.ndarray
    horizon_labels: tuple | None = None

    def __post_init__(self):
        base = np.asarray(self.base, dtype=float)
        if base.ndim == 1:
            base = base[:, None]
        if base.ndim != 2:
            raise ValidationError("base forecasts must be an (n, H) matrix")
        if not np.all(np.isfinite(base)):
            raise ValidationError("base forecasts contain non-finite entries")
        labels = self.horizon_labels
        if labels is not None and len(labels) != base.shape[1]:
            raise ValidationError("horizon label count does not match H")
        object.__setattr__(self, "base", base)

    @property
    def n(self) -> int:
        return self.base.shape[0]

    @property
    def horizons(self) -> int:
        return self.base.shape[1]


@dataclass(frozen=True)
class ReconcilerState:
    """Fitted reconciler: plan, W, and the derived G and M matrices."""

    plan: ReconciliationPlan
    w: WMatrix
    g: np.ndarray
    m: np.ndarray
    use_projection: bool = field(default=True)

    @property
    def n(self) -> int:
        return self.plan.n


def _spd_solve(mat: np.ndarray, rhs: np.ndarray, what: str) -> np.ndarray:
    try:
        c, low = scipy.linalg.cho_factor(mat)
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError(f"{what} is not positive definite: {exc}") from exc
    return scipy.linalg.cho_solve((c, low), rhs)


def fit(plan: ReconciliationPlan, w: WMatrix) -> ReconcilerState:
    """Derive G = (S'W^-1 S)^-1 S'W^-1 and M = I - WC'(CWC')^-1 C.

    W must be positive definite (checked by Cholesky). The default execution
    route is the cheaper of the two: projection when n_c < n_u, structural
    otherwise; both matrices are always available.
    """
    if w.n != plan.n:
        raise ValidationError(f"W is {w.n}x{w.n} but the plan has n={plan.n}")
    s, c = plan.structural, plan.zero_constraints
    winv_s = _spd_solve(w.w, s, "W")
    g = _spd_solve(s.T @ winv_s, winv_s.T, "S'W^-1S")
    wc = w.w @ c.T
    m = np.eye(plan.n) - wc @ _spd_solve(c @ wc, c, "CWC'")
    return ReconcilerState(plan=plan, w=w, g=g, m=m,
                           use_projection=plan.n_c < plan.n_u)


def _check_batch(state: ReconcilerState, batch: ForecastBatch) -> np.ndarray:
    if batch.n != state.n:
        raise ValidationError(
            f"batch has {batch.n} series, reconciler expects {state.n}"
        )
    return batch.base


def reconcile_point(state: ReconcilerState, batch: ForecastBatch) -> np.ndarray:
    """Projection route: M @ base, one column per horizon."""
    return state.m @ _check_batch(state, batch)


def reconcile_structural(
    state: ReconcilerState, batch: ForecastBatch, return_free: bool = False
):
    """Structural route: S @ (G @ base); optionally also the free forecasts."""
    u = state.g @ _check_batch(state, batch)
    y = state.plan.structural @ u
    if return_free:
        return y, u
    return y


def reconcile(state: ReconcilerState, batch: ForecastBatch) -> np.ndarray:
    """Reconcile via the route selected at fit time."""
    if state.use_projection:
        return reconcile_point(state, batch)
    return reconcile_structural(state, batch)

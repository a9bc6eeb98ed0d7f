"""Probabilistic reconciliation: Gaussian analytic and joint block bootstrap.

The Gaussian route transforms a multivariate normal base forecast through the
reconciliation mapping. The bootstrap route simulates sample paths from simple
univariate base models by jointly resampling blocks of in-sample errors
(preserving cross-sectional dependence), then reconciles every member.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .covariance import ResidualMatrix
from .errors import NumericalError, ValidationError
from .reconcile import ForecastBatch, ReconcilerState, reconcile

__all__ = [
    "GaussianForecast",
    "SampleEnsemble",
    "BaseForecasterModel",
    "gaussian_reconcile",
    "fit_base",
    "bootstrap_sample",
    "reconcile_ensemble",
]


@dataclass(frozen=True)
class GaussianForecast:
    """Multivariate normal forecast for one horizon."""

    mean: np.ndarray
    cov: np.ndarray
    horizon: int = 1

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).ravel()
        cov = np.asarray(self.cov, dtype=float)
        if cov.shape != (mean.size, mean.size):
            raise ValidationError("cov shape does not match mean length")
        scale = max(1.0, float(np.max(np.abs(cov))))
        if np.max(np.abs(cov - cov.T)) > 1e-10 * scale:
            raise ValidationError("cov must be symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", (cov + cov.T) / 2.0)


@dataclass(frozen=True)
class SampleEnsemble:
    """L sample paths over n series and H horizons."""

    samples: np.ndarray  # (L, n, H)
    source: str  # "incoherent" | "reconciled"
    seed: int | None = None

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 3 or s.shape[0] < 1:
            raise ValidationError("samples must be an (L, n, H) array with L >= 1")
        if not np.all(np.isfinite(s)):
            raise ValidationError("samples contain non-finite entries")
        if self.source not in ("incoherent", "reconciled"):
            raise ValidationError(f"unknown ensemble source {self.source!r}")
        object.__setattr__(self, "samples", s)

    @property
    def size(self) -> int:
        return self.samples.shape[0]

    @property
    def n(self) -> int:
        return self.samples.shape[1]

    @property
    def horizons(self) -> int:
        return self.samples.shape[2]


def gaussian_reconcile(state: ReconcilerState, g: GaussianForecast) -> GaussianForecast:
    """Push a normal base forecast through the reconciliation mapping.

    mean -> SG mean, cov -> SG cov G'S'. The output covariance is symmetrized;
    eigenvalues below -1e-10 * ||cov|| are an error, tiny negatives are
    clipped to zero.
    """
    if g.mean.size != state.n:
        raise ValidationError(
            f"forecast has {g.mean.size} series, reconciler expects {state.n}"
        )
    sg = state.plan.structural @ state.g
    mean = sg @ g.mean
    cov = sg @ g.cov @ sg.T
    cov = (cov + cov.T) / 2.0
    eigvals, eigvecs = np.linalg.eigh(cov)
    floor = -1e-10 * max(1.0, float(np.max(np.abs(cov))))
    if eigvals[0] < floor:
        raise NumericalError(
            f"reconciled covariance has eigenvalue {eigvals[0]:.3e} below {floor:.3e}"
        )
    if eigvals[0] < 0.0:
        cov = (eigvecs * np.maximum(eigvals, 0.0)) @ eigvecs.T
        cov = (cov + cov.T) / 2.0
    return GaussianForecast(mean=mean, cov=cov, horizon=g.horizon)


@dataclass(frozen=True)
class BaseForecasterModel:
    """Per-series univariate base models sharing one AR(1)-style recursion.

    Each series follows next = intercept + slope * previous (+ error when
    simulating); naive is the (0, 1) special case. ``fallbacks`` records the
    series where an AR(1) fit degenerated and naive was used instead.
    """

    kind: str
    intercept: np.ndarray  # (n,)
    slope: np.ndarray  # (n,)
    last: np.ndarray  # (n,) last training observation
    residuals: ResidualMatrix
    fallbacks: tuple[int, ...] = ()

    @property
    def n(self) -> int:
        return self.last.size

    def point_forecast(self, horizons: int) -> np.ndarray:
        """Deterministic H-step recursion (zero errors)."""
        out = np.empty((self.n, horizons))
        prev = self.last
        for h in range(horizons):
            prev = self.intercept + self.slope * prev
            out[:, h] = prev
        return out

    def simulate(self, errors: np.ndarray) -> np.ndarray:
        """One sample path from an (n, H) error block, propagated across h."""
        if errors.shape[0] != self.n:
            raise ValidationError("error block series count mismatch")
        out = np.empty_like(errors)
        prev = self.last
        for h in range(errors.shape[1]):
            prev = self.intercept + self.slope * prev + errors[:, h]
            out[:, h] = prev
        return out


def fit_base(kind: str, history: np.ndarray) -> BaseForecasterModel:
    """Fit naive or AR(1)-with-drift models to an (n, T_obs) history.

    Residuals are the one-step-ahead in-sample errors, aligned (n, T_obs - 1).
    Constant series under ar1_drift fall back to naive (recorded).
    """
    y = np.asarray(history, dtype=float)
    if y.ndim != 2:
        raise ValidationError("history must be an (n, T_obs) matrix")
    if not np.all(np.isfinite(y)):
        raise ValidationError("history contains non-finite entries")
    n, t_obs = y.shape
    if kind == "naive":
        if t_obs < 2:
            raise ValidationError("naive needs at least 2 observations")
        intercept = np.zeros(n)
        slope = np.ones(n)
        errors = y[:, 1:] - y[:, :-1]
        fallbacks: tuple[int, ...] = ()
    elif kind == "ar1_drift":
        if t_obs < 3:
            raise ValidationError("ar1_drift needs at least 3 observations")
        intercept = np.zeros(n)
        slope = np.ones(n)
        fb = []
        for i in range(n):
            prev, cur = y[i, :-1], y[i, 1:]
            var_prev = np.var(prev)
            if var_prev <= np.finfo(float).eps * max(1.0, np.max(prev**2)):
                fb.append(i)  # constant regressor: slope undefined, keep naive
                continue
            slope[i] = np.cov(prev, cur, bias=True)[0, 1] / var_prev
            intercept[i] = np.mean(cur) - slope[i] * np.mean(prev)
        errors = y[:, 1:] - (intercept[:, None] + slope[:, None] * y[:, :-1])
        fallbacks = tuple(fb)
    else:
        raise ValidationError(f"unknown base forecaster kind {kind!r}")
    return BaseForecasterModel(
        kind=kind,
        intercept=intercept,
        slope=slope,
        last=y[:, -1].copy(),
        residuals=ResidualMatrix(errors),
        fallbacks=fallbacks,
    )


def bootstrap_sample(
    model: BaseForecasterModel, size: int, horizons: int, seed: int
) -> SampleEnsemble:
    """Joint block bootstrap: H consecutive residual columns per replicate.

    The start index is uniform over all T - H + 1 positions and the block is
    shared across series, preserving cross-sectional dependence. Replicate
    streams are derived from (seed, replicate index), so parallel and serial
    runs agree.
    """
    if size < 1 or horizons < 1:
        raise ValidationError("size and horizons must be positive")
    e = model.residuals.errors
    t = e.shape[1]
    if horizons > t:
        raise ValidationError(f"horizons={horizons} exceeds residual length T={t}")
    samples = np.empty((size, model.n, horizons))
    for rep in range(size):
        rng = np.random.default_rng([seed, rep])
        start = int(rng.integers(0, t - horizons + 1))
        samples[rep] = model.simulate(e[:, start:start + horizons])
    return SampleEnsemble(samples=samples, source="incoherent", seed=seed)


def reconcile_ensemble(state: ReconcilerState, ens: SampleEnsemble) -> SampleEnsemble:
    """Reconcile every ensemble member, preserving order."""
    if ens.n != state.n:
        raise ValidationError(
            f"ensemble has {ens.n} series, reconciler expects {state.n}"
        )
    flat = np.moveaxis(ens.samples, 1, 0).reshape(state.n, -1)
    rec = reconcile(state, ForecastBatch(flat))
    out = np.moveaxis(rec.reshape(state.n, ens.size, ens.horizons), 0, 1)
    return SampleEnsemble(samples=out, source="reconciled", seed=ens.seed)

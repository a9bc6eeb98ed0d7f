"""Point and probabilistic accuracy metrics and skill scores.

All functions here are pure. Panel bookkeeping (which origins contribute at
which horizon, grouping series into table rows) belongs to the experiment
harness, not to the metrics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import ValidationError

__all__ = [
    "mse",
    "mse_per_series",
    "skill",
    "crps",
    "energy_score",
    "mase",
    "ScorePanel",
]

# Above this ensemble size the exact double-sum pairwise term in crps would
# need O(L^2) memory; switch to the sorted O(L log L) form, which is equal
# in exact arithmetic.
_CRPS_EXACT_LIMIT = 10_000


def mse(errors: np.ndarray) -> float:
    """Pooled mean squared error over every entry supplied."""
    e = np.asarray(errors, dtype=float)
    if e.size == 0:
        raise ValidationError("mse of an empty error set")
    return float(np.mean(e**2))


def mse_per_series(errors: np.ndarray) -> np.ndarray:
    """Row-wise mean squared error of an (n, k) error matrix."""
    e = np.atleast_2d(np.asarray(errors, dtype=float))
    if e.size == 0:
        raise ValidationError("mse of an empty error set")
    return np.mean(e**2, axis=1)


def skill(score_j: float, score_0: float) -> float:
    """Percentage improvement of method j over the base: (1 - j/0) * 100."""
    if score_0 <= 0:
        raise ValidationError("base score must be positive for a skill score")
    return (1.0 - score_j / score_0) * 100.0


def crps(samples: np.ndarray, z: float) -> float:
    """Continuous ranked probability score of a sample against a scalar.

    (1/L) sum |x_l - z| - (1/(2 L^2)) sum_{l,j} |x_l - x_j|. For large L the
    pairwise term uses the sorted identity
    sum_{l,j} |x_l - x_j| = 2 * sum_i (2i - L - 1) * x_(i)  (i = 1..L),
    which is equal to the double sum in exact arithmetic.
    """
    x = np.asarray(samples, dtype=float).ravel()
    l = x.size
    if l == 0:
        raise ValidationError("crps of an empty sample")
    term1 = float(np.mean(np.abs(x - z)))
    if l <= _CRPS_EXACT_LIMIT:
        # chunk rows so memory stays bounded even near the limit
        total = 0.0
        step = max(1, 2**22 // max(l, 1))
        for i in range(0, l, step):
            total += float(np.sum(np.abs(x[i:i + step, None] - x[None, :])))
        pair = total
    else:
        xs = np.sort(x)
        idx = np.arange(1, l + 1, dtype=float)
        pair = 2.0 * float(np.sum((2.0 * idx - l - 1) * xs))
    return term1 - pair / (2.0 * l * l)


def energy_score(samples: np.ndarray, z: np.ndarray, all_pairs: bool = False) -> float:
    """Multivariate generalization of crps for an (L, n) sample.

    The spread term averages distances between consecutive sample pairs,
    (1/(2(L-1))) sum_{l<L} ||x_l - x_{l+1}||, so the value depends on sample
    order; shuffling the ensemble changes the score. ``all_pairs=True``
    substitutes the order-free U-statistic (1/(2 L^2)) sum_{l,j} ||x_l - x_j||.
    """
    x = np.atleast_2d(np.asarray(samples, dtype=float))
    zv = np.asarray(z, dtype=float).ravel()
    l = x.shape[0]
    if l < 2:
        raise ValidationError("energy_score needs at least 2 samples")
    if x.shape[1] != zv.size:
        raise ValidationError(
            f"samples have dimension {x.shape[1]}, observation has {zv.size}"
        )
    term1 = float(np.mean(np.linalg.norm(x - zv, axis=1)))
    if all_pairs:
        diffs = x[:, None, :] - x[None, :, :]
        spread = float(np.sum(np.linalg.norm(diffs, axis=2))) / (2.0 * l * l)
    else:
        spread = float(np.sum(np.linalg.norm(np.diff(x, axis=0), axis=1)))
        spread /= 2.0 * (l - 1)
    return term1 - spread


def mase(errors: np.ndarray, insample: np.ndarray, m: int = 4) -> float:
    """Mean absolute error scaled by the in-sample seasonal-naive MAE.

    Default seasonal period m=4 (quarterly).
    """
    e = np.asarray(errors, dtype=float).ravel()
    y = np.asarray(insample, dtype=float).ravel()
    if e.size == 0:
        raise ValidationError("mase of an empty error set")
    if y.size < m + 1:
        raise ValidationError(f"in-sample history shorter than m+1={m + 1}")
    denom = float(np.mean(np.abs(y[m:] - y[:-m])))
    if denom <= 0:
        raise ValidationError("seasonal-naive in-sample errors are all zero")
    return float(np.mean(np.abs(e))) / denom


@dataclass
class ScorePanel:
    """Tidy collection of metric values keyed by (method, group, horizon).

    Method id "base" is the reference; skill columns compare against it.
    """

    metric: str
    rows: list[dict] = field(default_factory=list)

    def add(self, method: str, group: str, horizon: int, value: float) -> None:
        self.rows.append(
            {
                "metric": self.metric,
                "method": method,
                "group": group,
                "horizon": int(horizon),
                "value": float(value),
            }
        )

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(
            self.rows, columns=["metric", "method", "group", "horizon", "value"]
        )
        if df.empty:
            df["skill"] = pd.Series(dtype=float)
            return df
        base = df[df["method"] == "base"].set_index(["group", "horizon"])["value"]

        def _skill(row):
            key = (row["group"], row["horizon"])
            if key not in base.index or base[key] <= 0:
                return np.nan
            return skill(row["value"], float(base[key]))

        df["skill"] = df.apply(_skill, axis=1)
        return df

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False)

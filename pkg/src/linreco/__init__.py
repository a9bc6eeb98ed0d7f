"""linreco: linear-constraint forecast reconciliation.

Reduce arbitrary homogeneous linear constraints on a set of time series to a
structural representation, then produce coherent point and probabilistic
forecasts from incoherent base forecasts, with scoring and an experiment
harness.
"""

__version__ = "0.1.0"

from .constraints import (
    ConstraintSystem,
    HierarchySpec,
    ReconciliationPlan,
    VariablePartition,
    compose_grouped,
    from_hierarchy,
    parse_constraints,
    read_constraints_file,
    read_gamma_csv,
    reduce_direct,
    reduce_qr,
    reduce_rref,
    write_gamma_csv,
)
from .covariance import ResidualMatrix, WMatrix, w_ols, w_sam, w_shr, w_wls
from .errors import LinrecoError, NumericalError, ValidationError
from .probabilistic import (
    BaseForecasterModel,
    GaussianForecast,
    SampleEnsemble,
    bootstrap_sample,
    fit_base,
    gaussian_reconcile,
    reconcile_ensemble,
)
from .reconcile import (
    ForecastBatch,
    ReconcilerState,
    fit,
    reconcile,
    reconcile_point,
    reconcile_structural,
)
from .scoring import ScorePanel, crps, energy_score, mase, mse, mse_per_series, skill

__all__ = [
    "__version__",
    "ConstraintSystem",
    "VariablePartition",
    "ReconciliationPlan",
    "HierarchySpec",
    "parse_constraints",
    "read_constraints_file",
    "read_gamma_csv",
    "write_gamma_csv",
    "reduce_rref",
    "reduce_qr",
    "reduce_direct",
    "from_hierarchy",
    "compose_grouped",
    "ResidualMatrix",
    "WMatrix",
    "w_ols",
    "w_wls",
    "w_sam",
    "w_shr",
    "ForecastBatch",
    "ReconcilerState",
    "fit",
    "reconcile",
    "reconcile_point",
    "reconcile_structural",
    "GaussianForecast",
    "SampleEnsemble",
    "BaseForecasterModel",
    "gaussian_reconcile",
    "fit_base",
    "bootstrap_sample",
    "reconcile_ensemble",
    "mse",
    "mse_per_series",
    "skill",
    "crps",
    "energy_score",
    "mase",
    "ScorePanel",
    "LinrecoError",
    "ValidationError",
    "NumericalError",
]

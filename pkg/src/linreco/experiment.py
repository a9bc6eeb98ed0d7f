"""Rolling-origin, expanding-window forecast reconciliation experiments.

The harness owns all bookkeeping that the metrics deliberately do not:
which origins contribute scores at which horizon, per-origin refitting of
the error covariance, tidy output files, and an independent coherence audit
that works purely from the emitted artifacts.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .constraints import (
    ConstraintSystem,
    ReconciliationPlan,
    reduce_qr,
    reduce_rref,
)
from .covariance import ResidualMatrix, estimate
from .errors import ValidationError
from .probabilistic import bootstrap_sample, fit_base, reconcile_ensemble
from .reconcile import ForecastBatch, fit, reconcile
from .scoring import ScorePanel, crps, energy_score

__all__ = ["ExperimentConfig", "run", "synthesize", "audit"]

_METHODS = ("base", "ols", "wls", "shr", "sam")


@dataclass(frozen=True)
class ExperimentConfig:
    first_train: int
    horizons: int = 4
    methods: tuple[str, ...] = ("base", "wls")
    prob_mode: str = "none"  # none | gaussian | bootstrap
    ensemble_size: int = 500
    seed: int = 0
    base_kind: str = "ar1_drift"
    reducer: str = "qr"  # qr | rref
    shrink_lam: float | None = None
    outdir: str | None = None

    def __post_init__(self):
        if self.horizons < 1:
            raise ValidationError("horizons must be >= 1")
        if self.first_train < 3:
            raise ValidationError("first training window must hold >= 3 observations")
        if not self.methods:
            raise ValidationError("at least one method is required")
        bad = set(self.methods) - set(_METHODS)
        if bad:
            raise ValidationError(f"unknown methods {sorted(bad)}")
        if self.prob_mode not in ("none", "gaussian", "bootstrap"):
            raise ValidationError(f"unknown probabilistic mode {self.prob_mode!r}")
        if self.reducer not in ("qr", "rref"):
            raise ValidationError(f"unknown reducer {self.reducer!r}")
        if self.prob_mode == "bootstrap" and self.ensemble_size < 2:
            raise ValidationError("bootstrap mode needs an ensemble of >= 2")


def _reduce(cs: ConstraintSystem, reducer: str) -> ReconciliationPlan:
    return reduce_qr(cs) if reducer == "qr" else reduce_rref(cs)


def run(
    config: ExperimentConfig,
    cs: ConstraintSystem,
    data: np.ndarray,
    groups: dict[str, str] | None = None,
):
    """Expanding-window experiment over all origins after the first window.

    ``data`` is (n, T_obs) in the constraint system's variable order. For each
    origin t (first_train <= t < T_obs) base models are fit on data[:, :t],
    forecast min(H, T_obs - t) steps, reconciled with every requested method
    using a W re-estimated from that origin's in-sample errors, and scored
    against the actuals. Returns the score panels; when ``config.outdir`` is
    set, also writes forecasts/, scores/, plan.json and manifest.json.

    ``groups`` maps series name -> panel row label; unmapped series pool
    into "all".
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[0] != cs.n:
        raise ValidationError(
            f"data must be ({cs.n}, T_obs) to match the constraint system"
        )
    t_obs = data.shape[1]
    if config.first_train >= t_obs:
        raise ValidationError("first training window leaves no origins to forecast")

    plan = _reduce(cs, config.reducer)
    names = list(cs.var_names)
    h_max = config.horizons
    origins = range(config.first_train, t_obs)

    # errors[method][h] collects (n,) error vectors across origins
    point_err: dict[str, list[list[np.ndarray]]] = {
        m: [[] for _ in range(h_max)] for m in config.methods
    }
    crps_vals: dict[str, list[list[np.ndarray]]] = {
        m: [[] for _ in range(h_max)] for m in config.methods
    }
    es_vals: dict[str, list[list[float]]] = {
        m: [[] for _ in range(h_max)] for m in config.methods
    }
    forecast_rows: list[dict] = []
    fallback_log: list[dict] = []
    gaussian_by_origin: dict[int, dict] = {}

    for origin in origins:
        train = data[:, :origin]
        model = fit_base(config.base_kind, train)
        if model.fallbacks:
            fallback_log.append({"origin": origin, "series": list(model.fallbacks)})
        h_eff = min(h_max, t_obs - origin)
        base_fc = model.point_forecast(h_eff)  # original order, (n, h_eff)
        actual = data[:, origin:origin + h_eff]

        res_plan = ResidualMatrix(plan.to_plan_order(model.residuals.errors))
        states = {}
        for m in config.methods:
            if m == "base":
                continue
            w = estimate(m, res_plan, plan.n, lam=config.shrink_lam)
            states[m] = fit(plan, w)

        gaussian_artifacts = {}
        ensembles = {}
        if config.prob_mode == "bootstrap":
            base_ens = bootstrap_sample(
                model, config.ensemble_size, h_eff, seed=hash((config.seed, origin)) % 2**31
            )
            ensembles["base"] = base_ens.samples

        for m in config.methods:
            if m == "base":
                fc = base_fc
            else:
                y = reconcile(states[m], ForecastBatch(plan.to_plan_order(base_fc)))
                fc = plan.from_plan_order(y)
                if config.prob_mode == "gaussian":
                    # distribution of the reconciled forecast when the base
                    # error covariance is taken as W (one-step scale)
                    sg = plan.structural @ states[m].g
                    cov_plan = sg @ states[m].w.w @ sg.T
                    inv = np.argsort(plan.permutation)
                    gaussian_artifacts[m] = {
                        "mean": fc.tolist(),
                        "cov": cov_plan[np.ix_(inv, inv)].tolist(),
                    }
            for h in range(h_eff):
                point_err[m][h].append(fc[:, h] - actual[:, h])
            for h in range(h_eff):
                for i, name in enumerate(names):
                    forecast_rows.append(
                        {
                            "origin": origin,
                            "method": m,
                            "series": name,
                            "horizon": h + 1,
                            "value": fc[i, h],
                        }
                    )
            if config.prob_mode == "bootstrap":
                if m == "base":
                    samples = ensembles["base"]
                else:
                    flat = np.moveaxis(ensembles["base"], 1, 0).reshape(plan.n, -1)
                    ens = reconcile_ensemble(
                        states[m],
                        type(base_ens)(
                            samples=np.moveaxis(
                                plan.to_plan_order(flat).reshape(
                                    plan.n, base_ens.size, h_eff
                                ),
                                0,
                                1,
                            ),
                            source="incoherent",
                            seed=base_ens.seed,
                        ),
                    )
                    back = np.moveaxis(ens.samples, 1, 0).reshape(plan.n, -1)
                    samples = np.moveaxis(
                        plan.from_plan_order(back).reshape(plan.n, ens.size, h_eff),
                        0,
                        1,
                    )
                for h in range(h_eff):
                    per_series = np.array(
                        [crps(samples[:, i, h], actual[i, h]) for i in range(plan.n)]
                    )
                    crps_vals[m][h].append(per_series)
                    es_vals[m][h].append(
                        energy_score(samples[:, :, h], actual[:, h])
                    )
        if gaussian_artifacts:
            gaussian_by_origin[origin] = gaussian_artifacts

    group_of = {name: (groups or {}).get(name, "all") for name in names}
    group_idx: dict[str, list[int]] = {}
    for i, name in enumerate(names):
        group_idx.setdefault(group_of[name], []).append(i)

    mse_panel = ScorePanel("mse")
    for m in config.methods:
        for h in range(h_max):
            if not point_err[m][h]:
                continue
            e = np.array(point_err[m][h])  # (origins_h, n)
            for g, idx in group_idx.items():
                mse_panel.add(m, g, h + 1, float(np.mean(e[:, idx] ** 2)))

    panels = {"mse": mse_panel}
    if config.prob_mode == "bootstrap":
        crps_panel = ScorePanel("crps")
        es_panel = ScorePanel("es")
        for m in config.methods:
            for h in range(h_max):
                if not crps_vals[m][h]:
                    continue
                v = np.array(crps_vals[m][h])  # (origins_h, n)
                for g, idx in group_idx.items():
                    crps_panel.add(m, g, h + 1, float(np.mean(v[:, idx])))
                es_panel.add(m, "all", h + 1, float(np.mean(es_vals[m][h])))
        panels["crps"] = crps_panel
        panels["es"] = es_panel

    if config.outdir is not None:
        out = Path(config.outdir)
        (out / "forecasts").mkdir(parents=True, exist_ok=True)
        (out / "scores").mkdir(parents=True, exist_ok=True)
        pd.DataFrame(forecast_rows).to_csv(out / "forecasts" / "forecasts.csv",
                                           index=False)
        for key, panel in panels.items():
            panel.to_csv(out / "scores" / f"{key}.csv")
        for origin, artifacts in gaussian_by_origin.items():
            (out / "forecasts" / f"gaussian_{origin:04d}.json").write_text(
                json.dumps(artifacts)
            )
        (out / "plan.json").write_text(plan.to_json())
        manifest = {
            "config": asdict(config),
            "version": __version__,
            "n": cs.n,
            "n_constrained": plan.n_c,
            "n_free": plan.n_u,
            "origins": [int(o) for o in origins],
            "base_model_fallbacks": fallback_log,
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return panels


# ---------------------------------------------------------------------------
# Synthetic structures


def _gdp_7() -> ConstraintSystem:
    """Two parallel 3-variable hierarchies sharing one total (7 series)."""
    names = ("X", "A", "B", "A1", "A2", "B1", "B2")
    gamma = np.array(
        [
            [1.0, -1.0, -1.0, 0.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, -1.0, -1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0, 0.0, -1.0, -1.0],
        ]
    )
    return ConstraintSystem(gamma, names)


def _aus_95() -> ConstraintSystem:
    """95-series, 33-constraint system shaped like a two-sided QNA account.

    One shared total is defined twice: from an income side (5 aggregates over
    10 leaf series) and from an expenditure side (26 aggregates over 53
    leaves). Every constraint row carries a unit pivot on its aggregate, so
    the 33 rows are linearly independent by construction.
    """
    names: list[str] = ["GDP"]
    rows: list[dict[str, float]] = []
    inc_aggs = [f"I{k}" for k in range(1, 6)]
    inc_leaves = [f"I{k}_{j}" for k in range(1, 6) for j in (1, 2)]
    rows.append({"GDP": 1.0, **{a: -1.0 for a in inc_aggs}})
    for k, agg in enumerate(inc_aggs):
        rows.append({agg: 1.0, f"I{k + 1}_1": -1.0, f"I{k + 1}_2": -1.0})
    exp_aggs = [f"E{k}" for k in range(1, 27)]
    exp_leaves = [f"E{k}_{j}" for k in range(1, 27) for j in (1, 2)] + ["E26_3"]
    rows.append({"GDP": 1.0, **{a: (-1.0 if k < 20 else 1.0)
                                for k, a in enumerate(exp_aggs)}})
    for k, agg in enumerate(exp_aggs):
        terms = {agg: 1.0, f"E{k + 1}_1": -1.0, f"E{k + 1}_2": -1.0}
        if k == 25:
            terms["E26_3"] = -1.0
        rows.append(terms)
    names += inc_aggs + inc_leaves + exp_aggs + exp_leaves
    gamma = np.zeros((len(rows), len(names)))
    col = {n: j for j, n in enumerate(names)}
    for i, row in enumerate(rows):
        for n, v in row.items():
            gamma[i, col[n]] = v
    return ConstraintSystem(gamma, tuple(names))


def _ea_template(pre_elimination: bool = False) -> ConstraintSystem:
    """720-series pre-elimination template of a 19-country accounting system.

    Each of 20 blocks (one area aggregate + 19 countries) carries 36 series:
    15 aggregates (GDP, 12 expenditure, 2 income) and 21 leaves (12
    expenditure, 6 income, 3 output), with GDP defined three ways. The last
    leaf of each side is a statistical-discrepancy series that exists only
    for some countries; absent ones are removed as null columns. 21 linking
    rows tie each area leaf to the sum of the country leaves.
    """
    rng = np.random.default_rng(190720)
    a_e = np.zeros((13, 12))
    a_e[0] = np.concatenate([np.ones(8), [-1.0, -1.0, 1.0, 1.0]])  # GDP row
    for r in range(1, 13):
        picks = rng.choice(12, size=3, replace=False)
        a_e[r, picks] = rng.choice([-1.0, 1.0, 2.0], size=3)
    a_i = np.zeros((3, 6))
    a_i[0] = [1.0, 1.0, 1.0, 1.0, -1.0, 1.0]  # GDP row, discrepancy last
    a_i[1] = [1.0, 1.0, 0.0, 0.0, 0.0, 0.0]
    a_i[2] = [0.0, 0.0, 0.0, 1.0, -1.0, 0.0]
    a_o = np.array([[1.0, 1.0, 1.0]])  # GDP row, discrepancy last

    k_e = np.zeros((13, 15))
    k_e[0, 0] = 1.0
    k_e[1:, 1:13] = np.eye(12)
    k_i = np.zeros((3, 15))
    k_i[0, 0] = 1.0
    k_i[1:, 13:15] = np.eye(2)
    k_o = np.zeros((1, 15))
    k_o[0, 0] = 1.0
    gamma_gdp = np.block(
        [
            [k_e, -a_e, np.zeros((13, 6)), np.zeros((13, 3))],
            [k_i, np.zeros((3, 12)), -a_i, np.zeros((3, 3))],
            [k_o, np.zeros((1, 12)), np.zeros((1, 6)), -a_o],
        ]
    )  # 17 x 36

    link = np.hstack([np.zeros((21, 15)), np.eye(21)])
    gamma = np.block(
        [
            [gamma_gdp, np.zeros((17, 19 * 36))],
            [link, np.kron(-np.ones((1, 19)), link)],
            [np.zeros((19 * 17, 36)), np.kron(np.eye(19), gamma_gdp)],
        ]
    )  # 361 x 720

    countries = (
        "AT BE CY DE EE EL ES FI FR IE IT LT LU LV MT NL PT SI SK".split()
    )
    block_names = (
        ["GDP"]
        + [f"EA{k}" for k in range(1, 13)]
        + ["IA1", "IA2"]
        + [f"E_{k}" for k in range(1, 12)] + ["YA0"]
        + [f"I_{k}" for k in range(1, 6)] + ["YA2"]
        + [f"O_{k}" for k in range(1, 3)] + ["YA1"]
    )
    names = [f"EA19.{n}" for n in block_names]
    for c in countries:
        names += [f"{c}.{n}" for n in block_names]

    # statistical-discrepancy availability per country
    has = {c: set() for c in countries}
    has["IE"] = {"YA0", "YA2", "YA1"}
    has["PT"] = {"YA1"}
    for c in ("FI", "EE", "AT"):
        has[c] = {"YA0"}
    if pre_elimination:
        return ConstraintSystem(gamma, tuple(names))
    null = [
        f"{c}.{d}"
        for c in countries
        for d in ("YA0", "YA2", "YA1")
        if d not in has[c]
    ]
    keep = [j for j, n in enumerate(names) if n not in set(null)]
    return ConstraintSystem(
        gamma[:, keep], tuple(names[j] for j in keep)
    )


_STRUCTURES = {"two_hier_gdp": _gdp_7, "aus95": _aus_95, "ea19": _ea_template}


def synthesize(structure: str, t_obs: int, seed: int):
    """Build a named synthetic system and an exactly coherent data matrix.

    Free variables follow correlated stationary AR(1) processes; constrained
    variables are computed from them, so every column satisfies the
    constraints by construction. Returns (constraint system, data (n, t_obs)).
    """
    if structure not in _STRUCTURES:
        raise ValidationError(
            f"unknown structure {structure!r}; choose from {sorted(_STRUCTURES)}"
        )
    if t_obs < 20:
        raise ValidationError("synthetic histories need t_obs >= 20")
    cs = _STRUCTURES[structure]()
    plan = reduce_qr(cs)
    rng = np.random.default_rng(seed)
    n_u = plan.n_u
    phi = rng.uniform(0.3, 0.9, size=n_u)
    # equicorrelated innovations with heterogeneous scales, so cross-series
    # dependence and relative noisiness are both non-trivial
    burn = 50
    innov = rng.standard_normal((n_u, t_obs + burn))
    common = rng.standard_normal(t_obs + burn)
    innov = np.sqrt(0.7) * innov + np.sqrt(0.3) * common
    innov *= rng.lognormal(0.0, 0.6, size=n_u)[:, None]
    u = np.empty((n_u, t_obs + burn))
    u[:, 0] = innov[:, 0]
    for t in range(1, t_obs + burn):
        u[:, t] = phi * u[:, t - 1] + innov[:, t]
    u = u[:, burn:] + 10.0  # shift away from zero, keeps mase denominators sane
    y_plan = plan.structural @ u
    data = plan.from_plan_order(y_plan)
    return cs, data


# ---------------------------------------------------------------------------
# Audit


def audit(outdir) -> list[dict]:
    """Re-check coherence of every reconciled forecast from the files alone.

    Reads plan.json and forecasts/forecasts.csv under ``outdir``, rebuilds
    the zero-constraint matrix, and returns one record per
    (origin, method, horizon) whose forecast vector violates
    ||C y||_inf <= 1e-9 * (1 + ||y||_inf). Base forecasts are skipped.
    """
    out = Path(outdir)
    spec = json.loads((out / "plan.json").read_text())
    a = np.asarray(spec["A"], dtype=float)
    order = list(spec["constrained"]) + list(spec["free"])
    c = np.hstack([np.eye(a.shape[0]), -a])
    df = pd.read_csv(out / "forecasts" / "forecasts.csv")
    violations = []
    for (origin, method, horizon), grp in df.groupby(["origin", "method", "horizon"]):
        if method == "base":
            continue
        vals = grp.set_index("series")["value"]
        y = vals.reindex(order).to_numpy(dtype=float)
        if np.any(np.isnan(y)):
            missing = [n for n in order if n not in vals.index]
            raise ValidationError(f"forecast file missing series {missing[:5]}")
        resid = float(np.max(np.abs(c @ y)))
        bound = 1e-9 * (1.0 + float(np.max(np.abs(y))))
        if resid > bound:
            violations.append(
                {
                    "origin": int(origin),
                    "method": str(method),
                    "horizon": int(horizon),
                    "residual": resid,
                    "bound": bound,
                }
            )
    return violations

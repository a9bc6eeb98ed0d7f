"""Command-line interface.

Exit codes: 0 success, 2 validation error (bad input or incoherent files),
3 numerical failure (singular or indefinite matrices).
"""

from __future__ import annotations

import functools
import json
import sys

import click
import numpy as np
import pandas as pd

from . import experiment as expmod
from .constraints import (
    read_constraints_file,
    read_gamma_csv,
    reduce_qr,
    reduce_rref,
)
from .covariance import ResidualMatrix, estimate
from .errors import NumericalError, ValidationError
from .probabilistic import (
    GaussianForecast,
    bootstrap_sample,
    fit_base,
    gaussian_reconcile,
    reconcile_ensemble,
)
from .reconcile import ForecastBatch, fit, reconcile
from .scoring import crps, energy_score, mase, mse


def _handle_errors(f):
    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except ValidationError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
        except NumericalError as exc:
            click.echo(f"numerical failure: {exc}", err=True)
            sys.exit(3)

    return wrapper


def _load_system(constraints, gamma):
    if (constraints is None) == (gamma is None):
        raise ValidationError("provide exactly one of --constraints or --gamma")
    if constraints is not None:
        return read_constraints_file(constraints)
    return read_gamma_csv(gamma)


def _load_series_csv(path):
    """Data CSV: first column is a date/label, remaining columns are series.

    Returns (matrix (n, T), series names) with series as rows.
    """
    df = pd.read_csv(path)
    if df.shape[1] < 2:
        raise ValidationError(f"{path}: expected a label column plus series columns")
    names = list(df.columns[1:])
    return df.iloc[:, 1:].to_numpy(dtype=float).T, names


def _reorder(mat, have, want):
    idx = []
    for name in want:
        if name not in have:
            raise ValidationError(f"series {name!r} missing from data file")
        idx.append(have.index(name))
    return mat[idx]


def _fit_state(plan, w_kind, residuals, lam):
    res = None
    if residuals is not None:
        mat, names = _load_series_csv(residuals)
        res = ResidualMatrix(plan.to_plan_order(_reorder(mat, names, plan.var_names)))
    w = estimate(w_kind, res, plan.n, lam=lam)
    return fit(plan, w)


@click.group()
def main():
    """Coherent forecasts under linear constraints."""


@main.command("reduce")
@click.option("--constraints", type=click.Path(exists=True))
@click.option("--gamma", type=click.Path(exists=True))
@click.option("--method", type=click.Choice(["rref", "qr"]), default="rref")
@click.option("--out", type=click.Path(), default=None, help="write plan JSON here")
@_handle_errors
def reduce_cmd(constraints, gamma, method, out):
    """Reduce a constraint set to its structural representation."""
    cs = _load_system(constraints, gamma)
    plan = reduce_rref(cs) if method == "rref" else reduce_qr(cs)
    text = plan.to_json()
    if out:
        with open(out, "w") as fh:
            fh.write(text)
        click.echo(f"{plan.n_c} constrained, {plan.n_u} free -> {out}")
    else:
        click.echo(text)


@main.command("reconcile")
@click.option("--constraints", type=click.Path(exists=True))
@click.option("--gamma", type=click.Path(exists=True))
@click.option("--base", "base_path", type=click.Path(exists=True), required=True,
              help="base forecasts CSV (label column + one column per series)")
@click.option("--residuals", type=click.Path(exists=True), default=None)
@click.option("--w", "w_kind", type=click.Choice(["ols", "wls", "sam", "shr"]),
              default="ols")
@click.option("--lam", type=float, default=None, help="shrinkage override")
@click.option("--method", type=click.Choice(["rref", "qr"]), default="qr")
@click.option("--out", type=click.Path(), required=True)
@_handle_errors
def reconcile_cmd(constraints, gamma, base_path, residuals, w_kind, lam, method, out):
    """Reconcile point forecasts."""
    cs = _load_system(constraints, gamma)
    plan = reduce_rref(cs) if method == "rref" else reduce_qr(cs)
    base, names = _load_series_csv(base_path)
    base = _reorder(base, names, cs.var_names)
    state = _fit_state(plan, w_kind, residuals, lam)
    y = reconcile(state, ForecastBatch(plan.to_plan_order(base)))
    rec = plan.from_plan_order(y)
    df = pd.DataFrame(rec.T, columns=list(cs.var_names))
    df.insert(0, "horizon", np.arange(1, rec.shape[1] + 1))
    df.to_csv(out, index=False)
    click.echo(f"reconciled {rec.shape[1]} step(s) x {rec.shape[0]} series -> {out}")


@main.command("reconcile-prob")
@click.option("--constraints", type=click.Path(exists=True))
@click.option("--gamma", type=click.Path(exists=True))
@click.option("--mode", type=click.Choice(["gaussian", "bootstrap"]), required=True)
@click.option("--base", "base_path", type=click.Path(exists=True), default=None,
              help="gaussian mode: JSON {mean, cov} in constraint variable order")
@click.option("--history", type=click.Path(exists=True), default=None,
              help="bootstrap mode: training data CSV")
@click.option("--residuals", type=click.Path(exists=True), default=None)
@click.option("--w", "w_kind", type=click.Choice(["ols", "wls", "sam", "shr"]),
              default="ols")
@click.option("--lam", type=float, default=None)
@click.option("--base-kind", type=click.Choice(["naive", "ar1_drift"]),
              default="ar1_drift")
@click.option("--horizons", "-H", "horizons", type=int, default=1)
@click.option("--L", "size", type=int, default=1000)
@click.option("--seed", type=int, default=42)
@click.option("--out", type=click.Path(), required=True)
@_handle_errors
def reconcile_prob_cmd(constraints, gamma, mode, base_path, history, residuals,
                       w_kind, lam, base_kind, horizons, size, seed, out):
    """Reconcile a probabilistic forecast (analytic normal or bootstrap)."""
    cs = _load_system(constraints, gamma)
    plan = reduce_qr(cs)
    if mode == "gaussian":
        if base_path is None:
            raise ValidationError("gaussian mode needs --base JSON")
        with open(base_path) as fh:
            obj = json.load(fh)
        g = GaussianForecast(np.asarray(obj["mean"], dtype=float),
                             np.asarray(obj["cov"], dtype=float))
        g_plan = GaussianForecast(plan.to_plan_order(g.mean),
                                  plan.permute_cov(g.cov))
        state = _fit_state(plan, w_kind, residuals, lam)
        rec = gaussian_reconcile(state, g_plan)
        result = {
            "mean": plan.from_plan_order(rec.mean).tolist(),
            "cov": plan.from_plan_order(
                plan.from_plan_order(rec.cov).T
            ).T.tolist(),
            "series": list(cs.var_names),
        }
        with open(out, "w") as fh:
            json.dump(result, fh, indent=2)
        click.echo(f"gaussian reconciliation -> {out}")
        return
    if history is None:
        raise ValidationError("bootstrap mode needs --history CSV")
    data, names = _load_series_csv(history)
    data = _reorder(data, names, cs.var_names)
    model = fit_base(base_kind, plan.to_plan_order(data))
    state = _fit_state(plan, w_kind, residuals, lam) if residuals else _fit_state_from(
        plan, w_kind, model.residuals, lam)
    ens = bootstrap_sample(model, size, horizons, seed)
    rec = reconcile_ensemble(state, ens)
    rows = []
    names_plan = [cs.var_names[i] for i in plan.permutation]
    for rep in range(rec.size):
        for i, name in enumerate(names_plan):
            for h in range(horizons):
                rows.append((rep, name, h + 1, rec.samples[rep, i, h]))
    pd.DataFrame(rows, columns=["replicate", "series", "horizon", "value"]).to_csv(
        out, index=False)
    click.echo(f"{rec.size} reconciled sample paths -> {out}")


def _fit_state_from(plan, w_kind, res, lam):
    return fit(plan, estimate(w_kind, res, plan.n, lam=lam))


@main.command("score")
@click.option("--metric", type=click.Choice(["mse", "mase", "crps", "es"]),
              required=True)
@click.option("--forecasts", type=click.Path(exists=True), default=None,
              help="point forecasts CSV (mse/mase)")
@click.option("--samples", type=click.Path(exists=True), default=None,
              help="long-format sample CSV (crps/es)")
@click.option("--actuals", type=click.Path(exists=True), required=True)
@click.option("--insample", type=click.Path(exists=True), default=None,
              help="training data CSV for the mase denominator")
@click.option("--m", "period", type=int, default=4)
@click.option("--out", type=click.Path(), required=True)
@_handle_errors
def score_cmd(metric, forecasts, samples, actuals, insample, period, out):
    """Score forecasts against actuals, one row per series."""
    act, act_names = _load_series_csv(actuals)
    rows = []
    if metric in ("mse", "mase"):
        if forecasts is None:
            raise ValidationError(f"{metric} needs --forecasts")
        fc, fc_names = _load_series_csv(forecasts)
        fc = _reorder(fc, fc_names, act_names)
        if fc.shape != act.shape:
            raise ValidationError("forecasts and actuals have different shapes")
        hist = None
        if metric == "mase":
            if insample is None:
                raise ValidationError("mase needs --insample")
            hist, hist_names = _load_series_csv(insample)
            hist = _reorder(hist, hist_names, act_names)
        for i, name in enumerate(act_names):
            err = fc[i] - act[i]
            val = mse(err) if metric == "mse" else mase(err, hist[i], m=period)
            rows.append((name, metric, val))
    else:
        if samples is None:
            raise ValidationError(f"{metric} needs --samples")
        df = pd.read_csv(samples)
        for col in ("replicate", "series", "horizon", "value"):
            if col not in df.columns:
                raise ValidationError(f"sample file missing column {col!r}")
        for h in sorted(df["horizon"].unique()):
            if h > act.shape[1]:
                raise ValidationError(f"horizon {h} beyond actuals")
            sub = df[df["horizon"] == h]
            wide = sub.pivot(index="replicate", columns="series", values="value")
            wide = wide[act_names]
            if metric == "crps":
                for i, name in enumerate(act_names):
                    rows.append(
                        (name, f"crps_h{h}", crps(wide[name].to_numpy(), act[i, h - 1]))
                    )
            else:
                rows.append(
                    ("all", f"es_h{h}",
                     energy_score(wide.to_numpy(), act[:, h - 1]))
                )
    pd.DataFrame(rows, columns=["series", "metric", "value"]).to_csv(out, index=False)
    click.echo(f"{len(rows)} score(s) -> {out}")


@main.command("experiment")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="TOML file with any of the experiment keys; explicit "
                   "command-line flags take precedence")
@click.option("--structure",
              type=click.Choice(["two_hier_gdp", "aus95", "ea19"]), default=None)
@click.option("--t-obs", type=int, default=80)
@click.option("--constraints", type=click.Path(exists=True), default=None)
@click.option("--gamma", type=click.Path(exists=True), default=None)
@click.option("--data", "data_path", type=click.Path(exists=True), default=None)
@click.option("--first-train", type=int, default=None,
              help="observations in the first training window (required here "
                   "or in the config file)")
@click.option("--horizons", "-H", "horizons", type=int, default=4)
@click.option("--methods", default="base,wls",
              help="comma-separated subset of base,ols,wls,shr,sam")
@click.option("--prob-mode", type=click.Choice(["none", "gaussian", "bootstrap"]),
              default="none")
@click.option("--L", "size", type=int, default=500)
@click.option("--seed", type=int, default=0)
@click.option("--base-kind", type=click.Choice(["naive", "ar1_drift"]),
              default="ar1_drift")
@click.option("--reducer", type=click.Choice(["qr", "rref"]), default="qr")
@click.option("--outdir", type=click.Path(), required=True)
@click.pass_context
@_handle_errors
def experiment_cmd(ctx, config_path, structure, t_obs, constraints, gamma,
                   data_path, first_train, horizons, methods, prob_mode, size,
                   seed, base_kind, reducer, outdir):
    """Run a rolling-origin expanding-window reconciliation experiment."""
    if config_path is not None:
        try:
            import tomllib
        except ImportError:  # Python < 3.11
            import tomli as tomllib

        with open(config_path, "rb") as fh:
            file_cfg = tomllib.load(fh)
        aliases = {"data": "data_path", "L": "size", "config": "config_path"}
        scope = dict(
            structure=structure, t_obs=t_obs, constraints=constraints,
            gamma=gamma, data_path=data_path, first_train=first_train,
            horizons=horizons, methods=methods, prob_mode=prob_mode, size=size,
            seed=seed, base_kind=base_kind, reducer=reducer, outdir=outdir,
        )
        for key, value in file_cfg.items():
            name = aliases.get(key, key)
            if name not in scope:
                raise ValidationError(f"unknown experiment config key {key!r}")
            source = ctx.get_parameter_source(name)
            if source is not None and source.name != "COMMANDLINE":
                scope[name] = value
        structure, t_obs = scope["structure"], scope["t_obs"]
        constraints, gamma = scope["constraints"], scope["gamma"]
        data_path, first_train = scope["data_path"], scope["first_train"]
        horizons, methods = scope["horizons"], scope["methods"]
        prob_mode, size, seed = scope["prob_mode"], scope["size"], scope["seed"]
        base_kind, reducer = scope["base_kind"], scope["reducer"]
        outdir = scope["outdir"]
        if isinstance(methods, (list, tuple)):
            methods = ",".join(methods)
    if first_train is None:
        raise ValidationError("first_train is required (flag or config file)")
    if structure is not None:
        cs, data = expmod.synthesize(structure, t_obs, seed)
    else:
        if data_path is None:
            raise ValidationError("provide --structure or --data with constraints")
        cs = _load_system(constraints, gamma)
        mat, names = _load_series_csv(data_path)
        data = _reorder(mat, names, cs.var_names)
    config = expmod.ExperimentConfig(
        first_train=first_train,
        horizons=horizons,
        methods=tuple(m.strip() for m in methods.split(",") if m.strip()),
        prob_mode=prob_mode,
        ensemble_size=size,
        seed=seed,
        base_kind=base_kind,
        reducer=reducer,
        outdir=outdir,
    )
    panels = expmod.run(config, cs, data)
    for key, panel in panels.items():
        df = panel.to_frame()
        click.echo(f"{key}: {len(df)} panel rows")
    click.echo(f"artifacts -> {outdir}")


@main.command("audit")
@click.argument("outdir", type=click.Path(exists=True))
@_handle_errors
def audit_cmd(outdir):
    """Re-check coherence of reconciled forecasts from the emitted files."""
    violations = expmod.audit(outdir)
    if violations:
        for v in violations[:20]:
            click.echo(
                f"origin {v['origin']} method {v['method']} h={v['horizon']}: "
                f"residual {v['residual']:.3e} > {v['bound']:.3e}",
                err=True,
            )
        click.echo(f"{len(violations)} incoherent forecast vector(s)", err=True)
        sys.exit(2)
    click.echo("all reconciled forecasts coherent")


if __name__ == "__main__":
    main()

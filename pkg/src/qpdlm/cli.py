"""Command-line interface: ingest, describe, decompose, select-df, fit, report, simulate, demo.

Exit status is 0 on success, 1 on user error (bad flags, unreadable or
invalid input) and 2 on numerical failure (insufficient support, rank
deficiency, non-convergence).
"""

from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .decomposition import linear_trend, seasonal_spline_fit, three_scale_decomposition
from .errors import ConvergenceError, InputError, NumericalError, QpdlmError
from .gam import significance_stars
from .lags import cumulative_effect, fit_dlm, lag_table
from .manifest import RunManifest, atomic_write_text, manifest_path_for
from .panel import (
    DailyPanel, describe_panel, detect_outliers, format_stats_table, impute_missing,
    load_panel, load_schema, panel_to_csv_text, parse_stratum, remove_outliers,
)
from .risk import DEFAULT_DELTA_X, risk_estimate
from .selection import parse_grid, select_df_exposure, select_df_outcome
from .simulation import _jsonable, bias_experiment, generate_panel, load_scenario
from .splines import df_per_year_to_total


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _common(p: argparse.ArgumentParser, need_in: bool = True):
    p.add_argument("--in", dest="input", required=need_in, help="input panel (delimited text)")
    p.add_argument("--out", help="output file or directory")
    p.add_argument("--config", help="JSON config (column schema or model spec)")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qpdlm", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"qpdlm {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("ingest", help="validate, remove outliers, impute short gaps")
    _common(p)
    p.add_argument("--outlier-k", type=float, default=3.0)
    p.add_argument("--max-gap", type=int, default=3)
    p.add_argument("--no-outliers", action="store_true", help="skip outlier removal")

    p = sub.add_parser("describe", help="descriptive statistics per series")
    _common(p)
    p.add_argument("--figure", help="also plot every series to this image file")

    p = sub.add_parser("decompose", help="three-timescale Fourier decomposition")
    _common(p)
    p.add_argument("--series", required=True)
    p.add_argument("--max-gap", type=int, default=3)
    p.add_argument("--figure", help="write the stacked band plot to this image file")
    p.add_argument("--seasonal-df-per-year", type=float, default=2.0)

    p = sub.add_parser("select-df", help="choose the time-smooth df")
    _common(p)
    p.add_argument("--strategy", choices=("exposure", "outcome"), required=True)
    p.add_argument("--grid", default="1:16")
    p.add_argument("--pollutant", required=True)
    p.add_argument("--stratum", default="total")
    p.add_argument("--max-lag", type=int, default=4)
    p.add_argument("--criterion", help="gcv|aic (exposure) or qaic|bic (outcome)")
    p.add_argument("--selection-model", choices=("trend-only", "with-pollutant"), default="trend-only")
    p.add_argument("--temp-df", type=int, default=3, help="temperature smooth df; 0 omits it")

    p = sub.add_parser("fit", help="fit the distributed-lag quasi-Poisson model")
    _common(p)
    p.add_argument("--pollutant")
    p.add_argument("--max-lag", type=int)
    p.add_argument("--time-df", type=int, help="total df of the time smooth")
    p.add_argument("--time-df-per-year", type=float)
    p.add_argument("--temp-df", type=int)
    p.add_argument("--stratum")
    p.add_argument("--delta-x", type=float, default=DEFAULT_DELTA_X)

    p = sub.add_parser("report", help="compare both strategies; tables, JSON and figures")
    _common(p)
    _report_args(p)

    p = sub.add_parser("simulate", help="Monte-Carlo bias study of the two strategies")
    _common(p, need_in=False)
    p.add_argument("--scenario", default="C", help="A, B, C or a JSON config path")
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--strategies", default="exposure,outcome")
    p.add_argument("--figure", help="error box plot image file")

    p = sub.add_parser("demo", help="synthetic end-to-end run (panel, selection, tables, figures)")
    _common(p, need_in=False)
    p.add_argument("--scenario", default="C")
    p.add_argument("--n-days", type=int)
    _report_args(p, pollutants="PM10")
    return parser


def _report_args(p, pollutants="PM10,NO2,SO2"):
    p.add_argument("--pollutants", default=pollutants)
    p.add_argument("--grid", default="1:16")
    p.add_argument("--stratum", default="total")
    p.add_argument("--max-lag", type=int, default=4)
    p.add_argument("--temp-df", type=int, default=3)
    p.add_argument("--delta-x", type=float, default=DEFAULT_DELTA_X)
    p.add_argument("--criterion", default="qaic", choices=("qaic", "bic"))
    p.add_argument("--selection-model", choices=("trend-only", "with-pollutant"), default="trend-only")
    p.add_argument("--no-figures", action="store_true")


# ---------------------------------------------------------------------------
# helpers


def _load(args) -> DailyPanel:
    schema = None
    if args.config and args.command in ("ingest", "describe", "decompose"):
        schema = load_schema(args.config)
    try:
        return load_panel(args.input, schema)
    except FileNotFoundError:
        raise InputError(f"cannot read input file {args.input!r}") from None


def _emit(args, text: str, manifest: RunManifest | None = None):
    if args.out:
        atomic_write_text(args.out, text)
        if manifest is not None:
            manifest.outputs.append(os.path.basename(os.fspath(args.out)))
            manifest.write(manifest_path_for(args.out))
    else:
        sys.stdout.write(text)


def _params(args) -> dict:
    # threads and output location do not change results, so they stay out of the manifest
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("threads", "out")}


def _temp(df):
    return int(df) if df else None


# ---------------------------------------------------------------------------
# subcommands


def cmd_ingest(args) -> int:
    panel = _load(args)
    notes = {"inserted_days": panel.meta.get("inserted_days", 0), "outliers": {}, "imputed": {}}
    if not args.no_outliers:
        for name in list(panel.outcomes):
            mask = detect_outliers(panel.outcomes[name], args.outlier_k)
            panel = remove_outliers(panel, name, mask)
            notes["outliers"][name] = {"count": mask.count, "warnings": list(mask.warnings)}
    for name in [*panel.pollutants, *panel.meteo]:
        before = int(np.isnan(panel.series(name)).sum())
        panel = panel.with_series(name, impute_missing(panel.series(name), args.max_gap))
        notes["imputed"][name] = before - int(np.isnan(panel.series(name)).sum())
    manifest = RunManifest.for_inputs("ingest", _params(args), [args.input, args.config])
    manifest.notes = notes
    _emit(args, panel_to_csv_text(panel), manifest)
    return 0


def cmd_describe(args) -> int:
    panel = _load(args)
    rows = describe_panel(panel)
    manifest = RunManifest.for_inputs("describe", _params(args), [args.input, args.config])
    manifest.notes = {"moments": "population (divide by n)", "kurtosis": "non-excess",
                      "quantiles": "linear interpolation (type 7)"}
    _emit(args, format_stats_table(rows), manifest)
    if args.figure:
        from .plotting import plot_series

        plot_series(panel.dates, dict(panel.items()), args.figure)
    return 0


def cmd_decompose(args) -> int:
    panel = _load(args)
    raw = panel.series(args.series)
    series = impute_missing(raw, args.max_gap)
    if np.isnan(series).any():
        raise InputError(
            f"series {args.series!r} still has {int(np.isnan(series).sum())} missing days "
            f"after imputing gaps up to {args.max_gap}"
        )
    result = three_scale_decomposition(series)
    lines = ["date,long_term,seasonal,short_term"]
    for day, a, b, c in zip(panel.dates, result.long_term, result.seasonal, result.short_term):
        lines.append(f"{day},{float(a)!r},{float(b)!r},{float(c)!r}")
    trend = linear_trend(series)
    manifest = RunManifest.for_inputs("decompose", _params(args), [args.input, args.config])
    manifest.notes = {
        "cycles_counted_over": "whole record",
        "bands": {"long_term": "0-1 cycles (incl. mean)", "seasonal": "2-14", "short_term": "15+"},
        "linear_trend": {"slope_per_day": trend.slope, "intercept": trend.intercept,
                         "slope_se": trend.slope_se, "p_value": trend.p_value},
        "seasonal_spline_df_per_year": args.seasonal_df_per_year,
    }
    _emit(args, "\n".join(lines) + "\n", manifest)
    if args.figure:
        from .plotting import plot_three_scales

        plot_three_scales(panel.dates, series, result, args.series, args.figure)
    return 0


def cmd_select(args) -> int:
    panel = _load(args)
    grid = parse_grid(args.grid)
    if args.strategy == "exposure":
        res = select_df_exposure(panel, args.pollutant, grid, temp_df=_temp(args.temp_df),
                                 criterion=args.criterion or "gcv", threads=args.threads)
    else:
        res = select_df_outcome(
            panel, args.stratum, args.pollutant, args.max_lag, grid,
            criterion=args.criterion or "qaic", selection_model=args.selection_model,
            temp_df=_temp(args.temp_df), threads=args.threads,
        )
    manifest = RunManifest.for_inputs("select-df", _params(args), [args.input])
    _emit(args, res.table(), manifest)
    return 0


def _model_settings(args) -> dict:
    cfg = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            cfg = json.load(fh)
    settings = {
        "pollutant": cfg.get("pollutant"),
        "max_lag": cfg.get("max_lag", 4),
        "time_df": cfg.get("time_df"),
        "time_df_per_year": cfg.get("time_df_per_year"),
        "temp_df": cfg.get("temp_df", 3),
        "stratum": cfg.get("response", cfg.get("stratum", "total")),
    }
    for key in settings:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    if not settings["pollutant"]:
        raise InputError("fit needs a pollutant (--pollutant or config key 'pollutant')")
    return settings


def _fit_output(dlm, settings, delta_x) -> str:
    base = dlm.base
    lines = ["term\tlag\testimate\tse\tt\tp\tsignif"]
    se, t, p = base.se, base.t_values, base.p_values
    j = base.index("intercept")
    lines.append(f"intercept\t\t{base.coefficients[j]:.6g}\t{se[j]:.6g}\t{t[j]:.4f}\t{p[j]:.4g}\t"
                 f"{significance_stars(p[j])}")
    for lag, name in enumerate(dlm.lag_names):
        j = base.index(name)
        lines.append(f"{dlm.pollutant}\t{lag}\t{base.coefficients[j]:.6g}\t{se[j]:.6g}\t{t[j]:.4f}\t"
                     f"{p[j]:.4g}\t{significance_stars(p[j])}")
    beta, bse = cumulative_effect(dlm)
    rk = risk_estimate(beta, bse, delta_x)
    lines += [
        f"# cumulative_beta={beta:.6g}", f"# cumulative_se={bse:.6g}",
        f"# percent_variation={rk.percent:.4f} per {delta_x:g}",
        f"# rr={rk.rr:.6f}", f"# rr_ci95=({rk.ci_low:.6f}, {rk.ci_high:.6f})",
        f"# dispersion={base.dispersion:.6g}", f"# edf={base.edf}", f"# n_used={base.n_used}",
        f"# deviance={base.deviance:.6g}", f"# gcv={base.gcv:.6g}", f"# qaic={base.qaic:.6g}",
        f"# time_df={settings['time_df']}", f"# temp_df={settings['temp_df'] or 'none'}",
        f"# converged={str(base.converged).lower()}",
    ]
    return "\n".join(lines) + "\n"


def cmd_fit(args) -> int:
    panel = _load(args)
    settings = _model_settings(args)
    if settings["time_df"] is None:
        dfy = settings["time_df_per_year"] or 3.0
        settings["time_df"] = df_per_year_to_total(dfy, panel.n)
    dlm = fit_dlm(panel, settings["pollutant"], int(settings["max_lag"]), int(settings["time_df"]),
                  _temp(settings["temp_df"]), settings["stratum"])
    manifest = RunManifest.for_inputs("fit", _params(args), [args.input, args.config])
    manifest.notes = {"settings": settings, "qaic_definition": "deviance/own dispersion + 2*edf"}
    text = _fit_output(dlm, settings, args.delta_x)
    _emit(args, text, manifest)
    if not dlm.base.converged:
        raise ConvergenceError(f"IRLS did not converge in {dlm.base.n_iter} iterations")
    return 0


def _run_report(panel: DailyPanel, args, out_dir: str, manifest: RunManifest, extra=None) -> dict:
    from .report import compare_strategies, comparison_dict, table2, table3

    os.makedirs(out_dir, exist_ok=True)
    grid = parse_grid(args.grid)
    pollutants = [p.strip() for p in args.pollutants.split(",") if p.strip()]
    missing = [p for p in pollutants if p not in panel.pollutants]
    if missing:
        raise InputError(f"pollutant(s) not in panel: {', '.join(missing)}")
    comps = [
        compare_strategies(panel, pol, args.stratum, args.max_lag, grid, _temp(args.temp_df),
                           args.selection_model, args.criterion, args.delta_x,
                           threads=args.threads)
        for pol in pollutants
    ]
    files = {
        "table2.tsv": table2(comps),
        "table3.tsv": table3(comps),
    }
    doc = {
        "settings": {
            "stratum": args.stratum, "max_lag": args.max_lag, "temp_df": args.temp_df,
            "delta_x": args.delta_x, "grid": list(grid), "criterion": args.criterion,
            "selection_model": args.selection_model,
        },
        "pollutants": [comparison_dict(c) for c in comps],
    }
    if extra:
        doc.update(extra)
    files["report.json"] = json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"
    for name, text in files.items():
        atomic_write_text(os.path.join(out_dir, name), text)
        manifest.outputs.append(name)
    if not args.no_figures:
        from .plotting import plot_lag_coefficients, plot_selection_scores, plot_three_scales

        plot_lag_coefficients(comps, os.path.join(out_dir, "lag_coefficients.png"))
        plot_selection_scores(comps, os.path.join(out_dir, "selection_scores.png"))
        manifest.outputs += ["lag_coefficients.png", "selection_scores.png"]
        for pol in pollutants:
            series = impute_missing(panel.series(pol), 3)
            if np.isnan(series).any() or series.size < 730:
                continue
            name = f"three_scales_{pol}.png"
            plot_three_scales(panel.dates, series, three_scale_decomposition(series), pol,
                              os.path.join(out_dir, name))
            manifest.outputs.append(name)
    manifest.write(os.path.join(out_dir, "manifest.json"))
    return doc


def cmd_report(args) -> int:
    panel = _load(args)
    out_dir = args.out or "report"
    manifest = RunManifest.for_inputs("report", _params(args), [args.input])
    _run_report(panel, args, out_dir, manifest)
    return 0


def cmd_simulate(args) -> int:
    if args.seed is None:
        raise InputError("simulate requires --seed for reproducibility")
    config = load_scenario(args.scenario).replace(seed=args.seed)
    strategies = tuple(s.strip() for s in args.strategies.split(",") if s.strip())
    report = bias_experiment(config, args.reps, threads=args.threads, strategies=strategies)
    manifest = RunManifest.for_inputs("simulate", _params(args), seed=args.seed)
    manifest.notes = {
        s: {"mean_bias": v.mean_bias, "coverage": v.coverage, "mean_df_per_year": v.mean_df_per_year}
        for s, v in report.strategies.items()
    }
    _emit(args, report.to_json(), manifest)
    if args.figure:
        from .plotting import plot_simulation

        plot_simulation(report, args.figure)
    return 0


def cmd_demo(args) -> int:
    seed = 42 if args.seed is None else args.seed
    config = load_scenario(args.scenario).replace(seed=seed)
    if args.n_days:
        config = config.replace(n_days=args.n_days)
    out_dir = args.out or "demo"
    os.makedirs(out_dir, exist_ok=True)
    panel, truth = generate_panel(config, seed)
    atomic_write_text(os.path.join(out_dir, "panel.csv"), panel_to_csv_text(panel))
    manifest = RunManifest.for_inputs("demo", _params(args), seed=seed)
    manifest.outputs.append("panel.csv")
    truth_doc = {
        "scenario": args.scenario, "description": config.description,
        "beta_true": list(config.beta_true), "beta_true_sum": config.beta_true_sum,
        "dispersion_phi": config.dispersion_phi,
        "confounding_strength": config.confounding_strength,
    }
    doc = _run_report(panel, args, out_dir, manifest, extra={"truth": truth_doc})
    for comp in doc["pollutants"]:
        for strategy in ("exposure", "outcome"):
            r = comp[strategy]
            err = r["cumulative_beta"] - config.beta_true_sum
            sys.stdout.write(
                f"{comp['pollutant']} {strategy:>8}: df/yr={r['chosen_df_per_year']:g} "
                f"beta_sum={r['cumulative_beta']:.5f} (truth {config.beta_true_sum:.5f}, "
                f"error {err / r['cumulative_se']:+.2f} SE) "
                f"%RR={r['percent_variation']:.2f}\n"
            )
    return 0


COMMANDS = {
    "ingest": cmd_ingest, "describe": cmd_describe, "decompose": cmd_decompose,
    "select-df": cmd_select, "fit": cmd_fit, "report": cmd_report,
    "simulate": cmd_simulate, "demo": cmd_demo,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(str(exc) + "\n")
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    if getattr(args, "threads", 1) is not None and args.threads < 1:
        sys.stderr.write("qpdlm: error: --threads must be >= 1\n")
        return 1
    try:
        return COMMANDS[args.command](args)
    except NumericalError as exc:
        sys.stderr.write(f"qpdlm {args.command}: numerical failure: {exc}\n")
        return 2
    except (InputError, QpdlmError, OSError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"qpdlm {args.command}: error: {exc}\n")
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

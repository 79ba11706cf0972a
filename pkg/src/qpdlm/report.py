"""Side-by-side comparison of the two df-selection strategies on one panel."""

from __future__ import annotations

from dataclasses import dataclass, field

from .gam import significance_stars
from .lags import DlmFit, cumulative_effect, fit_dlm
from .panel import DailyPanel
from .risk import DEFAULT_DELTA_X, RiskEstimate, risk_estimate
from .selection import DEFAULT_GRID, SelectionResult, select_df_exposure, select_df_outcome

MODEL_LABELS = {"exposure": "{pollutant} Predictor", "outcome": "Hospitalization Predictor"}


@dataclass
class StrategyResult:
    strategy: str
    selection: SelectionResult
    dlm: DlmFit
    risk: RiskEstimate

    @property
    def df_per_year(self) -> float:
        return self.selection.chosen_df_per_year


@dataclass
class PollutantComparison:
    pollutant: str
    results: dict = field(default_factory=dict)


def compare_strategies(panel: DailyPanel, pollutant: str, stratum="total", K: int = 4,
                       grid=DEFAULT_GRID, temp_df: int | None = 3,
                       selection_model: str = "trend-only", criterion: str = "qaic",
                       delta_x: float = DEFAULT_DELTA_X, level: float = 0.95,
                       exclude=None, threads: int = 1) -> PollutantComparison:
    """Select the time df both ways, refit the DLM with each choice and convert to risks."""
    out = PollutantComparison(pollutant)
    selections = {
        "exposure": select_df_exposure(panel, pollutant, grid, temp_df=temp_df,
                                       exclude=exclude, threads=threads),
        "outcome": select_df_outcome(panel, stratum, pollutant, K, grid, criterion=criterion,
                                     selection_model=selection_model, temp_df=temp_df,
                                     exclude=exclude, threads=threads),
    }
    for strategy, sel in selections.items():
        dlm = fit_dlm(panel, pollutant, K, sel.chosen_total_df, temp_df, stratum, exclude=exclude)
        beta, se = cumulative_effect(dlm)
        out.results[strategy] = StrategyResult(
            strategy, sel, dlm, risk_estimate(beta, se, delta_x, level, "cumulative"),
        )
    return out


def table2(comparisons, delimiter: str = "\t") -> str:
    """Pollutant, model, percent variation, SEs, interval and df per year, one row per strategy."""
    cols = ("pollutant", "model", "estimate_pct", "se_per_unit", "se_pct", "ci_low_pct",
            "ci_high_pct", "df_per_year", "total_df", "dispersion")
    lines = [delimiter.join(cols)]
    for comp in comparisons:
        for strategy in ("exposure", "outcome"):
            r = comp.results[strategy]
            rk = r.risk
            lines.append(delimiter.join((
                comp.pollutant, MODEL_LABELS[strategy].format(pollutant=comp.pollutant),
                f"{rk.percent:.2f}", f"{rk.se:.4g}", f"{rk.percent_se:.3f}",
                f"{(rk.ci_low - 1) * 100:.2f}", f"{(rk.ci_high - 1) * 100:.2f}",
                f"{r.df_per_year:g}", str(r.selection.chosen_total_df),
                f"{r.dlm.base.dispersion:.3f}",
            )))
    note = comparisons[0].results["exposure"].risk if comparisons else None
    if note is not None:
        lines.append(f"# delta_x={note.delta_x:g} per pollutant unit; level={note.level:g}")
    return "\n".join(lines) + "\n"


def table3(comparisons, delimiter: str = "\t") -> str:
    """Per-lag coefficients for the exposure-based (model 1) and outcome-based (model 2) fits."""
    lines = [delimiter.join(("pollutant", "lag", "estimate_model1", "p_model1", "signif_model1",
                             "estimate_model2", "p_model2", "signif_model2"))]
    for comp in comparisons:
        m1, m2 = comp.results["exposure"].dlm, comp.results["outcome"].dlm
        for lag in range(m1.K + 1):
            p1, p2 = float(m1.per_lag_p[lag]), float(m2.per_lag_p[lag])
            lines.append(delimiter.join((
                comp.pollutant, str(lag),
                f"{m1.lag_betas[lag]:.5f}", f"{p1:.4f}", significance_stars(p1),
                f"{m2.lag_betas[lag]:.5f}", f"{p2:.4f}", significance_stars(p2),
            )))
    return "\n".join(lines) + "\n"


def comparison_dict(comp: PollutantComparison) -> dict:
    out = {"pollutant": comp.pollutant}
    for strategy, r in comp.results.items():
        beta, se = cumulative_effect(r.dlm)
        out[strategy] = {
            "chosen_df_per_year": r.df_per_year,
            "chosen_total_df": r.selection.chosen_total_df,
            "criterion": r.selection.criterion,
            "scores": list(r.selection.scores),
            "grid": list(r.selection.candidate_dfs_per_year),
            "diagnostics": r.selection.diagnostics,
            "lag_betas": [float(b) for b in r.dlm.lag_betas],
            "lag_se": [float(s) for s in r.dlm.lag_se],
            "lag_p": [float(p) for p in r.dlm.per_lag_p],
            "cumulative_beta": beta,
            "cumulative_se": se,
            "percent_variation": r.risk.percent,
            "rr": r.risk.rr,
            "rr_ci": [r.risk.ci_low, r.risk.ci_high],
            "dispersion": r.dlm.base.dispersion,
            "edf": r.dlm.base.edf,
            "n_used": r.dlm.base.n_used,
            "converged": r.dlm.base.converged,
        }
    return out

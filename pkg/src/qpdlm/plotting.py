"""Static figures for the report path, written straight to files."""

from __future__ import annotations

import contextlib
import os
import tempfile

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.linewidth": 0.8,
    "figure.dpi": 100,
    "savefig.dpi": 120,
    "svg.hashsalt": "qpdlm",
}
MODEL_COLORS = {"exposure": "#1b6ca8", "outcome": "#c0392b"}


@contextlib.contextmanager
def figure_style():
    with plt.rc_context(STYLE):
        yield


def save_figure(fig, path) -> str:
    """Write ``fig`` atomically; PNG metadata is pinned so reruns are byte-identical."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fmt = os.path.splitext(path)[1].lstrip(".").lower() or "png"
    fd, tmp = tempfile.mkstemp(dir=directory, suffix="." + fmt)
    os.close(fd)
    try:
        metadata = {"Software": None} if fmt == "png" else {"Date": None} if fmt in ("svg", "pdf") else None
        fig.savefig(tmp, format=fmt, metadata=metadata)
        os.replace(tmp, path)
    finally:
        plt.close(fig)
        if os.path.exists(tmp):
            os.remove(tmp)
    return path


def plot_three_scales(dates, original, result, title: str, path):
    """Original series and its long-term, seasonal and short-term bands, stacked."""
    with figure_style():
        fig, axes = plt.subplots(4, 1, figsize=(7.0, 7.5), sharex=True)
        panels = [
            ("original", original),
            ("long term (1 cycle)", result.long_term),
            (f"seasonal (2-{result.cutoffs[1]} cycles)", result.seasonal),
            (f"short term ({result.cutoffs[1] + 1}+ cycles)", result.short_term),
        ]
        for ax, (label, values) in zip(axes, panels):
            ax.plot(dates, values, color="0.2")
            ax.set_ylabel(label)
        axes[0].set_title(title)
        fig.tight_layout()
        return save_figure(fig, path)


def plot_series(dates, series: dict, path, title: str = ""):
    with figure_style():
        fig, axes = plt.subplots(len(series), 1, figsize=(7.0, 1.6 * len(series) + 0.6),
                                 sharex=True, squeeze=False)
        for ax, (name, values) in zip(axes[:, 0], series.items()):
            ax.plot(dates, values, color="0.25")
            ax.set_ylabel(name)
        if title:
            axes[0, 0].set_title(title)
        fig.tight_layout()
        return save_figure(fig, path)


def plot_lag_coefficients(comparisons, path, level_z: float = 1.96):
    """Per-lag estimates with Wald intervals, exposure-based versus outcome-based df."""
    with figure_style():
        k = len(comparisons)
        fig, axes = plt.subplots(1, k, figsize=(3.2 * k, 3.0), squeeze=False)
        for ax, comp in zip(axes[0], comparisons):
            for offset, strategy in ((-0.12, "exposure"), (0.12, "outcome")):
                r = comp.results[strategy]
                lags = np.arange(r.dlm.K + 1)
                ax.errorbar(lags + offset, r.dlm.lag_betas, yerr=level_z * r.dlm.lag_se,
                            fmt="o", ms=3, capsize=2, color=MODEL_COLORS[strategy],
                            label=f"{strategy} ({r.df_per_year:g} df/yr)")
            ax.axhline(0.0, color="0.6", lw=0.6)
            ax.set_xlabel("lag (days)")
            ax.set_title(comp.pollutant)
            ax.legend(frameon=False)
        axes[0, 0].set_ylabel("log-RR per unit")
        fig.tight_layout()
        return save_figure(fig, path)


def plot_selection_scores(comparisons, path):
    """Criterion curves over the df-per-year grid for both strategies."""
    with figure_style():
        k = len(comparisons)
        fig, axes = plt.subplots(2, k, figsize=(3.2 * k, 4.8), squeeze=False)
        for j, comp in enumerate(comparisons):
            for i, strategy in enumerate(("exposure", "outcome")):
                sel = comp.results[strategy].selection
                ax = axes[i, j]
                ax.plot(sel.candidate_dfs_per_year, sel.scores, "o-", ms=3,
                        color=MODEL_COLORS[strategy])
                ax.axvline(sel.chosen_df_per_year, color="0.5", ls="--", lw=0.6)
                ax.set_xlabel("df per year")
                ax.set_ylabel(sel.criterion.upper())
                ax.set_title(f"{comp.pollutant}: {strategy}")
        fig.tight_layout()
        return save_figure(fig, path)


def plot_simulation(report, path):
    """Distribution of cumulative-effect errors per strategy from a simulation report."""
    with figure_style():
        fig, ax = plt.subplots(figsize=(5.0, 3.2))
        names = list(report.strategies)
        data = [
            [r[s]["error"] for r in report.replicates if r[s]["ok"]] for s in names
        ]
        ax.boxplot(data, showmeans=True)
        ax.set_xticks(range(1, len(names) + 1), names)
        ax.axhline(0.0, color="0.6", lw=0.6)
        ax.set_ylabel("estimate - truth (cumulative log-RR)")
        fig.tight_layout()
        return save_figure(fig, path)

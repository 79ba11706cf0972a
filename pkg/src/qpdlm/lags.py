"""Unconstrained distributed-lag designs and quasi-Poisson DLM fits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .gam import GamFit, ModelSpec, SmoothSpec, Term, fit
from .panel import DailyPanel

MAX_LAG_LIMIT = 40


@dataclass(frozen=True)
class LagDesign:
    pollutant: str
    K: int
    matrix: np.ndarray
    aligned_rows: np.ndarray
    dropped_rows: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))


def build_lag_matrix(series, K: int, pollutant: str = "x", min_extra: int = 30) -> LagDesign:
    """Matrix of ``x[t - l]`` for ``l = 0..K`` on the days ``t`` where all lags exist.

    ``aligned_rows`` holds the (0-based) day indices kept; days whose lag
    window touches a missing value are listed in ``dropped_rows``.  The
    series must be longer than ``K + min_extra`` days.
    """
    x = np.asarray(series, dtype=float)
    K = int(K)
    if K < 0:
        raise InputError("maximum lag must be non-negative")
    if x.size <= K + min_extra:
        raise InputError(f"series of length {x.size} too short for maximum lag {K}")
    n = x.size
    full = np.column_stack([x[K - lag:n - lag] for lag in range(K + 1)])
    days = np.arange(K, n)
    ok = np.all(np.isfinite(full), axis=1)
    return LagDesign(pollutant, K, full[ok], days[ok], days[~ok])


@dataclass(frozen=True)
class DlmFit:
    base: GamFit
    pollutant: str
    K: int
    lag_betas: np.ndarray
    lag_cov: np.ndarray
    per_lag_p: np.ndarray
    time_df: int
    temp_df: int | None

    @property
    def lag_se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.lag_cov))

    @property
    def lag_names(self) -> list[str]:
        return [Term(self.pollutant, lag).name for lag in range(self.K + 1)]


def dlm_spec(pollutant: str, K: int, time_df: int, temp_df: int | None,
             stratum="total", temp_variable: str = "temp_mean") -> ModelSpec:
    smooths = [SmoothSpec("time", int(time_df))]
    if temp_df:
        smooths.append(SmoothSpec(temp_variable, int(temp_df)))
    return ModelSpec(
        parametric_terms=tuple(Term(pollutant, lag) for lag in range(K + 1)),
        smooth_terms=tuple(smooths), response=stratum,
    )


def fit_dlm(panel: DailyPanel, pollutant: str, K: int = 4, time_df: int = 30,
            temp_df: int | None = 3, stratum="total", exclude=None,
            scale: float | None = None) -> DlmFit:
    """Quasi-Poisson model with lags ``0..K`` of ``pollutant``, a time smooth and a temperature smooth.

    ``temp_df=None`` (or 0) leaves temperature out of the model.
    """
    if not 0 <= K <= MAX_LAG_LIMIT:
        raise InputError(f"maximum lag must be within 0..{MAX_LAG_LIMIT}")
    if panel.n <= K + 30:
        raise InputError(f"panel of {panel.n} days too short for maximum lag {K}")
    spec = dlm_spec(pollutant, K, time_df, temp_df, stratum)
    base = fit(spec, panel, exclude=exclude, scale=scale)
    return dlm_from_fit(base, pollutant, K, time_df, temp_df)


def dlm_from_fit(base: GamFit, pollutant: str, K: int, time_df: int, temp_df) -> DlmFit:
    idx = [base.index(Term(pollutant, lag).name) for lag in range(K + 1)]
    betas = base.coefficients[idx]
    cov = base.covariance[np.ix_(idx, idx)]
    return DlmFit(
        base=base, pollutant=pollutant, K=K, lag_betas=betas, lag_cov=cov,
        per_lag_p=base.p_values[idx], time_df=int(time_df),
        temp_df=int(temp_df) if temp_df else None,
    )


def cumulative_effect(dlm) -> tuple[float, float]:
    """Sum of the lag coefficients and its standard error ``sqrt(1' V 1)``.

    Accepts a :class:`DlmFit` or any object with ``lag_betas`` and ``lag_cov``.
    """
    betas = np.asarray(dlm.lag_betas, dtype=float)
    cov = np.asarray(dlm.lag_cov, dtype=float)
    ones = np.ones(betas.size)
    return float(betas.sum()), math.sqrt(max(float(ones @ cov @ ones), 0.0))


def lag_table(dlm: DlmFit, delimiter: str = "\t") -> str:
    from .gam import significance_stars

    lines = [delimiter.join(("lag", "estimate", "se", "p", "signif"))]
    for lag, (b, se, p) in enumerate(zip(dlm.lag_betas, dlm.lag_se, dlm.per_lag_p)):
        lines.append(delimiter.join((str(lag), f"{b:.5f}", f"{se:.5f}", f"{p:.4f}", significance_stars(p))))
    total, total_se = cumulative_effect(dlm)
    lines.append(f"# cumulative_beta={total:.6g}")
    lines.append(f"# cumulative_se={total_se:.6g}")
    lines.append(f"# time_df={dlm.time_df}")
    lines.append(f"# temp_df={dlm.temp_df if dlm.temp_df else 'none'}")
    lines.append(f"# dispersion={dlm.base.dispersion:.6g}")
    lines.append(f"# dropped_rows={dlm.base.meta.get('dropped_rows', 0)}")
    return "\n".join(lines) + "\n"

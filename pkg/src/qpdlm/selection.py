"""Choosing the degrees of freedom of the time smooth.

Two strategies are provided:

* exposure-based: Gaussian least-squares models of the pollutant on a time
  smooth, scored by GCV (or Gaussian AIC);
* outcome-based: quasi-Poisson models of the counts, scored by QAIC (or
  QBIC) with the dispersion fixed at the richest candidate's estimate, plus
  residual PACF and Ljung-Box diagnostics at the chosen df.

Scores are computed per candidate in grid order; ties go to the smaller df.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InputError, NumericalError
from .gam import GamFit, ModelSpec, SmoothSpec, Term, fit, gcv_score, qaic, qbic
from .panel import DailyPanel
from .splines import df_per_year_to_total

DEFAULT_GRID = tuple(float(d) for d in range(1, 17))
WHITE_NOISE_LAGS = 25


# ---------------------------------------------------------------------------
# chi-square tail via the regularized incomplete gamma function


def _gamma_p_series(a: float, x: float) -> float:
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(10_000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * 1e-17:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_q_contfrac(a: float, x: float) -> float:
    # modified Lentz evaluation of the continued fraction for Q(a, x)
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10_000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def gamma_q(a: float, x: float) -> float:
    """Upper regularized incomplete gamma ``Q(a, x) = Gamma(a, x) / Gamma(a)``."""
    if a <= 0:
        raise InputError("shape parameter must be positive")
    if x <= 0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gamma_p_series(a, x)
    return _gamma_q_contfrac(a, x)


def chi2_sf(q: float, dof: float) -> float:
    return gamma_q(dof / 2.0, q / 2.0)


# ---------------------------------------------------------------------------
# residual diagnostics


def autocorrelation(x, max_lag: int) -> np.ndarray:
    """Sample autocorrelations at lags ``0..max_lag`` (divide-by-n convention)."""
    x = np.asarray(x, dtype=float)
    d = x - x.mean()
    denom = float(d @ d)
    if denom == 0:
        raise NumericalError("zero-variance residuals: autocorrelation undefined")
    n = x.size
    return np.array([float(d[: n - k] @ d[k:]) / denom for k in range(max_lag + 1)])


def pacf(residuals, max_lag: int) -> np.ndarray:
    """Partial autocorrelations at lags ``1..max_lag`` by the Durbin-Levinson recursion.

    Coefficients are clamped to [-1, 1]; once the prediction error variance
    vanishes the remaining lags are reported as 0.
    """
    x = np.asarray(residuals, dtype=float)
    if x.size <= max_lag + 10:
        raise InputError(f"PACF to lag {max_lag} needs more than {max_lag + 10} values")
    r = autocorrelation(x, max_lag)
    out = np.zeros(max_lag)
    phi = np.zeros(0)
    v = 1.0
    for k in range(1, max_lag + 1):
        if v <= 1e-14:
            break
        num = r[k] - float(phi @ r[k - 1:0:-1]) if k > 1 else r[1]
        a = min(1.0, max(-1.0, num / v))
        out[k - 1] = a
        phi = np.r_[phi - a * phi[::-1], a]
        v *= 1.0 - a * a
    return out


def ljung_box(residuals, n_lags: int = WHITE_NOISE_LAGS) -> tuple[float, float]:
    """Ljung-Box portmanteau statistic and its chi-square(n_lags) p-value."""
    x = np.asarray(residuals, dtype=float)
    n = x.size
    if n <= n_lags + 10:
        raise InputError(f"Ljung-Box with {n_lags} lags needs more than {n_lags + 10} values")
    r = autocorrelation(x, n_lags)[1:]
    lags = np.arange(1, n_lags + 1)
    q = float(n * (n + 2) * np.sum(r**2 / (n - lags)))
    return q, chi2_sf(q, n_lags)


# ---------------------------------------------------------------------------
# selection


@dataclass(frozen=True)
class SelectionResult:
    strategy: str
    criterion: str
    candidate_dfs_per_year: tuple[float, ...]
    candidate_total_dfs: tuple[int, ...]
    scores: tuple[float, ...]
    chosen_df_per_year: float
    chosen_total_df: int
    diagnostics: dict = field(default_factory=dict)

    def table(self, delimiter: str = "\t") -> str:
        lines = [delimiter.join(("df_per_year", "total_df", self.criterion, "chosen"))]
        for dfy, tot, sc in zip(self.candidate_dfs_per_year, self.candidate_total_dfs, self.scores):
            mark = "*" if dfy == self.chosen_df_per_year else ""
            lines.append(delimiter.join((f"{dfy:g}", str(tot), f"{sc:.8g}", mark)))
        lines.append(f"# strategy={self.strategy}")
        lines.append(f"# chosen_df_per_year={self.chosen_df_per_year:g}")
        lines.append(f"# chosen_total_df={self.chosen_total_df}")
        for key, value in self.diagnostics.items():
            if isinstance(value, (list, tuple)):
                value = ",".join(f"{v:.4f}" for v in value)
            elif isinstance(value, float):
                value = f"{value:.6g}"
            lines.append(f"# {key}={value}")
        return "\n".join(lines) + "\n"


def parse_grid(text: str) -> tuple[float, ...]:
    """``"1:16"`` -> 1..16, ``"1:16:0.5"`` with a step, or a comma list."""
    text = text.strip()
    try:
        if ":" in text:
            parts = [float(p) for p in text.split(":")]
            start, stop = parts[0], parts[1]
            step = parts[2] if len(parts) > 2 else 1.0
            if step <= 0 or stop < start:
                raise ValueError
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
            return tuple(round(start + i * step, 10) for i in range(count))
        return _normalize_grid([float(p) for p in text.split(",") if p.strip()])
    except ValueError:
        raise InputError(f"cannot parse df grid {text!r}") from None


def _normalize_grid(candidates: Sequence[float]) -> tuple[float, ...]:
    grid = tuple(sorted({float(c) for c in candidates}))
    if not grid:
        raise InputError("candidate df grid is empty")
    if any(c <= 0 for c in grid):
        raise InputError("candidate df per year must be positive")
    return grid


def _argmin_first(scores: Sequence[float]) -> int:
    best = None
    for i, s in enumerate(scores):
        if np.isfinite(s) and (best is None or s < scores[best]):
            best = i
    if best is None:
        raise NumericalError("no candidate model could be fitted")
    return best


def _map(fn, items, threads: int):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _safe_fit(spec: ModelSpec, panel: DailyPanel, exclude) -> GamFit | None:
    try:
        return fit(spec, panel, exclude=exclude)
    except NumericalError:
        return None


def gaussian_aic(fit_: GamFit) -> float:
    n = fit_.n_used
    return n * math.log(fit_.deviance / n) + 2.0 * (fit_.edf + 1)


def select_df_exposure(panel: DailyPanel, pollutant: str, candidates=DEFAULT_GRID,
                       temp_df: int | None = None, criterion: str = "gcv",
                       exclude=None, threads: int = 1) -> SelectionResult:
    """Pick the time-smooth df that best predicts the pollutant series.

    The outcome series plays no part.
    """
    if criterion not in ("gcv", "aic"):
        raise InputError(f"unknown exposure criterion {criterion!r}")
    grid = _normalize_grid(candidates)
    if panel.n < 730:
        raise InputError("exposure-based selection needs at least two years of data")
    totals = tuple(df_per_year_to_total(c, panel.n) for c in grid)

    def one(total):
        smooths = [SmoothSpec("time", total)]
        if temp_df:
            smooths.append(SmoothSpec("temp_mean", int(temp_df)))
        spec = ModelSpec(smooth_terms=tuple(smooths), response=pollutant, family="gaussian")
        f = _safe_fit(spec, panel, exclude)
        if f is None:
            return math.inf
        return gcv_score(f) if criterion == "gcv" else gaussian_aic(f)

    scores = tuple(_map(one, totals, threads))
    best = _argmin_first(scores)
    return SelectionResult(
        strategy="exposure", criterion=criterion, candidate_dfs_per_year=grid,
        candidate_total_dfs=totals, scores=scores, chosen_df_per_year=grid[best],
        chosen_total_df=totals[best], diagnostics={"pollutant": pollutant},
    )


def select_df_outcome(panel: DailyPanel, stratum="total", pollutant: str | None = None,
                      K: int = 4, candidates=DEFAULT_GRID, criterion: str = "qaic",
                      selection_model: str = "trend-only", temp_df: int | None = None,
                      exclude=None, threads: int = 1,
                      white_noise_lags: int = WHITE_NOISE_LAGS) -> SelectionResult:
    """Pick the time-smooth df by quasi-likelihood fit to the outcome counts.

    ``selection_model="with-pollutant"`` includes lags ``0..K`` of the
    pollutant in every candidate model; ``"trend-only"`` omits it.
    """
    if criterion not in ("qaic", "qbic", "bic"):
        raise InputError(f"unknown outcome criterion {criterion!r}")
    if selection_model not in ("trend-only", "with-pollutant"):
        raise InputError(f"unknown selection model {selection_model!r}")
    if selection_model == "with-pollutant" and not pollutant:
        raise InputError("with-pollutant selection needs a pollutant")
    grid = _normalize_grid(candidates)
    totals = tuple(df_per_year_to_total(c, panel.n) for c in grid)
    terms = ()
    if selection_model == "with-pollutant":
        terms = tuple(Term(pollutant, lag) for lag in range(K + 1))

    def one(total):
        smooths = [SmoothSpec("time", total)]
        if temp_df:
            smooths.append(SmoothSpec("temp_mean", int(temp_df)))
        spec = ModelSpec(parametric_terms=terms, smooth_terms=tuple(smooths), response=stratum)
        f = _safe_fit(spec, panel, exclude)
        return f if f is not None and f.converged else None

    fits = _map(one, totals, threads)
    usable = [f for f in fits if f is not None]
    if not usable:
        raise NumericalError("no candidate model could be fitted")
    # dispersion from the richest fitted candidate, shared by all scores
    phi_ref = max(usable, key=lambda f: f.edf).dispersion
    score_fn = qaic if criterion == "qaic" else qbic
    scores = tuple(score_fn(f, phi_ref) if f is not None else math.inf for f in fits)
    best = _argmin_first(scores)
    chosen = fits[best]
    diagnostics = {
        "selection_model": selection_model,
        "reference_dispersion": float(phi_ref),
        "dispersion_at_chosen": float(chosen.dispersion),
    }
    resid = chosen.pearson_residuals
    if resid.size > white_noise_lags + 10 and np.ptp(resid) > 0:
        stat, pval = ljung_box(resid, white_noise_lags)
        diagnostics["pacf"] = tuple(float(v) for v in pacf(resid, white_noise_lags))
        diagnostics["ljung_box_statistic"] = stat
        diagnostics["ljung_box_p"] = pval
        diagnostics["white_noise_lags"] = white_noise_lags
    return SelectionResult(
        strategy="outcome", criterion="qbic" if criterion == "bic" else criterion,
        candidate_dfs_per_year=grid, candidate_total_dfs=totals, scores=scores,
        chosen_df_per_year=grid[best], chosen_total_df=totals[best], diagnostics=diagnostics,
    )

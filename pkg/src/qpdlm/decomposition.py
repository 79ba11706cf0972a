"""Three-timescale decomposition, linear trends and seasonal spline fits.

Band edges are counted in cycles over the whole record, not per year: the
long-term band carries the mean and frequencies of at most one cycle, the
seasonal band 2..14 cycles and the short-term band everything faster.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import InputError, NumericalError
from .splines import df_per_year_to_total, make_natural_basis

LONG_TERM_MAX_CYCLES = 1
SEASONAL_MAX_CYCLES = 14


@dataclass(frozen=True)
class DecompositionResult:
    long_term: np.ndarray
    seasonal: np.ndarray
    short_term: np.ndarray
    cutoffs: tuple[int, int] = (LONG_TERM_MAX_CYCLES, SEASONAL_MAX_CYCLES)

    def total(self) -> np.ndarray:
        return self.long_term + self.seasonal + self.short_term


@dataclass(frozen=True)
class TrendFit:
    slope: float
    intercept: float
    slope_se: float
    p_value: float
    intercept_se: float = math.nan
    intercept_p: float = math.nan


def three_scale_decomposition(series, long_max: int = LONG_TERM_MAX_CYCLES,
                              seasonal_max: int = SEASONAL_MAX_CYCLES) -> DecompositionResult:
    """Split a complete series into long-term, seasonal and short-term Fourier bands."""
    x = np.asarray(series, dtype=float)
    if np.any(~np.isfinite(x)):
        raise InputError("series has missing values; impute before decomposing")
    if x.size < 730:
        raise InputError("decomposition needs at least 730 daily values")
    n = x.size
    spec = np.fft.rfft(x)
    cycles = np.arange(spec.size)
    bands = []
    for lo, hi in ((0, long_max), (long_max + 1, seasonal_max), (seasonal_max + 1, spec.size)):
        part = np.where((cycles >= lo) & (cycles <= hi), spec, 0.0)
        bands.append(np.fft.irfft(part, n))
    return DecompositionResult(*bands, cutoffs=(long_max, seasonal_max))


def linear_trend(series, time_index=None) -> TrendFit:
    """OLS of the series on the day index with classical SEs and two-sided t p-values."""
    y = np.asarray(series, dtype=float)
    t = np.arange(y.size, dtype=float) if time_index is None else np.asarray(time_index, dtype=float)
    ok = np.isfinite(y) & np.isfinite(t)
    y, t = y[ok], t[ok]
    if y.size < 30:
        raise InputError("linear trend needs at least 30 observed points")
    tc = t - t.mean()
    sxx = float(tc @ tc)
    if sxx == 0:
        raise NumericalError("zero-variance time index")
    slope = float(tc @ (y - y.mean())) / sxx
    intercept = float(y.mean() - slope * t.mean())
    resid = y - intercept - slope * t
    dof = y.size - 2
    s2 = float(resid @ resid) / dof
    slope_se = math.sqrt(s2 / sxx)
    int_se = math.sqrt(s2 * (1.0 / y.size + t.mean() ** 2 / sxx))

    def pval(est, se):
        if se == 0:
            return 0.0 if est != 0 else 1.0
        return float(2.0 * stats.t.sf(abs(est / se), dof))

    return TrendFit(slope, intercept, slope_se, pval(slope, slope_se), int_se, pval(intercept, int_se))


def seasonal_spline_fit(series, df_per_year: float = 2.0, with_basis: bool = False):
    """Least-squares natural spline of time with ``df_per_year`` df per year of record.

    Missing days are skipped in the fit but receive fitted values.
    """
    y = np.asarray(series, dtype=float)
    if y.size < 365:
        raise InputError("seasonal spline fit needs at least one year of data")
    total = df_per_year_to_total(df_per_year, y.size)
    t = np.arange(y.size, dtype=float)
    bdef, bm = make_natural_basis(t, total, variable_name="time")
    X = np.column_stack([np.ones(y.size), bm.values])
    ok = np.isfinite(y)
    coef, *_ = np.linalg.lstsq(X[ok], y[ok], rcond=None)
    fitted = X @ coef
    return (fitted, bm) if with_basis else fitted

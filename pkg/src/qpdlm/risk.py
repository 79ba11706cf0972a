"""Relative risks and percent variations from log-linear coefficients."""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.stats import norm

from .errors import InputError

DEFAULT_DELTA_X = 10.0


@dataclass(frozen=True)
class RiskEstimate:
    delta_x: float
    rr: float
    percent: float
    ci_low: float
    ci_high: float
    level: float
    source: str
    beta: float = math.nan
    se: float = math.nan
    percent_se: float = math.nan
    lag: int | None = None


def relative_risk(beta: float, delta_x: float = DEFAULT_DELTA_X) -> float:
    return math.exp(beta * delta_x)


def percent_variation(beta: float, delta_x: float = DEFAULT_DELTA_X) -> float:
    return (relative_risk(beta, delta_x) - 1.0) * 100.0


def rr_interval(beta: float, se: float, delta_x: float = DEFAULT_DELTA_X,
                level: float = 0.95) -> tuple[float, float]:
    """Wald interval ``exp((beta -/+ z * se) * delta_x)``."""
    if not 0.0 < level < 1.0:
        raise InputError("confidence level must lie strictly between 0 and 1")
    if se < 0:
        raise InputError("standard error must be non-negative")
    z = float(norm.ppf(0.5 + level / 2.0))
    lo = math.exp((beta - z * se) * delta_x)
    hi = math.exp((beta + z * se) * delta_x)
    return min(lo, hi), max(lo, hi)


def percent_se(beta: float, se: float, delta_x: float = DEFAULT_DELTA_X) -> float:
    """Delta-method standard error of the percent variation."""
    return 100.0 * abs(delta_x) * math.exp(beta * delta_x) * se


def risk_estimate(beta: float, se: float, delta_x: float = DEFAULT_DELTA_X,
                  level: float = 0.95, source: str = "cumulative",
                  lag: int | None = None) -> RiskEstimate:
    lo, hi = rr_interval(beta, se, delta_x, level)
    return RiskEstimate(
        delta_x=delta_x, rr=relative_risk(beta, delta_x), percent=percent_variation(beta, delta_x),
        ci_low=lo, ci_high=hi, level=level, source=source, beta=beta, se=se,
        percent_se=percent_se(beta, se, delta_x), lag=lag,
    )


def dlm_risks(dlm, delta_x: float = DEFAULT_DELTA_X, level: float = 0.95) -> list[RiskEstimate]:
    """Per-lag estimates followed by the cumulative one."""
    from .lags import cumulative_effect

    out = [
        risk_estimate(float(b), float(s), delta_x, level, "single-lag", lag)
        for lag, (b, s) in enumerate(zip(dlm.lag_betas, dlm.lag_se))
    ]
    total, total_se = cumulative_effect(dlm)
    out.append(risk_estimate(total, total_se, delta_x, level, "cumulative"))
    return out

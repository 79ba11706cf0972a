"""Synthetic daily panels with known truth and Monte-Carlo comparison of df-selection strategies.

Each replicate draws from its own random stream derived from
``(seed, replicate index)``, so serial and threaded runs agree exactly.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy.stats import norm

from .errors import InputError, NumericalError
from .lags import cumulative_effect, fit_dlm
from .panel import AGE_BANDS, SEXES, TOTAL, DailyPanel
from .selection import DEFAULT_GRID, select_df_exposure, select_df_outcome
from .splines import DAYS_PER_YEAR, df_per_year_to_total, make_natural_basis, total_to_df_per_year

# daily means per stratum; the female <65 / 65-75 split is an arbitrary choice
DEFAULT_STRATUM_MEANS = {
    "male_<65": 31.72, "male_65-75": 14.10, "male_>75": 9.59,
    "female_<65": 18.00, "female_65-75": 13.18, "female_>75": 12.66,
}
PM10_MODEL2_BETAS = (0.00445, -0.00148, -0.00116, -0.00002, -0.00059)
STRATEGIES = ("exposure", "outcome", "fixed")


@dataclass(frozen=True)
class SimulationConfig:
    n_days: int = 3650
    start_date: str = "2010-01-01"
    beta_true: tuple = PM10_MODEL2_BETAS
    baseline_mean: float = 99.25
    trend_shape: str = "smooth-spline"
    trend_df_per_year: float = 2.0
    trend_amplitude: float = 0.08
    seasonal_amplitude: float = 0.08
    seasonal_harmonics: int = 1
    confounding_strength: float = 0.0
    confounder_df_per_year: float = 12.0
    confounder_log_effect: float = 0.0
    dispersion_phi: float = 5.0
    pollutant: str = "PM10"
    pollutant_mean: float = 26.02
    pollutant_sd: float = 15.32
    pollutant_ar: float = 0.6
    temp_mean: float = 20.72
    temp_sd: float = 3.43
    temp_log_effect: float = 0.0
    stratum_means: dict = field(default_factory=lambda: dict(DEFAULT_STRATUM_MEANS))
    seed: int = 42
    # analysis settings
    max_lag: int = 4
    grid: tuple = DEFAULT_GRID
    fit_temp_df: int | None = None
    selection_model: str = "trend-only"
    outcome_criterion: str = "qaic"
    fixed_time_df_per_year: float | None = None
    level: float = 0.95
    description: str = ""

    def __post_init__(self):
        object.__setattr__(self, "beta_true", tuple(float(b) for b in self.beta_true))
        object.__setattr__(self, "grid", tuple(float(g) for g in self.grid))
        if self.n_days < 730:
            raise InputError("simulation needs n_days >= 730")
        if self.dispersion_phi < 1:
            raise InputError("dispersion_phi must be >= 1")
        if not abs(self.pollutant_ar) < 1:
            raise InputError("pollutant AR(1) coefficient must satisfy |ar| < 1")
        if not 0 <= self.confounding_strength < 1:
            raise InputError("confounding_strength is a correlation in [0, 1)")
        if self.trend_shape not in ("none", "linear", "smooth-spline"):
            raise InputError(f"unknown trend shape {self.trend_shape!r}")
        if len(self.beta_true) - 1 > self.max_lag:
            raise InputError("beta_true has more lags than max_lag")

    @property
    def beta_true_sum(self) -> float:
        return float(sum(self.beta_true))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["beta_true"] = list(self.beta_true)
        d["grid"] = list(self.grid)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "SimulationConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InputError(f"unknown simulation config keys: {', '.join(sorted(unknown))}")
        return cls(**data)

    def replace(self, **changes) -> "SimulationConfig":
        return dataclasses.replace(self, **changes)


def load_scenario(name_or_path: str) -> SimulationConfig:
    """Load a bundled scenario (``A``, ``B``, ``C``) or a JSON config file."""
    if os.path.exists(name_or_path):
        with open(name_or_path, encoding="utf-8") as fh:
            return SimulationConfig.from_dict(json.load(fh))
    ref = resources.files("qpdlm") / "scenarios" / f"{name_or_path}.json"
    if not ref.is_file():
        raise InputError(f"unknown scenario {name_or_path!r} (bundled: A, B, C)")
    return SimulationConfig.from_dict(json.loads(ref.read_text(encoding="utf-8")))


def replicate_rng(seed: int, replicate: int | None = None) -> np.random.Generator:
    key = () if replicate is None else (int(replicate),)
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))


def _standardize(v: np.ndarray) -> np.ndarray:
    sd = v.std()
    return (v - v.mean()) / sd if sd > 0 else v * 0.0


def _random_smooth(t: np.ndarray, df_per_year: float, rng) -> np.ndarray:
    total = df_per_year_to_total(df_per_year, t.size)
    _, bm = make_natural_basis(t, total, variable_name="time")
    return _standardize(bm.values @ rng.standard_normal(total))


def _ar1(n: int, rho: float, rng) -> np.ndarray:
    eps = rng.standard_normal(n)
    out = np.empty(n)
    out[0] = eps[0]
    scale = math.sqrt(1.0 - rho * rho)
    for i in range(1, n):
        out[i] = rho * out[i - 1] + scale * eps[i]
    return out


def draw_counts(mu: np.ndarray, phi: float, rng) -> np.ndarray:
    """Counts with mean ``mu`` and variance ``phi * mu`` (negative binomial; Poisson at phi=1)."""
    if phi == 1:
        return rng.poisson(mu).astype(float)
    size = mu / (phi - 1.0)
    return rng.negative_binomial(size, size / (size + mu)).astype(float)


def generate_panel(config: SimulationConfig, seed=None, replicate: int | None = None):
    """Draw one synthetic panel.

    Returns ``(panel, truth)`` where ``truth`` records the log-mean components,
    the confounder curve and the true lag coefficients.
    """
    seed = config.seed if seed is None else seed
    rng = replicate_rng(seed, replicate)
    n = config.n_days
    K = config.max_lag
    lags = len(config.beta_true)
    t = np.arange(n, dtype=float)

    # time structure, all on the panel calendar
    if config.trend_shape == "smooth-spline":
        trend = config.trend_amplitude * _random_smooth(t, config.trend_df_per_year, rng)
    elif config.trend_shape == "linear":
        trend = config.trend_amplitude * (t / (n - 1) - 0.5)
    else:
        trend = np.zeros(n)
    seasonal = np.zeros(n)
    for h in range(1, config.seasonal_harmonics + 1):
        seasonal += config.seasonal_amplitude / h * np.cos(2 * np.pi * h * t / DAYS_PER_YEAR)
    confounder = _random_smooth(t, config.confounder_df_per_year, rng)

    # pollutant: standardized mix of the confounder and AR(1) noise; K burn-in days precede day 0
    rho_c = config.confounding_strength
    noise = _ar1(n + K, config.pollutant_ar, rng)
    conf_ext = np.r_[np.full(K, confounder[0]), confounder]
    z = rho_c * conf_ext + math.sqrt(1.0 - rho_c**2) * noise
    x_ext = np.clip(config.pollutant_mean + config.pollutant_sd * z, 0.0, None)

    temp_noise = _ar1(n, 0.7, rng)
    # unit-variance mix: annual cycle (variance 1/2) plus AR(1) noise (variance 1/2)
    temp = config.temp_mean + config.temp_sd * (
        np.cos(2 * np.pi * (t - 200) / DAYS_PER_YEAR) + math.sqrt(0.5) * temp_noise
    )
    temp_effect = config.temp_log_effect * ((temp - config.temp_mean) / config.temp_sd) ** 2

    alpha = math.log(config.baseline_mean) - config.beta_true_sum * config.pollutant_mean
    exposure = np.zeros(n)
    for lag, beta in enumerate(config.beta_true):
        exposure += beta * x_ext[K - lag:K - lag + n]
    log_mu = alpha + exposure + trend + seasonal + config.confounder_log_effect * confounder + temp_effect
    bad = np.flatnonzero(~np.isfinite(log_mu) | (log_mu > 700))
    if bad.size:
        raise InputError(f"infeasible mean on simulated day {int(bad[0])}")
    mu = np.exp(log_mu)
    total = draw_counts(mu, config.dispersion_phi, rng)

    labels = [f"{s}_{a}" for s in SEXES for a in AGE_BANDS]
    means = np.array([config.stratum_means.get(lab, 0.0) for lab in labels])
    if means.sum() <= 0:
        raise InputError("stratum means must sum to a positive value")
    shares = means / means.sum()
    strata = np.array([rng.multinomial(int(c), shares) for c in total], dtype=float)

    start = np.datetime64(config.start_date, "D")
    dates = np.arange(start, start + n)
    outcomes = {TOTAL: total}
    outcomes.update({lab: strata[:, j] for j, lab in enumerate(labels)})
    panel = DailyPanel(
        dates=dates, outcomes=outcomes, pollutants={config.pollutant: x_ext[K:]},
        meteo={"temp_mean": temp}, meta={"synthetic": True, "seed": int(seed)},
    )
    truth = {
        "alpha": alpha, "beta_true": config.beta_true, "beta_true_sum": config.beta_true_sum,
        "mu": mu, "trend": trend, "seasonal": seasonal, "confounder": confounder,
        "lags": lags, "stratum_shares": dict(zip(labels, shares.tolist())),
    }
    return panel, truth


# ---------------------------------------------------------------------------
# experiments


@dataclass(frozen=True)
class StrategySummary:
    strategy: str
    n_used: int
    mean_estimate: float
    mean_bias: float
    bias_mc_se: float
    rmse: float
    coverage: float
    mean_df_per_year: float
    mean_se: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class SimulationReport:
    config: dict
    n_replicates: int
    n_excluded: int
    strategies: dict
    comparison: dict
    replicates: list

    def to_dict(self) -> dict:
        return {
            "n_replicates": self.n_replicates,
            "n_excluded": self.n_excluded,
            "strategies": {k: v.to_dict() for k, v in self.strategies.items()},
            "comparison": self.comparison,
            "config": self.config,
            "replicates": self.replicates,
            "note": "scenario designs are synthetic and chosen for this tool",
        }

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), indent=2, sort_keys=True) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def run_replicate(config: SimulationConfig, replicate: int,
                  strategies=("exposure", "outcome")) -> dict:
    """One replicate: generate, select df with each strategy, fit the DLM, score the estimate."""
    panel, truth = generate_panel(config, config.seed, replicate)
    pol, K = config.pollutant, config.max_lag
    z = float(norm.ppf(0.5 + config.level / 2))
    record = {"replicate": replicate}
    for strategy in strategies:
        try:
            if strategy == "exposure":
                sel = select_df_exposure(panel, pol, config.grid, temp_df=config.fit_temp_df)
                total_df, dfy = sel.chosen_total_df, sel.chosen_df_per_year
            elif strategy == "outcome":
                sel = select_df_outcome(
                    panel, TOTAL, pol, K, config.grid, criterion=config.outcome_criterion,
                    selection_model=config.selection_model, temp_df=config.fit_temp_df,
                )
                total_df, dfy = sel.chosen_total_df, sel.chosen_df_per_year
            elif strategy == "fixed":
                dfy = config.fixed_time_df_per_year
                if dfy is None:
                    dfy = config.trend_df_per_year
                total_df = df_per_year_to_total(dfy, panel.n)
            else:
                raise InputError(f"unknown strategy {strategy!r}")
            dlm = fit_dlm(panel, pol, K, total_df, config.fit_temp_df, TOTAL)
            if not dlm.base.converged:
                raise NumericalError("DLM fit did not converge")
        except NumericalError as exc:
            record[strategy] = {"ok": False, "error": str(exc)}
            continue
        est, se = cumulative_effect(dlm)
        err = est - truth["beta_true_sum"]
        record[strategy] = {
            "ok": True, "df_per_year": float(dfy), "total_df": int(total_df),
            "estimate": est, "se": se, "error": err, "covered": bool(abs(err) <= z * se),
            "dispersion": float(dlm.base.dispersion),
        }
    return record


def summarize(records: list, strategies, beta_true_sum: float) -> tuple[dict, dict, int]:
    ok = [r for r in records if all(r[s]["ok"] for s in strategies)]
    excluded = len(records) - len(ok)
    out = {}
    errors = {}
    for s in strategies:
        e = np.array([r[s]["error"] for r in ok])
        est = np.array([r[s]["estimate"] for r in ok])
        se = np.array([r[s]["se"] for r in ok])
        errors[s] = e
        m = len(ok)
        out[s] = StrategySummary(
            strategy=s, n_used=m,
            mean_estimate=float(est.mean()) if m else math.nan,
            mean_bias=float(e.mean()) if m else math.nan,
            bias_mc_se=float(e.std(ddof=1) / math.sqrt(m)) if m > 1 else math.nan,
            rmse=float(math.sqrt(np.mean(e**2))) if m else math.nan,
            coverage=float(np.mean([r[s]["covered"] for r in ok])) if m else math.nan,
            mean_df_per_year=float(np.mean([r[s]["df_per_year"] for r in ok])) if m else math.nan,
            mean_se=float(se.mean()) if m else math.nan,
        )
    comparison = {}
    if {"exposure", "outcome"} <= set(strategies) and len(ok) > 1:
        eo, ee = errors["outcome"], errors["exposure"]
        so, se_ = np.sign(eo.mean()) or 1.0, np.sign(ee.mean()) or 1.0
        # paired statistic for |mean bias_outcome| - |mean bias_exposure|
        d = so * eo - se_ * ee
        dfo = np.array([r["outcome"]["df_per_year"] for r in ok])
        dfe = np.array([r["exposure"]["df_per_year"] for r in ok])
        dd = dfe - dfo
        comparison = {
            "abs_bias_difference": float(d.mean()),
            "abs_bias_difference_z": _z(d),
            "df_per_year_difference": float(dd.mean()),
            "df_per_year_difference_z": _z(dd),
            "bias_relative_to_truth": {
                s: (float(errors[s].mean() / beta_true_sum) if beta_true_sum else None)
                for s in ("exposure", "outcome")
            },
        }
    return out, comparison, excluded


def _z(d: np.ndarray) -> float:
    sd = d.std(ddof=1)
    if sd == 0:
        return math.inf if d.mean() > 0 else (-math.inf if d.mean() < 0 else 0.0)
    return float(d.mean() / (sd / math.sqrt(d.size)))


def bias_experiment(config: SimulationConfig, n_reps: int = 200, threads: int = 1,
                    strategies=("exposure", "outcome"), min_reps: int = 50) -> SimulationReport:
    """Monte-Carlo bias, RMSE and CI coverage of the cumulative lag effect per strategy."""
    if n_reps < min_reps:
        raise InputError(f"bias experiment needs at least {min_reps} replicates")
    strategies = tuple(strategies)

    def one(rep):
        return run_replicate(config, rep, strategies)

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(one, range(n_reps)))
    else:
        records = [one(r) for r in range(n_reps)]
    summaries, comparison, excluded = summarize(records, strategies, config.beta_true_sum)
    return SimulationReport(
        config=config.to_dict(), n_replicates=n_reps, n_excluded=excluded,
        strategies=summaries, comparison=comparison, replicates=records,
    )


def empirical_pollutant_ar(series) -> float:
    x = np.asarray(series, dtype=float)
    d = x - x.mean()
    return float(d[:-1] @ d[1:] / (d @ d))


def chosen_df_to_per_year(total_df: int, n_days: int) -> float:
    return total_to_df_per_year(total_df, n_days)

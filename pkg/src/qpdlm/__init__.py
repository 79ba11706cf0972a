"""Quasi-Poisson distributed-lag time-series regression for air pollution and health.

Fixed-df natural-spline smooths, exposure- versus outcome-based selection of
the time-smooth df, relative-risk conversion, three-timescale decomposition
and a simulation harness for the bias of each selection strategy.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConvergenceError,
    InputError,
    InsufficientSupportError,
    NumericalError,
    PanelError,
    RankDeficiencyError,
)
from .panel import (  # noqa: E402
    DailyPanel,
    OutlierMask,
    SeriesStats,
    describe_panel,
    descriptive_stats,
    detect_outliers,
    impute_missing,
    load_panel,
    remove_outliers,
    stratify,
)
from .splines import BasisDef, BasisMatrix, df_per_year_to_total, evaluate_basis, make_natural_basis  # noqa: E402
from .gam import GamFit, ModelSpec, SmoothSpec, Term, dispersion, fit, gcv_score, qaic, qbic  # noqa: E402
from .lags import DlmFit, LagDesign, build_lag_matrix, cumulative_effect, fit_dlm  # noqa: E402
from .risk import RiskEstimate, percent_variation, relative_risk, rr_interval  # noqa: E402
from .selection import SelectionResult, ljung_box, pacf, select_df_exposure, select_df_outcome  # noqa: E402
from .decomposition import (  # noqa: E402
    DecompositionResult,
    TrendFit,
    linear_trend,
    seasonal_spline_fit,
    three_scale_decomposition,
)
from .simulation import SimulationConfig, SimulationReport, bias_experiment, generate_panel  # noqa: E402

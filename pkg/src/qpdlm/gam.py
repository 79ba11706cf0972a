"""Quasi-Poisson log-link regression with fixed-df spline smooths.

Smooth terms are natural cubic regression splines of fixed dimension, so a
model is an ordinary GLM on an expanded design and is fitted by iteratively
reweighted least squares.  The effective degrees of freedom equal the number
of estimated coefficients.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg, stats

from .errors import InputError, InsufficientSupportError, NumericalError, RankDeficiencyError
from .panel import DailyPanel, parse_stratum, stratify
from .splines import BasisDef, make_natural_basis

FAMILIES = ("quasipoisson", "gaussian")
TIME_VARIABLES = ("time", "time_index")
DEVIANCE_TOL = 1e-9
MAX_ITER = 100
MAX_HALVINGS = 10
RANK_TOL = 1e-12
ETA_MAX = 700.0


@dataclass(frozen=True)
class Term:
    variable: str
    lag: int = 0

    @property
    def name(self) -> str:
        return f"{self.variable}_lag{self.lag}" if self.lag else self.variable


@dataclass(frozen=True)
class SmoothSpec:
    variable: str
    df: int
    basis: str = "natural-cubic"

    def __post_init__(self):
        if int(self.df) < 1:
            raise InputError(f"smooth of {self.variable!r}: df must be at least 1")
        if self.basis != "natural-cubic":
            raise InputError(f"unsupported basis {self.basis!r}")


@dataclass(frozen=True)
class ModelSpec:
    parametric_terms: tuple = ()
    smooth_terms: tuple = ()
    response: str = "total"
    family: str = "quasipoisson"
    stratum_indicators: tuple = ()

    def __post_init__(self):
        terms = tuple(t if isinstance(t, Term) else Term(str(t)) for t in self.parametric_terms)
        object.__setattr__(self, "parametric_terms", terms)
        object.__setattr__(self, "smooth_terms", tuple(self.smooth_terms))
        names = [t.name for t in terms] + [f"s({s.variable})" for s in self.smooth_terms]
        if "intercept" in names:
            raise InputError("the intercept is implicit; do not list it as a term")
        dupes = {n for n in names if names.count(n) > 1}
        if dupes:
            raise InputError(f"duplicate term names: {', '.join(sorted(dupes))}")
        if self.family not in FAMILIES:
            raise InputError(f"unknown family {self.family!r}")


@dataclass(frozen=True)
class GamFit:
    coefficients: np.ndarray
    covariance: np.ndarray
    column_names: tuple[str, ...]
    fitted_mu: np.ndarray
    pearson_residuals: np.ndarray
    deviance_residuals: np.ndarray
    dispersion: float
    edf: int
    deviance: float
    gcv: float
    qaic: float
    converged: bool
    n_used: int
    n_iter: int
    family: str = "quasipoisson"
    scale: float = float("nan")
    unscaled_covariance: np.ndarray = field(default=None, repr=False)
    rows: np.ndarray = field(default=None, repr=False)
    basis_defs: dict = field(default_factory=dict, repr=False)
    meta: dict = field(default_factory=dict, repr=False)

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    @property
    def t_values(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.coefficients / self.se

    @property
    def p_values(self) -> np.ndarray:
        return two_sided_t_pvalue(self.t_values, self.n_used - self.edf)

    def index(self, name: str) -> int:
        return self.column_names.index(name)

    def coef(self, name: str) -> float:
        return float(self.coefficients[self.index(name)])


def two_sided_t_pvalue(t, dof) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    p = 2.0 * stats.t.sf(np.abs(t), dof)
    return np.where(np.isnan(t), 1.0, p)


# ---------------------------------------------------------------------------
# numerics


def poisson_deviance(y: np.ndarray, mu: np.ndarray) -> float:
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(y > 0, y * np.log(y / mu), 0.0)
    return float(2.0 * np.sum(term - (y - mu)))


def _check_rank(X: np.ndarray, names: Sequence[str]) -> None:
    norms = np.linalg.norm(X, axis=0)
    zero = norms == 0
    if zero.any():
        raise RankDeficiencyError([names[j] for j in np.flatnonzero(zero)])
    Xn = X / norms
    eig = np.linalg.eigvalsh(Xn.T @ Xn)
    if eig[0] > RANK_TOL * eig[-1]:
        return
    # near-singular Gram matrix: pivoted QR decides and names the columns
    _, r, piv = linalg.qr(Xn, mode="economic", pivoting=True)
    d = np.abs(np.diag(r))
    rank = int(np.sum(d > RANK_TOL * d[0]))
    if rank < X.shape[1]:
        raise RankDeficiencyError([names[j] for j in sorted(piv[rank:])])


def _wls(X: np.ndarray, z: np.ndarray, w: np.ndarray, with_cov: bool = True):
    """Weighted least squares; returns the coefficients and the unscaled covariance."""
    Xw = X * w[:, None]
    gram = X.T @ Xw
    try:
        factor = linalg.cho_factor(gram, lower=False, check_finite=False)
        beta = linalg.cho_solve(factor, Xw.T @ z, check_finite=False)
        if not with_cov:
            return beta, None
        cov = linalg.cho_solve(factor, np.eye(gram.shape[0]), check_finite=False)
    except linalg.LinAlgError:
        sw = np.sqrt(w)
        q, r = np.linalg.qr(X * sw[:, None])
        beta = linalg.solve_triangular(r, q.T @ (sw * z))
        rinv = linalg.solve_triangular(r, np.eye(r.shape[0]))
        cov = rinv @ rinv.T
    return beta, 0.5 * (cov + cov.T)


def fit_matrix(X, y, names: Sequence[str], family: str = "quasipoisson",
               scale: float | None = None, tol: float = DEVIANCE_TOL,
               max_iter: int = MAX_ITER) -> GamFit:
    """Fit a quasi-Poisson (log link) or Gaussian model to a ready-made design.

    ``X`` must already contain the intercept column.  ``scale`` overrides the
    dispersion used for the covariance; the Pearson estimate is still
    reported in ``dispersion``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if family not in FAMILIES:
        raise InputError(f"unknown family {family!r}")
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise InputError("design and response must be finite; drop missing rows first")
    if n <= p:
        raise InsufficientSupportError(f"insufficient support: {n} rows for {p} coefficients")
    _check_rank(X, names)

    if family == "gaussian":
        beta, ucov = _wls(X, y, np.ones(n))
        mu = X @ beta
        resid = y - mu
        dev = float(resid @ resid)
        converged, n_iter = True, 1
        trace = [dev]
        pearson = resid
        dres = resid
    else:
        if np.any(y < 0):
            raise InputError("quasi-Poisson response must be non-negative")
        mu = y + 0.5
        eta = np.log(mu)
        dev = poisson_deviance(y, mu)
        beta = None
        trace = []
        converged = False
        n_iter = 0
        for n_iter in range(1, max_iter + 1):
            z = eta + (y - mu) / mu
            beta_new, _ = _wls(X, z, mu, with_cov=False)
            eta_new = np.minimum(X @ beta_new, ETA_MAX)
            mu_new = np.exp(eta_new)
            dev_new = poisson_deviance(y, mu_new)
            halvings = 0
            # step halving on deviance increase; first step has no accepted iterate
            while beta is not None and dev_new > dev * (1 + 1e-12) and halvings < MAX_HALVINGS:
                beta_new = 0.5 * (beta + beta_new)
                eta_new = np.minimum(X @ beta_new, ETA_MAX)
                mu_new = np.exp(eta_new)
                dev_new = poisson_deviance(y, mu_new)
                halvings += 1
            change = abs(dev_new - dev) / (abs(dev_new) + 0.1)
            beta, eta, mu, dev = beta_new, eta_new, mu_new, dev_new
            trace.append(dev)
            if not np.isfinite(dev):
                raise NumericalError("IRLS diverged (non-finite deviance)")
            if change < tol:
                converged = True
                break
        # covariance at the final weights
        _, ucov = _wls(X, eta + (y - mu) / mu, mu)
        sq = np.sqrt(mu)
        pearson = (y - mu) / sq
        with np.errstate(divide="ignore", invalid="ignore"):
            unit = 2.0 * (np.where(y > 0, y * np.log(y / mu), 0.0) - (y - mu))
        dres = np.sign(y - mu) * np.sqrt(np.clip(unit, 0.0, None))

    resid_df = n - p
    phi = float(pearson @ pearson) / resid_df
    used_scale = phi if scale is None else float(scale)
    gcv = n * dev / resid_df**2
    qaic_self = dev / phi + 2 * p if phi > 0 else math.inf
    return GamFit(
        coefficients=beta, covariance=used_scale * ucov, column_names=tuple(names),
        fitted_mu=mu, pearson_residuals=pearson, deviance_residuals=dres,
        dispersion=phi, edf=p, deviance=dev, gcv=gcv, qaic=qaic_self,
        converged=converged, n_used=n, n_iter=n_iter, family=family,
        scale=used_scale, unscaled_covariance=ucov, meta={"deviance_trace": trace},
    )


# ---------------------------------------------------------------------------
# model-level interface


def lagged(values: np.ndarray, lag: int) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if lag == 0:
        return values.copy()
    out = np.full(values.size, np.nan)
    out[lag:] = values[:-lag]
    return out


def response_series(panel: DailyPanel, response) -> np.ndarray:
    if isinstance(response, tuple):
        return stratify(panel, *response)
    if response in panel.outcomes:
        return panel.outcomes[response]
    if response in panel.pollutants or response in panel.meteo:
        return panel.series(response)
    return stratify(panel, *parse_stratum(response))


def build_design(spec: ModelSpec, panel: DailyPanel, exclude=None):
    """Assemble ``(X, y, names, rows, basis_defs)`` for a model on a panel.

    Rows with any missing input (including lag-induced gaps) or flagged in
    ``exclude`` are dropped.  A time smooth places its knots over the whole
    calendar; other smooths use the retained rows.
    """
    n = panel.n
    y_all = response_series(panel, spec.response)
    par_cols = {}
    for term in spec.parametric_terms:
        par_cols[term.name] = lagged(panel.series(term.variable), term.lag)
    smooth_src = {}
    for sm in spec.smooth_terms:
        smooth_src[sm.variable] = panel.time_index if sm.variable in TIME_VARIABLES else panel.series(sm.variable)

    keep = np.isfinite(y_all)
    for col in (*par_cols.values(), *smooth_src.values()):
        keep &= np.isfinite(col)
    if exclude is not None:
        keep &= ~np.asarray(exclude, dtype=bool)
    rows = np.flatnonzero(keep)

    cols = [np.ones(rows.size)]
    names = ["intercept"]
    for name, col in par_cols.items():
        cols.append(col[rows])
        names.append(name)
    basis_defs: dict[str, BasisDef] = {}
    for sm in spec.smooth_terms:
        src = smooth_src[sm.variable]
        if sm.variable in TIME_VARIABLES:
            bdef, bm = make_natural_basis(src, sm.df, variable_name=sm.variable)
            values = bm.values[rows]
        else:
            bdef, bm = make_natural_basis(src[rows], sm.df, variable_name=sm.variable)
            values = bm.values
        basis_defs[sm.variable] = bdef
        for j in range(values.shape[1]):
            cols.append(values[:, j])
            names.append(f"s({sm.variable}).{j + 1}")
    X = np.column_stack(cols)
    y = y_all[rows]

    if spec.stratum_indicators:
        # long format: one block of rows per stratum sharing all other columns
        blocks_X, blocks_y, block_rows = [], [], []
        for k, label in enumerate(spec.stratum_indicators):
            yk = response_series(panel, label)[rows]
            ok = np.isfinite(yk)
            ind = np.zeros((ok.sum(), len(spec.stratum_indicators) - 1))
            if k > 0:
                ind[:, k - 1] = 1.0
            blocks_X.append(np.column_stack([X[ok], ind]))
            blocks_y.append(yk[ok])
            block_rows.append(rows[ok])
        names += [f"stratum[{lab}]" for lab in spec.stratum_indicators[1:]]
        X = np.vstack(blocks_X)
        y = np.concatenate(blocks_y)
        rows = np.concatenate(block_rows)
    return X, y, names, rows, basis_defs


def fit(spec: ModelSpec, panel: DailyPanel, exclude=None, scale: float | None = None) -> GamFit:
    """Fit ``spec`` to ``panel`` by IRLS (quasi-Poisson) or least squares (Gaussian)."""
    X, y, names, rows, bdefs = build_design(spec, panel, exclude)
    if X.shape[0] <= X.shape[1] + 10:
        raise InsufficientSupportError(
            f"insufficient support: {X.shape[0]} usable rows for {X.shape[1]} coefficients"
        )
    res = fit_matrix(X, y, names, family=spec.family, scale=scale)
    meta = {
        **res.meta,
        "knot_rule": "quantile",
        "dropped_rows": int(panel.n - np.unique(rows).size),
        "response": str(spec.response),
        "convergence": {"criterion": "relative deviance change", "tol": DEVIANCE_TOL,
                        "max_iter": MAX_ITER, "max_halvings": MAX_HALVINGS},
    }
    return _with(res, rows=rows, basis_defs=bdefs, meta=meta)


def _with(fit_: GamFit, **changes) -> GamFit:
    return dataclasses.replace(fit_, **changes)


def dispersion(fit_: GamFit) -> float:
    """Pearson chi-square over residual degrees of freedom."""
    if fit_.n_used <= fit_.edf:
        raise InsufficientSupportError("dispersion needs n_used > edf")
    return float(fit_.pearson_residuals @ fit_.pearson_residuals) / (fit_.n_used - fit_.edf)


def gcv_score(fit_: GamFit) -> float:
    """``n * D / (n - edf)**2``; D is the deviance (residual sum of squares if Gaussian)."""
    n, edf = fit_.n_used, fit_.edf
    if n <= edf:
        raise InsufficientSupportError("GCV undefined for n <= edf")
    return n * fit_.deviance / (n - edf) ** 2


def qaic(fit_: GamFit, phi: float) -> float:
    """Quasi-AIC ``D / phi + 2 * edf`` with ``phi`` held fixed across compared models."""
    if not phi > 0:
        raise InputError("QAIC needs a positive dispersion estimate")
    return fit_.deviance / phi + 2.0 * fit_.edf


def qbic(fit_: GamFit, phi: float) -> float:
    if not phi > 0:
        raise InputError("QBIC needs a positive dispersion estimate")
    return fit_.deviance / phi + math.log(fit_.n_used) * fit_.edf


def significance_stars(p: float) -> str:
    if not np.isfinite(p):
        return ""
    for cut, mark in ((0.001, "***"), (0.01, "**"), (0.05, "*"), (0.1, ".")):
        if p < cut:
            return mark
    return ""


def coefficient_table(fit_: GamFit, include_smooths: bool = False, delimiter: str = "\t") -> str:
    """Coefficient table (term, estimate, SE, t, p, stars) with a fit-summary footer."""
    lines = [delimiter.join(("term", "estimate", "se", "t", "p", "signif"))]
    se, t, p = fit_.se, fit_.t_values, fit_.p_values
    for j, name in enumerate(fit_.column_names):
        if name.startswith("s(") and not include_smooths:
            continue
        lines.append(delimiter.join((
            name, f"{fit_.coefficients[j]:.6g}", f"{se[j]:.6g}", f"{t[j]:.4f}",
            f"{p[j]:.4g}", significance_stars(p[j]),
        )))
    lines.append(f"# dispersion={fit_.dispersion:.6g}")
    lines.append(f"# edf={fit_.edf}")
    lines.append(f"# n_used={fit_.n_used}")
    lines.append(f"# deviance={fit_.deviance:.6g}")
    lines.append(f"# gcv={fit_.gcv:.6g}")
    lines.append(f"# qaic={fit_.qaic:.6g}")
    lines.append(f"# converged={str(fit_.converged).lower()}")
    return "\n".join(lines) + "\n"

"""Natural cubic regression spline bases with quantile knots.

The basis is built from cubic B-splines on ``[a] * 4 + interior + [b] * 4``.
The first B-spline is dropped (the model carries its own intercept) and the
two constraints ``f''(a) = f''(b) = 0`` are removed by projecting onto the
null space of the constraint matrix, leaving ``len(interior) + 1`` columns.
Outside the boundary knots every basis function continues linearly.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline

from .errors import InputError, InsufficientSupportError

DAYS_PER_YEAR = 365.25


@dataclass(frozen=True)
class BasisDef:
    variable_name: str
    df: int
    interior_knots: tuple[float, ...]
    boundary_knots: tuple[float, float]
    centered: bool = True
    column_means: tuple[float, ...] | None = None
    warnings: tuple[str, ...] = ()
    _projection: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def knot_rule(self) -> str:
        return "quantile"


@dataclass(frozen=True)
class BasisMatrix:
    values: np.ndarray
    basis_def: BasisDef

    @property
    def shape(self):
        return self.values.shape


def _bspline(bdef_interior, boundary) -> BSpline:
    a, b = boundary
    t = np.r_[[a] * 4, bdef_interior, [b] * 4]
    nb = len(t) - 4
    return BSpline(t, np.eye(nb), 3, extrapolate=True)


def _projection(spl: BSpline, boundary) -> np.ndarray:
    constraint = spl.derivative(2)(np.asarray(boundary, dtype=float))[:, 1:]
    q, _ = np.linalg.qr(constraint.T, mode="complete")
    return q[:, 2:]


def _raw_basis(bdef: BasisDef, x: np.ndarray) -> np.ndarray:
    a, b = bdef.boundary_knots
    spl = _bspline(np.asarray(bdef.interior_knots, dtype=float), bdef.boundary_knots)
    proj = bdef._projection
    if proj is None:
        proj = _projection(spl, bdef.boundary_knots)
    out = np.full((x.size, proj.shape[1]), np.nan)
    finite = np.isfinite(x)
    inside = finite & (x >= a) & (x <= b)
    if inside.any():
        out[inside] = spl(x[inside])[:, 1:] @ proj
    for edge, side in ((a, finite & (x < a)), (b, finite & (x > b))):
        if side.any():
            value = spl(np.array([edge]))[:, 1:] @ proj
            slope = spl.derivative(1)(np.array([edge]))[:, 1:] @ proj
            out[side] = value + (x[side] - edge)[:, None] * slope
    return out


def make_natural_basis(x, df: int, variable_name: str = "x", centered: bool = True):
    """Natural cubic spline basis of ``df`` columns for the values ``x``.

    Boundary knots sit at the range of ``x`` and ``df - 1`` interior knots at
    evenly spaced quantiles.  Tied quantiles are merged (with a warning),
    which lowers the column count.  Missing entries of ``x`` yield NaN rows.

    Returns
    -------
    (BasisDef, BasisMatrix)
    """
    df = int(df)
    if df < 1:
        raise InputError("spline df must be at least 1")
    x = np.asarray(x, dtype=float)
    obs = x[np.isfinite(x)]
    n_distinct = np.unique(obs).size
    if n_distinct < df + 1:
        raise InsufficientSupportError(
            f"insufficient support for {variable_name!r}: df={df} needs at least "
            f"{df + 1} distinct values, found {n_distinct}"
        )
    a, b = float(obs.min()), float(obs.max())
    probs = np.arange(1, df) / df
    knots = np.quantile(obs, probs) if df > 1 else np.empty(0)
    knots = np.unique(knots)
    knots = knots[(knots > a) & (knots < b)]
    notes = []
    if knots.size != df - 1:
        notes.append(
            f"{variable_name}: {df - 1 - knots.size} tied quantile knot(s) removed; "
            f"df reduced from {df} to {knots.size + 1}"
        )
        warnings.warn(notes[-1], RuntimeWarning, stacklevel=2)
    boundary = (a, b)
    spl = _bspline(knots, boundary)
    proj = _projection(spl, boundary)
    proj.setflags(write=False)
    bdef = BasisDef(
        variable_name=variable_name, df=int(knots.size + 1),
        interior_knots=tuple(float(k) for k in knots), boundary_knots=boundary,
        centered=centered, warnings=tuple(notes), _projection=proj,
    )
    if centered:
        raw = _raw_basis(bdef, x)
        means = tuple(float(m) for m in np.nanmean(raw, axis=0))
        bdef = BasisDef(
            variable_name=bdef.variable_name, df=bdef.df,
            interior_knots=bdef.interior_knots, boundary_knots=boundary,
            centered=True, column_means=means, warnings=bdef.warnings, _projection=proj,
        )
    return bdef, evaluate_basis(bdef, x)


def evaluate_basis(bdef: BasisDef, new_x) -> BasisMatrix:
    """Evaluate the spline functions of ``bdef`` at ``new_x`` (linear beyond the boundary)."""
    x = np.atleast_1d(np.asarray(new_x, dtype=float))
    values = _raw_basis(bdef, x)
    if bdef.centered and bdef.column_means is not None:
        values = values - np.asarray(bdef.column_means)
    return BasisMatrix(values, bdef)


def df_per_year_to_total(df_per_year: float, n_days: int) -> int:
    """Total spline df for a record of ``n_days`` days, rounded half-up, at least 1."""
    if not df_per_year > 0:
        raise InputError("df per year must be positive")
    if n_days < 365:
        raise InputError("df per year needs at least 365 days of data")
    return max(1, math.floor(df_per_year * n_days / DAYS_PER_YEAR + 0.5))


def total_to_df_per_year(total_df: int, n_days: int) -> float:
    return total_df * DAYS_PER_YEAR / n_days


def basis_to_csv(matrix: BasisMatrix, delimiter: str = ",") -> str:
    """Delimiter-separated dump of a basis matrix, one row per observation."""
    name = matrix.basis_def.variable_name
    header = delimiter.join(f"{name}_ns{j + 1}" for j in range(matrix.values.shape[1]))
    rows = (delimiter.join(repr(float(v)) for v in row) for row in matrix.values)
    return header + "\n" + "\n".join(rows) + "\n"

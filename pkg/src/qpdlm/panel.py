"""Daily panel ingestion, validation, cleaning and descriptive statistics.

A :class:`DailyPanel` holds a contiguous daily calendar and three groups of
series: outcome counts (one per sex x age stratum, optionally a total),
pollutant concentrations and meteorology.  Missing values are stored as NaN;
``missing_mask`` exposes them as boolean flags.
"""

from __future__ import annotations

import csv
import dataclasses
import datetime as dt
import io
import json
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Mapping, TextIO

import numpy as np

from .errors import InputError, PanelError

SEXES = ("male", "female")
AGE_BANDS = ("<65", "65-75", ">75")
TOTAL = "total"
POLLUTANTS = ("PM10", "NO2", "SO2")
METEO = ("temp_mean", "temp_min", "temp_max", "humidity", "radiation", "precipitation")
MISSING_TOKENS = ("", "NA", "NaN", "nan")


def normalize_age_band(band: str) -> str:
    band = band.strip().replace("\u2013", "-").replace("\u2014", "-").replace(" ", "")
    return {"65to75": "65-75", "<=65": "<65", "75+": ">75"}.get(band, band)


def stratum_label(sex: str, age_band: str) -> str:
    """Canonical outcome column label, e.g. ``male_65-75``; ``total`` for (all, all)."""
    sex = sex.strip().lower()
    age_band = normalize_age_band(age_band)
    if sex == "all" and age_band == "all":
        return TOTAL
    return f"{sex}_{age_band}"


def parse_stratum(text: str) -> tuple[str, str]:
    """Parse ``sex/age`` (or a bare canonical label) into a (sex, age_band) pair."""
    text = text.strip()
    if text in ("", "all", TOTAL):
        return "all", "all"
    for sep in ("/", ":", "_"):
        if sep in text:
            sex, age = text.split(sep, 1)
            return sex.strip().lower(), normalize_age_band(age)
    if text.lower() in SEXES:
        return text.lower(), "all"
    return "all", normalize_age_band(text)


@dataclass(frozen=True)
class DailyPanel:
    dates: np.ndarray
    outcomes: Mapping[str, np.ndarray]
    pollutants: Mapping[str, np.ndarray] = field(default_factory=dict)
    meteo: Mapping[str, np.ndarray] = field(default_factory=dict)
    meta: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[D]")
        object.__setattr__(self, "dates", dates)
        if dates.ndim != 1 or dates.size == 0:
            raise PanelError("panel needs a non-empty one-dimensional date axis")
        if dates.size > 1 and np.any(np.diff(dates).astype(int) != 1):
            raise PanelError("dates must be strictly increasing in steps of one day")
        n = dates.size
        for group in ("outcomes", "pollutants", "meteo"):
            converted = {}
            for name, values in getattr(self, group).items():
                arr = np.array(values, dtype=float)
                arr.setflags(write=False)
                if arr.shape != (n,):
                    raise PanelError(f"series {name!r} has length {arr.size}, expected {n}")
                obs = arr[~np.isnan(arr)]
                if np.any(obs < 0):
                    raise PanelError(f"series {name!r} has negative values")
                if group == "outcomes" and np.any(obs != np.round(obs)):
                    raise PanelError(f"outcome series {name!r} has non-integer counts")
                converted[name] = arr
            object.__setattr__(self, group, converted)
        if not self.outcomes:
            raise PanelError("panel needs at least one outcome series")

    @property
    def n(self) -> int:
        return int(self.dates.size)

    @property
    def time_index(self) -> np.ndarray:
        return np.arange(self.n, dtype=float)

    @property
    def missing_mask(self) -> dict[str, np.ndarray]:
        return {name: np.isnan(values) for name, values in self.items()}

    def items(self) -> Iterable[tuple[str, np.ndarray]]:
        yield from self.outcomes.items()
        yield from self.pollutants.items()
        yield from self.meteo.items()

    def names(self) -> list[str]:
        return [name for name, _ in self.items()]

    def series(self, name: str) -> np.ndarray:
        for group in (self.outcomes, self.pollutants, self.meteo):
            if name in group:
                return group[name]
        if name in ("time", "time_index"):
            return self.time_index
        raise InputError(f"unknown series {name!r}; available: {', '.join(self.names())}")

    def with_series(self, name: str, values, meta_update: Mapping | None = None) -> "DailyPanel":
        """Return a copy with one series replaced; the panel itself is never mutated."""
        groups = {g: dict(getattr(self, g)) for g in ("outcomes", "pollutants", "meteo")}
        for g, contents in groups.items():
            if name in contents:
                contents[name] = np.asarray(values, dtype=float)
                break
        else:
            raise InputError(f"unknown series {name!r}")
        meta = dict(self.meta)
        if meta_update:
            meta.update(meta_update)
        return dataclasses.replace(self, meta=meta, **groups)


@dataclass(frozen=True)
class SeriesStats:
    n: int
    mean: float
    sd: float
    skewness: float
    kurtosis: float
    variance: float
    coefficient_of_variation: float
    min: float
    q1: float
    median: float
    q3: float
    max: float

    FIELDS = ("n", "mean", "sd", "skewness", "kurtosis", "variance",
              "coefficient_of_variation", "min", "q1", "median", "q3", "max")


@dataclass(frozen=True)
class OutlierMask:
    flags: np.ndarray
    rule: dict
    warnings: tuple[str, ...] = ()

    @property
    def count(self) -> int:
        return int(self.flags.sum())


# ---------------------------------------------------------------------------
# ingestion


def load_schema(path: str | os.PathLike) -> dict:
    with open(path, encoding="utf-8") as fh:
        schema = json.load(fh)
    if not isinstance(schema, dict):
        raise InputError(f"{path}: schema must be a JSON object")
    return schema


def _classify_columns(header: list[str], date_col: str) -> dict:
    schema = {"date": date_col, "outcomes": {}, "pollutants": {}, "meteo": {}}
    for col in header:
        if col == date_col:
            continue
        if col in POLLUTANTS:
            schema["pollutants"][col] = col
        elif col in METEO:
            schema["meteo"][col] = col
        else:
            schema["outcomes"][col] = col
    return schema


def load_panel(source: TextIO | str | os.PathLike, schema: Mapping | None = None) -> DailyPanel:
    """Read a delimiter-separated daily file into a validated, calendar-contiguous panel.

    ``schema`` maps ``date`` to the date column and ``outcomes`` / ``pollutants``
    / ``meteo`` to ``{canonical name: column name}`` dictionaries; an optional
    ``delimiter`` key overrides the comma default.  Without a schema the file
    is assumed to use canonical column names (``date``, stratum labels,
    ``PM10``..., ``temp_mean``...).

    Calendar gaps are inserted as all-missing rows.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8", newline="") as fh:
            return load_panel(fh, schema)

    schema = dict(schema or {})
    delimiter = schema.get("delimiter", ",")
    reader = csv.reader(source, delimiter=delimiter)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise PanelError("empty input: no header row") from None

    date_col = schema.get("date", "date")
    if date_col not in header:
        raise PanelError(f"no date column {date_col!r} in header")
    if not any(schema.get(k) for k in ("outcomes", "pollutants", "meteo")):
        schema = _classify_columns(header, date_col)
    if not schema.get("outcomes"):
        raise PanelError("schema maps no outcome column")

    index = {name: i for i, name in enumerate(header)}
    columns = {}
    for group in ("outcomes", "pollutants", "meteo"):
        for key, col in (schema.get(group) or {}).items():
            if col not in index:
                raise PanelError(f"column {col!r} (for {group[:-1]} {key!r}) not in header")
            label = normalize_stratum_key(key) if group == "outcomes" else key
            columns[(group, label)] = index[col]

    rows: dict[dt.date, list[float]] = {}
    keys = list(columns)
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        cell = row[index[date_col]].strip() if index[date_col] < len(row) else ""
        try:
            day = dt.date.fromisoformat(cell)
        except ValueError:
            raise PanelError(f"row {lineno}: cannot parse date {cell!r}") from None
        if day in rows:
            raise PanelError(f"duplicate date {day.isoformat()} (row {lineno})")
        values = []
        for key in keys:
            j = columns[key]
            text = row[j].strip() if j < len(row) else ""
            if text in MISSING_TOKENS:
                values.append(math.nan)
                continue
            try:
                values.append(float(text))
            except ValueError:
                raise PanelError(
                    f"row {lineno}, column {header[j]!r}: cannot parse number {text!r}"
                ) from None
        rows[day] = values
    if not rows:
        raise PanelError("input has a header but no data rows")

    first, last = min(rows), max(rows)
    n = (last - first).days + 1
    data = np.full((n, len(keys)), np.nan)
    for day, values in rows.items():
        data[(day - first).days] = values
    dates = np.arange(np.datetime64(first, "D"), np.datetime64(last, "D") + 1)

    groups: dict[str, dict] = {"outcomes": {}, "pollutants": {}, "meteo": {}}
    for j, (group, label) in enumerate(keys):
        groups[group][label] = data[:, j]
    meta = {"inserted_days": int(n - len(rows))}
    return DailyPanel(dates=dates, meta=meta, **groups)


def normalize_stratum_key(key: str) -> str:
    if key == TOTAL:
        return key
    if "_" in key:
        sex, age = key.split("_", 1)
        return f"{sex.lower()}_{normalize_age_band(age)}"
    return key


def _fmt(value: float, integer: bool = False) -> str:
    if math.isnan(value):
        return "NA"
    if integer:
        return str(int(value))
    return repr(float(value))


def write_panel(panel: DailyPanel, stream: TextIO, delimiter: str = ",") -> None:
    """Write the panel in canonical layout (readable back by :func:`load_panel`)."""
    writer = csv.writer(stream, delimiter=delimiter, lineterminator="\n")
    names = panel.names()
    writer.writerow(["date", *names])
    outcome_names = set(panel.outcomes)
    cols = [panel.series(name) for name in names]
    for i, day in enumerate(panel.dates):
        writer.writerow([str(day)] + [_fmt(c[i], name in outcome_names) for name, c in zip(names, cols)])


def panel_to_csv_text(panel: DailyPanel) -> str:
    buf = io.StringIO()
    write_panel(panel, buf)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# statistics and cleaning


def descriptive_stats(series, missing_mask=None) -> SeriesStats:
    """Moments and quartiles over the non-missing values.

    Population (divide-by-n) moments; skewness is m3/m2^1.5 and kurtosis is
    the plain m4/m2^2 (a normal sample gives about 3).  Quartiles use linear
    interpolation between order statistics.  Undefined quantities are NaN.
    """
    x = np.asarray(series, dtype=float)
    keep = ~np.isnan(x)
    if missing_mask is not None:
        keep &= ~np.asarray(missing_mask, dtype=bool)
    x = x[keep]
    if x.size < 2:
        raise InputError("insufficient data: descriptive statistics need at least 2 observed values")
    mean = float(x.mean())
    dev = x - mean
    m2 = float(np.mean(dev**2))
    sd = math.sqrt(m2)
    if m2 > 0:
        skew = float(np.mean(dev**3)) / m2**1.5
        kurt = float(np.mean(dev**4)) / m2**2
    else:
        skew = kurt = math.nan
    cv = sd / mean if mean != 0 else math.nan
    q1, med, q3 = (float(q) for q in np.quantile(x, [0.25, 0.5, 0.75]))
    return SeriesStats(
        n=int(x.size), mean=mean, sd=sd, skewness=skew, kurtosis=kurt, variance=m2,
        coefficient_of_variation=cv, min=float(x.min()), q1=q1, median=med, q3=q3,
        max=float(x.max()),
    )


def detect_outliers(series, k: float = 3.0) -> OutlierMask:
    """Flag values outside the Tukey fence ``[q1 - k*IQR, q3 + k*IQR]``."""
    x = np.asarray(series, dtype=float)
    observed = ~np.isnan(x)
    if observed.sum() < 8:
        raise InputError("outlier detection needs at least 8 observed values")
    q1, q3 = np.quantile(x[observed], [0.25, 0.75])
    iqr = q3 - q1
    rule = {"method": "tukey_fence", "k": float(k), "q1": float(q1), "q3": float(q3), "iqr": float(iqr)}
    if iqr == 0:
        return OutlierMask(np.zeros(x.size, dtype=bool), rule, ("IQR is zero; no values flagged",))
    lo, hi = q1 - k * iqr, q3 + k * iqr
    rule.update(lower=float(lo), upper=float(hi))
    with np.errstate(invalid="ignore"):
        flags = observed & ((x > hi) | (x < lo))
    return OutlierMask(flags, rule)


def remove_outliers(panel: DailyPanel, name: str, mask: OutlierMask) -> DailyPanel:
    """Return a panel where flagged days of ``name`` are set to missing."""
    values = panel.series(name).copy()
    values[mask.flags] = np.nan
    removed = dict(panel.meta.get("outliers_removed", {}))
    removed[name] = {"count": mask.count, "rule": mask.rule}
    return panel.with_series(name, values, {"outliers_removed": removed})


def impute_missing(series, max_gap: int = 3) -> np.ndarray:
    """Linearly interpolate interior runs of at most ``max_gap`` missing values.

    Edge runs and longer runs stay missing; observed values are untouched.
    """
    x = np.array(series, dtype=float)
    miss = np.isnan(x)
    if not miss.any() or miss.all():
        return x
    obs = np.flatnonzero(~miss)
    # consecutive observed positions bracket each interior gap
    for left, right in zip(obs[:-1], obs[1:]):
        gap = right - left - 1
        if 0 < gap <= max_gap:
            frac = np.arange(1, gap + 1) / (gap + 1)
            x[left + 1:right] = x[left] + frac * (x[right] - x[left])
    return x


def stratify(panel: DailyPanel, sex: str = "all", age_band: str = "all") -> np.ndarray:
    """Outcome counts for one sex x age stratum, summing finer strata when needed."""
    sex = sex.strip().lower()
    age_band = normalize_age_band(age_band)
    if sex not in (*SEXES, "all") or age_band not in (*AGE_BANDS, "all"):
        raise InputError(
            f"unknown stratum ({sex}, {age_band}); available: {', '.join(sorted(panel.outcomes))}"
        )
    label = stratum_label(sex, age_band)
    if label in panel.outcomes:
        return panel.outcomes[label]
    sexes = SEXES if sex == "all" else (sex,)
    ages = AGE_BANDS if age_band == "all" else (age_band,)
    # a whole-sex column may stand in for its age bands
    parts = []
    for s in sexes:
        if age_band == "all" and s in panel.outcomes:
            parts.append(panel.outcomes[s])
            continue
        for a in ages:
            lab = f"{s}_{a}"
            if lab not in panel.outcomes:
                raise InputError(
                    f"stratum ({sex}, {age_band}) unavailable: missing {lab!r}; "
                    f"available: {', '.join(sorted(panel.outcomes))}"
                )
            parts.append(panel.outcomes[lab])
    return np.sum(parts, axis=0)


def strata_mismatch(panel: DailyPanel) -> float:
    """Largest absolute gap between ``total`` and the sum of the six strata (0 if consistent)."""
    labels = [f"{s}_{a}" for s in SEXES for a in AGE_BANDS]
    if TOTAL not in panel.outcomes or not all(lab in panel.outcomes for lab in labels):
        return 0.0
    diff = panel.outcomes[TOTAL] - np.sum([panel.outcomes[lab] for lab in labels], axis=0)
    diff = diff[~np.isnan(diff)]
    return float(np.abs(diff).max()) if diff.size else 0.0


def describe_panel(panel: DailyPanel) -> list[tuple[str, SeriesStats]]:
    """Statistics for every series in order: outcomes, pollutants, then meteorology."""
    rows = []
    names = []
    if any(lab.startswith(("male_", "female_")) for lab in panel.outcomes) or TOTAL in panel.outcomes:
        for sex, age in [("all", "all"), ("male", "all"), ("female", "all")]:
            try:
                values = stratify(panel, sex, age)
            except InputError:
                continue
            name = stratum_label(sex, age) if sex == "all" else sex
            rows.append((name, values))
            names.append(name)
    for name, values in panel.outcomes.items():
        if name not in names:
            rows.append((name, values))
    rows += list(panel.pollutants.items()) + list(panel.meteo.items())
    out = []
    for name, values in rows:
        try:
            out.append((name, descriptive_stats(values)))
        except InputError:
            continue
    return out


def format_stats_table(rows: list[tuple[str, SeriesStats]], delimiter: str = "\t") -> str:
    lines = [delimiter.join(("variable",) + SeriesStats.FIELDS)]
    for name, st in rows:
        cells = [name]
        for f in SeriesStats.FIELDS:
            v = getattr(st, f)
            cells.append(str(v) if f == "n" else ("NA" if math.isnan(v) else f"{v:.6g}"))
        lines.append(delimiter.join(cells))
    return "\n".join(lines) + "\n"

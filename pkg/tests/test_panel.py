import datetime as dt
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qpdlm.errors import InputError, PanelError
from qpdlm.panel import (
    AGE_BANDS, SEXES, DailyPanel, SeriesStats, describe_panel, descriptive_stats,
    detect_outliers, format_stats_table, impute_missing, load_panel, panel_to_csv_text,
    remove_outliers, strata_mismatch, stratify,
)


def _csv(rows, header="date,total,PM10"):
    return io.StringIO(header + "\n" + "\n".join(rows) + "\n")


class TestLoad:
    def test_gap_inserted_as_missing(self):
        p = load_panel(_csv(["2010-01-01,5,10.0", "2010-01-03,7,12.5"]))
        assert p.n == 3
        assert str(p.dates[1]) == "2010-01-02"
        assert np.isnan(p.outcomes["total"][1]) and np.isnan(p.pollutants["PM10"][1])
        assert p.meta["inserted_days"] == 1

    def test_duplicate_date_named(self):
        with pytest.raises(PanelError, match="2010-05-05"):
            load_panel(_csv(["2010-05-04,1,2", "2010-05-05,1,2", "2010-05-05,3,4"]))

    def test_ten_year_length(self):
        # oracle: enumerate the calendar with the standard library
        start, end = dt.date(2010, 1, 1), dt.date(2019, 12, 31)
        days, d = [], start
        while d <= end:
            days.append(d)
            d += dt.timedelta(days=1)
        assert len(days) == 3652
        rows = [f"{d.isoformat()},{i % 50},{(i % 17) * 1.5}" for i, d in enumerate(days)]
        p = load_panel(_csv(rows))
        assert p.n == 3652
        assert p.meta["inserted_days"] == 0

    def test_bad_number_names_row_and_column(self):
        with pytest.raises(PanelError, match=r"row 3, column 'PM10'"):
            load_panel(_csv(["2010-01-01,1,2", "2010-01-02,1,abc"]))

    def test_no_date_column(self):
        with pytest.raises(PanelError, match="no date column"):
            load_panel(io.StringIO("day,total\n2010-01-01,3\n"))

    def test_missing_tokens(self):
        p = load_panel(_csv(["2010-01-01,NA,", "2010-01-02,4,3.5"]))
        assert np.isnan(p.outcomes["total"][0]) and np.isnan(p.pollutants["PM10"][0])

    def test_schema_mapping(self):
        text = "dia;obitos;pm\n2011-02-01;3;20\n2011-02-02;4;21\n"
        schema = {"date": "dia", "delimiter": ";", "outcomes": {"total": "obitos"},
                  "pollutants": {"PM10": "pm"}}
        p = load_panel(io.StringIO(text), schema)
        assert list(p.outcomes["total"]) == [3, 4]
        assert list(p.pollutants["PM10"]) == [20, 21]

    def test_negative_and_fractional_counts_rejected(self):
        with pytest.raises(PanelError, match="negative"):
            load_panel(_csv(["2010-01-01,-1,2"]))
        with pytest.raises(PanelError, match="non-integer"):
            load_panel(_csv(["2010-01-01,1.5,2"]))

    def test_roundtrip(self, sim_panel):
        panel, _ = sim_panel
        text = panel_to_csv_text(panel)
        again = load_panel(io.StringIO(text))
        assert panel_to_csv_text(again) == text
        for name, values in panel.items():
            np.testing.assert_array_equal(again.series(name), values)


class TestDescriptive:
    def test_hand_moments(self):
        s = descriptive_stats([1, 2, 3, 4, 5])
        # m2 = (4+1+0+1+4)/5 = 2, m4 = (16+1+0+1+16)/5 = 6.8, kurtosis = 6.8/4
        assert s.mean == 3 and s.variance == pytest.approx(2.0)
        assert s.skewness == pytest.approx(0.0, abs=1e-15)
        assert s.kurtosis == pytest.approx(1.7)
        assert s.q1 == 2 and s.median == 3 and s.q3 == 4
        assert s.coefficient_of_variation == pytest.approx(math.sqrt(2) / 3)

    def test_constant(self):
        s = descriptive_stats([5, 5, 5, 5])
        assert s.sd == 0 and s.variance == 0 and s.coefficient_of_variation == 0
        assert math.isnan(s.skewness) and math.isnan(s.kurtosis)

    def test_zero_mean_cv_undefined(self):
        s = descriptive_stats([-1.0, 1.0])
        assert math.isnan(s.coefficient_of_variation)

    def test_insufficient(self):
        with pytest.raises(InputError, match="insufficient data"):
            descriptive_stats([np.nan, np.nan, 3.0])

    def test_type7_quartiles(self, rng):
        x = rng.gamma(2.0, size=101)
        s = descriptive_stats(x)
        srt = np.sort(x)
        # type 7: h = (n-1)p, n=101 so quartiles are order statistics 25 and 75
        assert s.q1 == srt[25] and s.median == srt[50] and s.q3 == srt[75]

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(0, 1e3), min_size=3, max_size=60),
           st.lists(st.integers(0, 59), max_size=10))
    def test_missing_ignored(self, values, holes):
        x = np.array(values)
        base = descriptive_stats(x)
        y = x.tolist()
        for h in holes:
            y.insert(h % (len(y) + 1), math.nan)
        other = descriptive_stats(np.array(y))
        for f in SeriesStats.FIELDS:
            a, b = getattr(base, f), getattr(other, f)
            assert (math.isnan(a) and math.isnan(b)) or a == b

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=60))
    def test_invariants(self, values):
        s = descriptive_stats(values)
        assert s.variance == pytest.approx(s.sd**2, rel=1e-12, abs=1e-300)
        assert s.q1 <= s.median <= s.q3


class TestOutliers:
    def test_single_extreme(self):
        x = np.r_[np.arange(1, 21, dtype=float), 457.0]
        # oracle: type-7 quartiles of 21 values are x[5]=6 and x[15]=16, fence 16+30=46
        srt = np.sort(x)
        q1, q3 = srt[5], srt[15]
        assert (q1, q3) == (6.0, 16.0)
        m = detect_outliers(x, 3.0)
        assert m.count == 1 and m.flags[-1]
        assert m.rule["k"] == 3.0 and m.rule["upper"] == q3 + 3 * (q3 - q1)

    def test_constant(self):
        m = detect_outliers(np.full(20, 4.0))
        assert m.count == 0 and m.warnings

    def test_normal_flag_rate(self):
        x = np.random.default_rng(5).standard_normal(10000)
        assert detect_outliers(x, 3.0).count / x.size < 0.01

    def test_too_short(self):
        with pytest.raises(InputError):
            detect_outliers([1, 2, 3])

    def test_removal_sets_missing_without_mutation(self):
        p = DailyPanel(np.arange(np.datetime64("2010-01-01"), np.datetime64("2010-01-22")),
                       {"total": np.r_[np.arange(1, 21), 457]})
        m = detect_outliers(p.outcomes["total"])
        q = remove_outliers(p, "total", m)
        assert np.isnan(q.outcomes["total"][-1]) and p.outcomes["total"][-1] == 457
        assert q.meta["outliers_removed"]["total"]["count"] == 1


class TestImpute:
    def test_examples(self):
        np.testing.assert_array_equal(impute_missing([2, np.nan, 4], 1), [2, 3, 4])
        out = impute_missing([2, np.nan, np.nan, np.nan, 10], 2)
        assert np.isnan(out[1:4]).all() and out[0] == 2 and out[4] == 10
        out = impute_missing([np.nan, 5, 6])
        assert np.isnan(out[0]) and list(out[1:]) == [5, 6]

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.one_of(st.none(), st.floats(0, 100)), min_size=1, max_size=40),
           st.integers(0, 5))
    def test_idempotent_and_preserving(self, values, gap):
        x = np.array([np.nan if v is None else v for v in values])
        once = impute_missing(x, gap)
        np.testing.assert_array_equal(impute_missing(once, gap), once)
        obs = ~np.isnan(x)
        np.testing.assert_array_equal(once[obs], x[obs])


class TestStrata:
    def test_total_is_sum(self, sim_panel):
        panel, _ = sim_panel
        parts = sum(panel.outcomes[f"{s}_{a}"] for s in SEXES for a in AGE_BANDS)
        np.testing.assert_array_equal(stratify(panel, "all", "all"), parts)
        assert strata_mismatch(panel) == 0

    def test_projection(self, sim_panel):
        panel, _ = sim_panel
        assert stratify(panel, "male", ">75") is panel.outcomes["male_>75"]
        male = stratify(panel, "male", "all")
        np.testing.assert_array_equal(male, sum(panel.outcomes[f"male_{a}"] for a in AGE_BANDS))

    def test_generator_means(self, sim_panel):
        panel, truth = sim_panel
        total = panel.outcomes["total"].sum()
        for label, share in truth["stratum_shares"].items():
            observed = panel.outcomes[label].sum() / total
            # multinomial share: sd = sqrt(p(1-p)/N)
            assert abs(observed - share) < 4 * math.sqrt(share * (1 - share) / total)

    def test_unknown(self, sim_panel):
        panel, _ = sim_panel
        with pytest.raises(InputError, match="available"):
            stratify(panel, "other", "all")
        only_total = DailyPanel(panel.dates, {"total": panel.outcomes["total"]})
        with pytest.raises(InputError, match="available: total"):
            stratify(only_total, "male", "<65")

    def test_describe_layout(self, sim_panel):
        panel, _ = sim_panel
        rows = describe_panel(panel)
        names = [r[0] for r in rows]
        assert names[:3] == ["total", "male", "female"]
        assert names[-2:] == ["PM10", "temp_mean"]
        text = format_stats_table(rows)
        assert text.splitlines()[0].split("\t")[1:] == list(SeriesStats.FIELDS)

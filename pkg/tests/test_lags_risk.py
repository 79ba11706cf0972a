import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qpdlm.errors import InputError
from qpdlm.gam import ModelSpec, SmoothSpec, Term, fit
from qpdlm.lags import DlmFit, build_lag_matrix, cumulative_effect, fit_dlm, lag_table
from qpdlm.risk import (
    dlm_risks, percent_se, percent_variation, relative_risk, risk_estimate, rr_interval,
)
from qpdlm.simulation import SimulationConfig, generate_panel


class _Lags:
    def __init__(self, betas, cov):
        self.lag_betas = np.asarray(betas, float)
        self.lag_cov = np.asarray(cov, float)


def test_lag_matrix_small_example():
    d = build_lag_matrix([1, 2, 3, 4, 5], 2, min_extra=0)
    np.testing.assert_array_equal(d.matrix, [[3, 2, 1], [4, 3, 2], [5, 4, 3]])
    np.testing.assert_array_equal(d.aligned_rows, [2, 3, 4])


def test_lag_matrix_k0_and_missing():
    x = np.arange(1.0, 60)
    np.testing.assert_array_equal(build_lag_matrix(x, 0).matrix[:, 0], x)
    x[6] = np.nan  # day 7
    d = build_lag_matrix(x, 4)
    # 0-based days 6..10 are days 7..11 in 1-based numbering
    np.testing.assert_array_equal(d.dropped_rows, np.arange(6, 11))
    for row, t in zip(d.matrix, d.aligned_rows):
        np.testing.assert_array_equal(row, [x[t - lag] for lag in range(5)])


def test_lag_matrix_errors():
    with pytest.raises(InputError):
        build_lag_matrix(np.arange(50.0), -1)
    with pytest.raises(InputError):
        build_lag_matrix(np.arange(34.0), 4)


def test_cumulative_effect_examples():
    so2 = [0.02269, -0.00604, -0.00819, 0.00136, -0.00244]
    b, s = cumulative_effect(_Lags(so2, np.zeros((5, 5))))
    assert b == pytest.approx(0.00738, abs=1e-12) and s == 0
    cov = np.array([[2.0, 0.5], [0.5, 1.0]])
    assert cumulative_effect(_Lags([0, 0], cov)) == (0.0, pytest.approx(2.0))
    sigma = 0.3
    assert cumulative_effect(_Lags(np.ones(5), sigma**2 * np.eye(5)))[1] == pytest.approx(sigma * math.sqrt(5))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=1, max_size=8), st.floats(-5, 5))
def test_cumulative_linear(betas, c):
    k = len(betas)
    a = np.random.default_rng(k).standard_normal((k, k))
    cov = a @ a.T
    b, s = cumulative_effect(_Lags(betas, cov))
    b2, s2 = cumulative_effect(_Lags(np.array(betas) * c, cov * c * c))
    assert b2 == pytest.approx(c * b, abs=1e-12)
    assert s2 == pytest.approx(abs(c) * s, rel=1e-9, abs=1e-12)


@pytest.fixture(scope="module")
def dlm_panel():
    cfg = SimulationConfig(n_days=1461, seed=21, beta_true=(0.004, -0.001, 0.0, 0.0, 0.0))
    return generate_panel(cfg)


def test_fit_dlm_structure(dlm_panel):
    panel, _ = dlm_panel
    d = fit_dlm(panel, "PM10", 4, time_df=8, temp_df=3)
    assert isinstance(d, DlmFit) and d.lag_betas.shape == (5,)
    idx = [d.base.index(n) for n in d.lag_names]
    np.testing.assert_array_equal(d.lag_cov, d.base.covariance[np.ix_(idx, idx)])
    assert np.all(np.linalg.eigvalsh(d.lag_cov) > 0)
    assert d.base.edf == 1 + 5 + 8 + 3 and d.base.n_used == panel.n - 4
    assert d.base.meta["dropped_rows"] == 4
    text = lag_table(d)
    assert text.splitlines()[0] == "lag\testimate\tse\tp\tsignif" and "# cumulative_beta=" in text
    with pytest.raises(InputError):
        fit_dlm(panel, "PM10", 41, 8)


def test_k0_matches_single_lag_model(dlm_panel):
    panel, _ = dlm_panel
    d = fit_dlm(panel, "PM10", 0, time_df=8, temp_df=None)
    single = fit(ModelSpec((Term("PM10"),), (SmoothSpec("time", 8),)), panel)
    np.testing.assert_allclose(d.base.coefficients, single.coefficients, rtol=0, atol=1e-12)


def test_extra_lags_near_zero(dlm_panel):
    panel, _ = dlm_panel
    d4 = fit_dlm(panel, "PM10", 4, time_df=8, temp_df=None)
    d7 = fit_dlm(panel, "PM10", 7, time_df=8, temp_df=None)
    # the same days enter both fits except the first three, so estimates agree within noise
    diff = d7.lag_betas[:5] - d4.lag_betas
    assert np.all(np.abs(diff) < 3 * d4.lag_se)
    assert np.all(np.abs(d7.lag_betas[5:]) < 4 * d7.lag_se[5:])


def test_lag_coverage_and_permutation_null():
    truth = np.array([0.004, -0.001, 0.0, 0.0, 0.0])
    cfg = SimulationConfig(n_days=3650, seed=99, beta_true=tuple(truth))
    within, null_reject = [], []
    for r in range(200):
        panel, _ = generate_panel(cfg, replicate=r)
        d = fit_dlm(panel, "PM10", 4, time_df=20, temp_df=None)
        within.append(np.abs(d.lag_betas - truth) <= 3 * d.lag_se)
        if r < 60:
            perm = np.random.default_rng(r).permutation(panel.n)
            shuffled = panel.with_series("PM10", panel.pollutants["PM10"][perm])
            null_reject.append(fit_dlm(shuffled, "PM10", 4, 20, None).per_lag_p < 0.05)
    per_lag = np.mean(within, axis=0)
    assert np.all(per_lag >= 0.95), per_lag
    rate = np.mean(null_reject)
    assert 0.02 <= rate <= 0.09, rate


# ---------------------------------------------------------------------------
# risk


def test_relative_risk_examples():
    assert relative_risk(0, 10) == 1.0
    assert relative_risk(0.00738, 10) == pytest.approx(1.0766, abs=5e-5)
    assert relative_risk(0.00132, 10) == pytest.approx(1.0133, abs=5e-5)


@pytest.mark.parametrize("beta,expected", [(0.00109, 1.096), (0.01338, 14.31), (0.0, 0.0)])
def test_percent_examples(beta, expected):
    # reference values carry two or three decimals
    assert percent_variation(beta, 10) == pytest.approx(expected, abs=1e-2)
    assert percent_variation(0.0, 3.7) == 0.0


def test_interval_examples():
    # exp((0.00738 -/+ 1.959964 * 0.0073) * 10) evaluated by hand
    lo, hi = rr_interval(0.00738, 0.0073, 10)
    assert lo == pytest.approx(math.exp(0.0738 - 1.959963985 * 0.073), rel=1e-9)
    assert (round(lo, 4), round(hi, 4)) == (0.9331, 1.2422)
    rr = relative_risk(0.002, 10)
    assert rr_interval(0.002, 0.0, 10) == (pytest.approx(rr), pytest.approx(rr))
    lo, hi = rr_interval(0.0, 0.01, 10)
    assert math.log(lo) == pytest.approx(-math.log(hi))
    for bad in (0.0, 1.0, 1.5):
        with pytest.raises(InputError):
            rr_interval(0.0, 0.01, 10, bad)
    with pytest.raises(InputError):
        rr_interval(0.0, -1.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(-0.05, 0.05), st.floats(0, 30), st.floats(0, 30), st.floats(0, 0.02))
def test_risk_identities(beta, d1, d2, se):
    assert percent_variation(beta, d1) == (relative_risk(beta, d1) - 1) * 100
    assert relative_risk(beta, d1 + d2) == pytest.approx(relative_risk(beta, d1) * relative_risk(beta, d2), rel=1e-12)
    r = risk_estimate(beta, se, d1)
    assert r.ci_low <= r.rr * (1 + 1e-15) and r.rr <= r.ci_high * (1 + 1e-15)


def test_percent_se_delta_method():
    # numerical derivative of the percent variation in beta
    beta, se, dx, h = 0.003, 0.001, 10.0, 1e-7
    slope = (percent_variation(beta + h, dx) - percent_variation(beta - h, dx)) / (2 * h)
    assert percent_se(beta, se, dx) == pytest.approx(abs(slope) * se, rel=1e-6)


def test_interval_coverage():
    rng = np.random.default_rng(4)
    beta, se = 0.0012, 0.0004
    hits = 0
    for _ in range(1000):
        est = rng.normal(beta, se)
        lo, hi = rr_interval(est, se, 10)
        hits += lo <= relative_risk(beta, 10) <= hi
    assert 930 <= hits <= 970


def test_dlm_risks(dlm_panel):
    panel, _ = dlm_panel
    d = fit_dlm(panel, "PM10", 2, time_df=8, temp_df=None)
    out = dlm_risks(d)
    assert [r.source for r in out] == ["single-lag"] * 3 + ["cumulative"]
    assert out[-1].beta == pytest.approx(d.lag_betas.sum())

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epifield.data import CaseSeries
from epifield.detect import (
    AlignmentError,
    GlrFitError,
    alarm_days_from_outliers,
    detect_alarms,
    glr_detect,
    glr_fit,
    glr_statistic,
    outlier_boundary,
    poisson_quantile,
    verify_report,
    write_report,
)
from epifield.forecast import ForecastBand

D0 = np.datetime64("2020-06-01")
OMEGA = 2 * np.pi / 365
BETA = np.array([3.0, 0.002, 0.2, -0.1])


def seasonal_mean(t, beta=BETA):
    return np.exp(beta[0] + beta[1] * t + beta[2] * np.sin(OMEGA * t) + beta[3] * np.cos(OMEGA * t))


def cs(counts, start=D0, region="r"):
    return CaseSeries(region, 1000, start + np.arange(len(counts)), counts)


def band_from(samples, n_cal=0):
    samples = np.asarray(samples, dtype=float)
    return ForecastBand("r", D0 + np.arange(samples.shape[1]), samples, n_cal)


def test_boundary_identical_draws():
    curve = np.linspace(1, 10, 14)
    assert np.allclose(outlier_boundary(band_from(np.tile(curve, (100, 1)))), curve)


def test_boundary_order_statistics():
    col = np.random.default_rng(0).permutation(np.arange(1.0, 101.0))
    b = outlier_boundary(band_from(col[:, None]))
    assert 99 <= b[0] <= 100


def test_boundary_above_q95_and_forecast_only():
    s = np.random.default_rng(1).gamma(2.0, 3.0, (200, 20))
    band = band_from(s, n_cal=6)
    b = outlier_boundary(band)
    assert len(b) == 14 and np.all(b >= band.q95[6:])


def test_boundary_warns_on_few_draws():
    with pytest.warns(UserWarning, match="poorly resolved"):
        outlier_boundary(band_from(np.ones((50, 3))))


def test_alarm_examples():
    rep = detect_alarms(cs([1.0, 2, 3]), [5, 5, 5])
    assert rep.outlier_days == () and rep.alarm_days == ()
    rep = detect_alarms(cs([9.0, 9, 9, 0]), [5] * 4)
    assert rep.outlier_days == tuple(D0 + np.arange(3)) and rep.alarm_days == (D0 + 2,)
    rep = detect_alarms(cs([9.0, 9, 0, 9, 9]), [5] * 5)
    assert len(rep.outlier_days) == 4 and rep.alarm_days == ()


def test_alarm_alignment():
    with pytest.raises(AlignmentError):
        detect_alarms(cs([1.0, 2]), [1, 2, 3])
    with pytest.raises(AlignmentError):
        detect_alarms(cs([1.0, 2]), [1, 2], boundary_dates=D0 + 1 + np.arange(2))


@given(st.lists(st.booleans(), min_size=1, max_size=60))
@settings(max_examples=200, deadline=None)
def test_report_invariant(flags):
    flags = np.array(flags)
    rep = detect_alarms(cs(flags * 10.0), np.full(len(flags), 5.0))
    assert set(rep.alarm_days) <= set(rep.outlier_days)
    assert verify_report(rep)
    # Independent count: day i alarms iff flags[i-2:i+1] all true.
    want = [i for i in range(len(flags)) if i >= 2 and flags[i - 2 : i + 1].all()]
    assert np.flatnonzero(alarm_days_from_outliers(flags)).tolist() == want


def test_verifier_catches_bad_report():
    rep = detect_alarms(cs([9.0, 9, 9]), [5] * 3)
    bad = type(rep)(rep.detector_id, rep.region_id, rep.dates, rep.observed, rep.boundary, rep.outlier_days[1:], rep.alarm_days)
    assert not verify_report(bad)


def test_glr_fit_constant_intercept_only():
    m = glr_fit(cs(np.full(60, 7.0)), free=[True, False, False, False])
    assert m.beta[0] == pytest.approx(np.log(7.0), abs=1e-10)
    assert np.all(m.beta[1:] == 0)


def test_glr_fit_errors():
    with pytest.raises(GlrFitError):
        glr_fit(cs(np.zeros(40)))
    with pytest.raises(GlrFitError, match="grad"):
        glr_fit(cs(np.random.default_rng(0).poisson(5, 40).astype(float)), max_iter=1)


def test_glr_fit_recovery():
    t = np.arange(1000.0)
    beta = np.array([2.0, 0.0005, 0.3, -0.2])
    mu = seasonal_mean(t, beta)
    hits = 0
    reps = 40
    for seed in range(reps):
        y = np.random.default_rng(seed).poisson(mu).astype(float)
        m = glr_fit(cs(y))
        se = np.sqrt(np.diag(m.cov))
        hits += np.all(np.abs(m.beta - beta) <= 3 * se)
    assert hits >= 0.95 * reps


def _base_and_test_mean():
    rng = np.random.default_rng(42)
    y = rng.poisson(seasonal_mean(np.arange(107.0))).astype(float)
    base = glr_fit(cs(y))
    test_start = D0 + 107
    return base, test_start, base.mean(test_start + np.arange(15))


def test_glr_null_false_alarm_rate():
    base, start, mu0 = _base_and_test_mean()
    alarms = 0
    for seed in range(100):
        y = np.random.default_rng(seed).poisson(mu0).astype(float)
        alarms += bool(glr_detect(cs(y, start), base).alarm_days)
    assert alarms <= 10


def test_glr_detects_fivefold_shift():
    base, start, mu0 = _base_and_test_mean()
    onset = 5
    hits = 0
    for seed in range(100):
        rng = np.random.default_rng(1000 + seed)
        y = rng.poisson(mu0).astype(float)
        y[onset:] = rng.poisson(5 * mu0[onset:])
        rep = glr_detect(cs(y, start), base)
        days = (np.array(rep.alarm_days, dtype="datetime64[D]") - (start + onset)).astype(int)
        hits += bool(len(days)) and 0 <= days.min() <= 7
    assert hits >= 95


def test_glr_identical_models_never_alarm():
    base, start, mu0 = _base_and_test_mean()
    y = np.random.default_rng(0).poisson(3 * mu0).astype(float)
    assert np.all(glr_statistic(cs(y, start), base, refit="none") == 0)
    assert glr_detect(cs(y, start), base, refit="none").alarm_days == ()


@given(st.lists(st.integers(0, 80), min_size=1, max_size=15), st.floats(1.0, 6.0))
@settings(max_examples=80, deadline=None)
def test_glr_monotone_in_counts(counts, factor):
    base, start, _ = _BASE
    y = np.array(counts, dtype=float)
    g1 = glr_statistic(cs(y, start), base)
    g2 = glr_statistic(cs(np.ceil(y * factor), start), base)
    assert np.all(g2 >= g1 - 1e-12)


_BASE = _base_and_test_mean()


def test_glr_boundary_is_minimal_trigger():
    base, start, mu0 = _BASE
    y = np.random.default_rng(5).poisson(mu0).astype(float)
    rep = glr_detect(cs(y, start), base)
    for n in (0, 7, 14):
        b = rep.boundary[n]
        hi = y[: n + 1].copy()
        hi[n] = b
        assert glr_statistic(cs(hi, start), base)[n] > base.c_gamma
        if b > 0:
            hi[n] = b - 1
            assert glr_statistic(cs(hi, start), base)[n] <= base.c_gamma


def test_glr_poisson_quantile_rule():
    base, start, mu0 = _BASE
    y = np.random.default_rng(5).poisson(mu0).astype(float)
    y[3:6] = np.ceil(10 * mu0[3:6])
    rep = glr_detect(cs(y, start), base, outlier_rule="poisson_quantile")
    assert np.array_equal(rep.boundary, poisson_quantile(mu0))
    assert start + 5 in rep.alarm_days and verify_report(rep)


def test_glr_window_limit():
    base, start, _ = _BASE
    with pytest.raises(ValueError):
        glr_detect(cs(np.ones(32), start), base)


def test_report_json(tmp_path):
    rep = detect_alarms(cs([9.0, 9, 9, 0]), [5] * 4)
    write_report(tmp_path / "r.json", [rep], boundary_ref="b.csv")
    (rec,) = json.loads((tmp_path / "r.json").read_text())
    assert rec["detector"] == "infection_rate" and rec["alarm_dates"] == ["2020-06-03"]
    assert rec["boundary"] == "b.csv"

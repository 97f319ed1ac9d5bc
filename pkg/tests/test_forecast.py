import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epifield.data import Adjacency
from epifield.epimodel import IncubationDraw, RegionParams, predict_daily
from epifield.forecast import (
    HorizonError,
    average_crps,
    crps,
    posterior_predictive,
    write_bands,
)
from epifield.inference import AMCMCConfig, CalibrationProblem, Chain, calibrate
from epifield.spatial import GlobalParams
from epifield.synthetic import simulate_cases

D0 = np.datetime64("2020-06-01")
DRAW = IncubationDraw(1.62, 0.418)
TRUTH = RegionParams(-5, 3, 12, 5000)


def one_region_problem(seed=0, days=100, **kw):
    rng = np.random.default_rng(seed)
    data = simulate_cases([TRUTH], GlobalParams(2e-5, 0.1), [100_000], D0 + np.arange(days), DRAW, rng)
    return CalibrationProblem(data, **kw)


def point_chain(problem, x):
    x = np.atleast_2d(x)
    return Chain(x, np.zeros(len(x)), 1.0, np.zeros(len(x)), 0, problem.layout.names)


def test_degenerate_chain_reproduces_model_curve():
    pb = one_region_problem(pinned_draw=DRAW)
    x = np.array([TRUTH.t0, TRUTH.k, TRUTH.theta, TRUTH.N, -30.0, -30.0])
    (band,) = posterior_predictive(point_chain(pb, x), pb, n_draws=20, horizon=14, include_noise=False)
    curve = predict_daily(TRUTH, DRAW, np.arange(114.0))
    for q in (band.q05, band.q25, band.median, band.q75, band.q95):
        assert np.allclose(q, curve, rtol=1e-12, atol=1e-12)
    (noisy,) = posterior_predictive(point_chain(pb, x), pb, n_draws=20, horizon=14, include_noise=True)
    assert np.allclose(noisy.q95, curve, rtol=1e-6) and np.allclose(noisy.q05, curve, rtol=1e-6)


def test_degenerate_three_region_spatial():
    adj = Adjacency.from_edges(["a", "b", "c"], [("a", "b"), ("a", "c")])
    regs = [TRUTH, RegionParams(0, 2, 10, 800), RegionParams(3, 3, 8, 300)]
    rng = np.random.default_rng(0)
    data = simulate_cases(regs, GlobalParams(1e-6, 0.1), [1e5, 5e4, 2e4], D0 + np.arange(60), DRAW, rng, region_ids=list("abc"))
    pb = CalibrationProblem(data, adj, pinned_draw=DRAW)
    x = np.r_[[v for r in regs for v in (r.t0, r.k, r.theta, r.N)], -30, -30, 0.5 * math.log(1e-30), 0.0]
    bands = posterior_predictive(point_chain(pb, x), pb, n_draws=10, horizon=5)
    for b, r in zip(bands, regs):
        curve = predict_daily(r, DRAW, np.arange(65.0))
        assert np.allclose(b.q05, curve, rtol=1e-6, atol=1e-7) and np.allclose(b.q95, curve, rtol=1e-6, atol=1e-7)


def test_bands_nested_and_csv(tmp_path):
    pb = one_region_problem()
    rng = np.random.default_rng(1)
    x = np.array([TRUTH.t0, TRUTH.k, TRUTH.theta, TRUTH.N, math.log(2e-5), math.log(0.1)])
    chain = point_chain(pb, x + rng.normal(0, 0.02, (50, 6)) * np.abs(x))
    (band,) = posterior_predictive(chain, pb, n_draws=100, horizon=14)
    qs = [band.q05, band.q25, band.median, band.q75, band.q95]
    for lo, hi in zip(qs, qs[1:]):
        assert np.all(lo <= hi)
    assert band.horizon == 14 and band.samples.shape == (100, 114)
    write_bands(tmp_path / "b.csv", [band])
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert lines[0] == "date,region,median,q05,q25,q75,q95" and len(lines) == 115


def test_horizon_cap():
    pb = one_region_problem()
    x = np.array([TRUTH.t0, TRUTH.k, TRUTH.theta, TRUTH.N, -10, -2])
    with pytest.raises(HorizonError, match="incubation"):
        posterior_predictive(point_chain(pb, x), pb, horizon=15)


def test_noise_widens_bands():
    pb = one_region_problem()
    x = np.array([TRUTH.t0, TRUTH.k, TRUTH.theta, TRUTH.N, math.log(2e-5), math.log(0.1)])
    chain = point_chain(pb, x + np.random.default_rng(2).normal(0, 0.01, (40, 6)) * np.abs(x))
    wider = 0
    for seed in range(10):
        (a,) = posterior_predictive(chain, pb, include_noise=False, seed=seed)
        (b,) = posterior_predictive(chain, pb, include_noise=True, seed=seed)
        wider += np.mean(b.q95 - b.q05) >= np.mean(a.q95 - a.q05)
    assert wider == 10


def test_crps_examples():
    assert crps([3.0] * 5, 3.0) == 0.0
    assert crps([2.0] * 4, 5.5) == pytest.approx(3.5)
    assert crps([0.0, 2.0], 1.0) == 0.5
    with pytest.raises(ValueError):
        crps([], 1.0)


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=40), st.floats(-1e3, 1e3), st.randoms())
@settings(max_examples=100, deadline=None)
def test_crps_properties(samples, y, rnd):
    v = crps(samples, y)
    assert v >= -1e-9
    shuffled = list(samples)
    rnd.shuffle(shuffled)
    assert crps(shuffled, y) == pytest.approx(v, abs=1e-9)
    if v < 1e-12:
        assert np.allclose(samples, y, atol=1e-6)


def test_average_crps_alignment():
    pb = one_region_problem(pinned_draw=DRAW)
    x = np.array([TRUTH.t0, TRUTH.k, TRUTH.theta, TRUTH.N, -30, -30])
    (band,) = posterior_predictive(point_chain(pb, x), pb, n_draws=5, horizon=3, include_noise=False)
    curve = predict_daily(TRUTH, DRAW, np.arange(100.0))
    assert average_crps(band, curve) == pytest.approx(0, abs=1e-9)
    assert average_crps(band, curve + 2.0) == pytest.approx(2.0, abs=1e-9)


@pytest.mark.slow
def test_simulation_based_coverage():
    rng = np.random.default_rng(11)
    dates = D0 + np.arange(100)
    data = simulate_cases([TRUTH], GlobalParams(2e-5, 0.1), [100_000], dates, DRAW, rng)
    pb = CalibrationProblem(data)
    chain = calibrate(pb, AMCMCConfig(n_steps=60_000, burn_in=20_000, thin=20, seed=11))
    (band,) = posterior_predictive(chain, pb, n_draws=200, horizon=0, seed=3)
    held_out = simulate_cases([TRUTH], GlobalParams(2e-5, 0.1), [100_000], dates, DRAW, rng)[0].counts
    inside = np.sum((held_out >= band.q05) & (held_out <= band.q95))
    assert inside >= 85

"""Detect a second wave with the infection-rate detector and the GLR-Poisson baseline.

One county is simulated with a first wave that is calibrated, then a second
wave starts a few days after the calibration window ends. The infection-rate
detector flags days above the 99th percentile of the posterior predictive
fan; the GLR-Poisson detector fits a seasonal log-linear Poisson mean to the
calibration window. Both declare an alarm on the third consecutive outlier.

Run::

    python demos/wave_detection.py --wave-start 4
"""

import argparse

import numpy as np

from epifield.data import smooth_7day
from epifield.detect import detect_alarms, glr_detect, glr_fit, outlier_boundary
from epifield.epimodel import DEFAULT_HYPER, RegionParams, predict_daily
from epifield.forecast import posterior_predictive
from epifield.inference import AMCMCConfig, CalibrationProblem, calibrate
from epifield.spatial import GlobalParams
from epifield.synthetic import simulate_cases

CAL_DAYS, HORIZON = 107, 14


def show(report, label):
    print(f"\n{label}")
    alarms = set(report.alarm_days)
    for d, y, b in zip(report.dates, report.observed, report.boundary):
        mark = "ALARM" if d in alarms else ("outlier" if y > b else "")
        print(f"  {d}  observed {y:7.1f}  boundary {b:7.1f}  {mark}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--wave-start", type=int, default=4, help="infection onset, days after calibration end")
    ap.add_argument("--wave-size", type=float, default=1500)
    ap.add_argument("--steps", type=int, default=40_000)
    ap.add_argument("--seed", type=int, default=3)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    draw = DEFAULT_HYPER.median_draw
    first = RegionParams(-5, 3.0, 12, 5000)
    dates = np.datetime64("2020-06-01") + np.arange(CAL_DAYS + HORIZON)
    (series,) = simulate_cases([first], GlobalParams(2e-5, 0.1), [100_000], dates, draw, rng, region_ids=["county"])
    # Second wave: a fast Gamma infection pulse starting just after the window.
    wave = RegionParams(CAL_DAYS + args.wave_start, 2.0, 6.0, args.wave_size)
    extra = rng.poisson(predict_daily(wave, draw, np.arange(len(dates), dtype=float)))
    series = series.with_counts(np.round(series.counts) + extra)

    cal_end = dates[CAL_DAYS - 1]
    test_start, test_end = dates[CAL_DAYS], dates[-1]
    cal = series.between(dates[0], cal_end)

    problem = CalibrationProblem([smooth_7day(series).between(dates[0], cal_end)])
    chain = calibrate(problem, AMCMCConfig(n_steps=args.steps, burn_in=args.steps // 4, thin=10, seed=args.seed))
    (band,) = posterior_predictive(chain, problem, n_draws=1000, horizon=HORIZON, seed=args.seed)
    observed = smooth_7day(series).between(test_start, test_end)
    fc = band.forecast_part()
    report = detect_alarms(observed, outlier_boundary(fc, 99), boundary_dates=fc.dates)
    show(report, "infection-rate detector (7-day smoothed counts)")

    base = glr_fit(cal)
    show(glr_detect(series.between(test_start, test_end), base), "GLR-Poisson detector (raw counts)")


if __name__ == "__main__":
    main()

"""Posterior-predictive bands and CRPS scoring."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .epimodel import DEFAULT_HYPER, IncubationDraw, _convolve_daily, forecast_cutoff
from .inference import CalibrationProblem, Chain
from .spatial import NumericalError, observation_covariance, precision_matrix

__all__ = [
    "MAX_HORIZON",
    "HorizonError",
    "check_horizon",
    "ForecastBand",
    "posterior_predictive",
    "crps",
    "average_crps",
    "write_bands",
]

MAX_HORIZON = 14


class HorizonError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ForecastBand:
    """Pointwise predictive quantiles for one region, in counts/day.

    ``samples`` holds the raw predictive draws (``n_draws x len(dates)``);
    the first ``n_calibration`` columns cover the calibration window and the
    rest the forecast horizon.
    """

    region_id: str
    dates: np.ndarray
    samples: np.ndarray
    n_calibration: int

    def quantile(self, q) -> np.ndarray:
        return np.quantile(self.samples, q, axis=0)

    @property
    def median(self):
        return self.quantile(0.5)

    @property
    def q05(self):
        return self.quantile(0.05)

    @property
    def q25(self):
        return self.quantile(0.25)

    @property
    def q75(self):
        return self.quantile(0.75)

    @property
    def q95(self):
        return self.quantile(0.95)

    @property
    def horizon(self) -> int:
        return len(self.dates) - self.n_calibration

    def forecast_part(self) -> "ForecastBand":
        k = self.n_calibration
        return ForecastBand(self.region_id, self.dates[k:], self.samples[:, k:], 0)


def check_horizon(horizon: int, hyper=None) -> None:
    """Raise :class:`HorizonError` unless ``0 <= horizon <= MAX_HORIZON``."""
    if horizon > MAX_HORIZON:
        raise HorizonError(
            f"horizon {horizon} exceeds {MAX_HORIZON} days: observations only inform "
            f"infections up to about {forecast_cutoff(hyper or DEFAULT_HYPER):.1f} days "
            "(incubation mean plus two sd) before the last data point, so longer "
            "forecasts are not supported by the data"
        )
    if horizon < 0:
        raise HorizonError("horizon must be non-negative")


def posterior_predictive(
    chain: Chain,
    problem: CalibrationProblem,
    n_draws: int = 100,
    horizon: int = MAX_HORIZON,
    include_noise: bool = True,
    *,
    seed: int = 0,
    draw: IncubationDraw | None = None,
) -> list[ForecastBand]:
    """Simulate case counts over the calibration window plus ``horizon`` days.

    Each predictive draw picks a chain sample and a fresh incubation draw
    (or the fixed ``draw``), runs the convolution model and, with
    ``include_noise``, adds observation noise from the fitted covariance.
    Negative noisy counts are clipped to zero.
    """
    check_horizon(horizon, problem.hyper)
    if chain.n_kept == 0:
        raise ValueError("empty chain")
    layout = problem.layout
    rng = np.random.default_rng(seed)
    idx = rng.choice(chain.n_kept, size=n_draws, replace=chain.n_kept < n_draws)
    T = len(problem.grid)
    grid = np.arange(T + horizon, dtype=float)
    pops = problem.populations
    R = layout.n_regions
    g = 4 * R
    out = np.empty((n_draws, T + horizon, R))
    for j, i in enumerate(idx):
        x = chain.samples[i]
        d = draw or problem.draw_incubation(rng)
        y = np.column_stack(
            [_convolve_daily(*x[4 * r : 4 * r + 3], d.mu, d.sigma, grid) * x[4 * r + 3] for r in range(R)]
        ) / pops
        if include_noise:
            sigma_a, sigma_m = math.exp(x[g]), math.exp(x[g + 1])
            if layout.spatial == "joint":
                try:
                    P_inv = precision_matrix(math.exp(2 * x[g + 2]), float(x[g + 3]), problem.adjacency).P_inv
                except NumericalError:
                    P_inv = np.zeros((R, R))
            elif layout.spatial == "variance":
                P_inv = np.eye(1) * math.exp(2 * x[g + 2])
            else:
                P_inv = np.zeros((R, R))
            cov = observation_covariance(P_inv, sigma_a, sigma_m, y)
            L = np.linalg.cholesky(cov + 1e-300 * np.eye(R))
            y = y + np.einsum("tij,tj->ti", L, rng.standard_normal(y.shape))
        out[j] = np.maximum(y * pops, 0.0)
    dates = problem.dates[0] + np.arange(T + horizon)
    return [
        ForecastBand(rid, dates, out[:, :, r], T) for r, rid in enumerate(layout.region_ids)
    ]


def crps(samples, y) -> float:
    """Empirical CRPS: ``mean|X - y| - 0.5 * mean|X - X'|`` over all sample pairs."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("crps needs at least one sample")
    return float(np.mean(np.abs(x - y)) - 0.5 * np.mean(np.abs(x[:, None] - x[None, :])))


def average_crps(band: ForecastBand, observed, days: slice | None = None) -> float:
    """Per-day CRPS averaged over ``days`` (default: the calibration window)."""
    days = days if days is not None else slice(0, band.n_calibration)
    obs = np.asarray(observed, dtype=float)[days]
    cols = band.samples[:, days]
    if cols.shape[1] != len(obs):
        raise ValueError("observations do not align with the band")
    return float(np.mean([crps(cols[:, i], obs[i]) for i in range(len(obs))]))


def write_bands(path, bands: Sequence[ForecastBand]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "region", "median", "q05", "q25", "q75", "q95"])
        for b in bands:
            q = np.quantile(b.samples, [0.5, 0.05, 0.25, 0.75, 0.95], axis=0)
            for i, day in enumerate(b.dates):
                w.writerow([str(day), b.region_id, *(f"{v:.6g}" for v in q[:, i])])

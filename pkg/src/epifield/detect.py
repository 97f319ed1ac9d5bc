"""Wave-arrival detectors.

The infection-rate detector flags days whose count exceeds the 99th
percentile of the noisy posterior-predictive fan. The GLR-Poisson baseline
fits a seasonal log-linear Poisson mean to training counts and scans the test
window for a changepoint after which the mean level rose.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .data import CaseSeries, DataError
from .forecast import ForecastBand

__all__ = [
    "AlignmentError",
    "GlrFitError",
    "DetectionReport",
    "GlrModel",
    "outlier_boundary",
    "alarm_days_from_outliers",
    "detect_alarms",
    "verify_report",
    "glr_fit",
    "glr_statistic",
    "glr_detect",
    "poisson_quantile",
    "write_report",
]

log = logging.getLogger(__name__)


class AlignmentError(DataError):
    pass


class GlrFitError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class DetectionReport:
    detector_id: str
    region_id: str
    dates: np.ndarray
    observed: np.ndarray
    boundary: np.ndarray
    outlier_days: tuple
    alarm_days: tuple
    statistic: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    def to_record(self, boundary_ref: str | None = None) -> dict:
        rec = {
            "detector": self.detector_id,
            "region": self.region_id,
            "outlier_dates": [str(d) for d in self.outlier_days],
            "alarm_dates": [str(d) for d in self.alarm_days],
            "boundary": boundary_ref,
        }
        rec.update(self.extra)
        return rec


def outlier_boundary(band: ForecastBand, percentile: float = 99) -> np.ndarray:
    """Pointwise percentile of the predictive draws over the forecast horizon."""
    fc = band.samples[:, band.n_calibration :]
    if fc.shape[0] < 100:
        warnings.warn(
            f"only {fc.shape[0]} predictive draws; the {percentile}th percentile is poorly resolved",
            stacklevel=2,
        )
    return np.percentile(fc, percentile, axis=0)


def alarm_days_from_outliers(flags, run_length: int = 3) -> np.ndarray:
    """Boolean mask of days that close a run of at least ``run_length`` outliers."""
    flags = np.asarray(flags, dtype=bool)
    out = np.zeros_like(flags)
    run = 0
    for i, f in enumerate(flags):
        run = run + 1 if f else 0
        out[i] = run >= run_length
    return out


def detect_alarms(
    observed: CaseSeries,
    boundary,
    run_length: int = 3,
    *,
    boundary_dates=None,
    detector_id: str = "infection_rate",
) -> DetectionReport:
    """Outliers are days above the boundary; alarms close a run of ``run_length`` outliers."""
    b = np.asarray(boundary, dtype=float)
    if len(b) != len(observed):
        raise AlignmentError(f"{len(observed)} observed days but {len(b)} boundary values")
    if boundary_dates is not None and not np.array_equal(
        np.asarray(boundary_dates, dtype="datetime64[D]"), observed.dates
    ):
        raise AlignmentError("observed and boundary dates differ")
    flags = observed.counts > b
    alarms = alarm_days_from_outliers(flags, run_length)
    return DetectionReport(
        detector_id,
        observed.region_id,
        observed.dates,
        observed.counts,
        b,
        tuple(observed.dates[flags]),
        tuple(observed.dates[alarms]),
        extra={"run_length": run_length},
    )


def verify_report(report: DetectionReport, run_length: int = 3) -> bool:
    """Check alarms are outliers and each closes ``run_length`` consecutive outlier days."""
    outliers = set(np.asarray(report.outlier_days, dtype="datetime64[D]").tolist())
    for day in np.asarray(report.alarm_days, dtype="datetime64[D]"):
        for back in range(run_length):
            if (day - back).tolist() not in outliers:
                return False
    return True


@dataclass(frozen=True, eq=False)
class GlrModel:
    """Seasonal log-linear Poisson mean ``exp(X(t) @ beta)``.

    ``t`` counts days from ``origin``; ``X(t) = [1, t, sin(wt), cos(wt)]``
    for one harmonic.
    """

    beta: np.ndarray
    origin: np.datetime64
    omega: float = 2 * math.pi / 365
    S: int = 1
    c_gamma: float = 3.0
    cov: np.ndarray | None = None

    def design(self, t) -> np.ndarray:
        return _design(np.asarray(t, dtype=float), self.omega, self.S)

    def days(self, dates) -> np.ndarray:
        return (np.asarray(dates, dtype="datetime64[D]") - self.origin).astype(float)

    def mean(self, dates) -> np.ndarray:
        return np.exp(self.design(self.days(dates)) @ self.beta)


def _design(t, omega, S):
    cols = [np.ones_like(t), t]
    for s in range(1, S + 1):
        cols += [np.sin(omega * s * t), np.cos(omega * s * t)]
    return np.column_stack(cols)


def _poisson_irls(X, y, offset=None, tol=1e-8, max_iter=100, beta0=None):
    # Newton/IRLS with step halving; returns (beta, grad_norm, converged).
    n, p = X.shape
    off = np.zeros(n) if offset is None else offset
    if beta0 is None:
        beta = np.zeros(p)
        beta[0] = math.log(max(y.mean(), 1e-8)) - float(np.mean(off))
    else:
        beta = np.array(beta0, dtype=float)

    def nll(b):
        eta = X @ b + off
        return float(np.sum(np.exp(eta) - y * eta))

    cur = nll(beta)
    gnorm = math.inf
    for _ in range(max_iter):
        mu = np.exp(X @ beta + off)
        grad = X.T @ (y - mu)
        gnorm = float(np.linalg.norm(grad))
        if gnorm < tol:
            return beta, gnorm, True
        H = X.T @ (mu[:, None] * X)
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        t = 1.0
        while t > 1e-10:
            cand = beta + t * step
            val = nll(cand)
            if val <= cur + 1e-12 * abs(cur):
                break
            t *= 0.5
        beta, cur = cand, val
    mu = np.exp(X @ beta + off)
    gnorm = float(np.linalg.norm(X.T @ (y - mu)))
    return beta, gnorm, gnorm < tol


def glr_fit(
    train: CaseSeries,
    *,
    S: int = 1,
    c_gamma: float = 3.0,
    free=None,
    tol: float = 1e-8,
    max_iter: int = 100,
) -> GlrModel:
    """Poisson maximum-likelihood fit of the seasonal log-linear mean.

    ``free`` optionally masks which coefficients are estimated (others are
    held at zero). Time is measured in days from the first training date.

    Raises
    ------
    GlrFitError
        On all-zero counts or if the gradient norm does not drop below
        ``tol`` within ``max_iter`` iterations.
    """
    y = train.counts
    if len(y) < 30:
        raise DataError("GLR training needs at least 30 days")
    if np.any(y != np.round(y)):
        raise DataError("GLR-Poisson needs raw integer counts")
    if not np.any(y > 0):
        raise GlrFitError("all training counts are zero; Poisson MLE is degenerate")
    omega = 2 * math.pi / 365
    t = np.arange(len(y), dtype=float)
    X = _design(t, omega, S)
    mask = np.ones(X.shape[1], dtype=bool) if free is None else np.asarray(free, dtype=bool)
    # Fit in a column-scaled basis for conditioning; gradient checked in the original one.
    scale = np.abs(X[:, mask]).max(axis=0)
    Xs = X[:, mask] / scale
    bs, _, _ = _poisson_irls(Xs, y, tol=tol * 1e-3, max_iter=max_iter)
    b_free = bs / scale
    b_free, gnorm, ok = _poisson_irls(X[:, mask], y, tol=tol, max_iter=max_iter, beta0=b_free)
    if not ok:
        raise GlrFitError(f"IRLS did not converge in {max_iter} iterations (|grad|={gnorm:.3e})")
    beta = np.zeros(X.shape[1])
    beta[mask] = b_free
    mu = np.exp(X @ beta)
    H = X[:, mask].T @ (mu[:, None] * X[:, mask])
    cov = np.zeros((X.shape[1], X.shape[1]))
    cov[np.ix_(mask, mask)] = np.linalg.inv(H)
    return GlrModel(beta, train.dates[0], omega, S, c_gamma, cov)


def _window_llr(y, mu0, X, refit):
    # sup over beta1 of sum log f_beta1(y) / f_beta0(y) on one window.
    if refit == "none":
        return 0.0
    if refit == "intercept":
        s, m = float(y.sum()), float(mu0.sum())
        if s <= m:
            return 0.0
        kappa = math.log(s / m)
        return s * kappa - (math.exp(kappa) - 1.0) * m
    if refit == "full":
        if len(y) < X.shape[1] or np.linalg.matrix_rank(X) < X.shape[1]:
            raise GlrFitError("window too short for a full refit")
        offset = np.log(mu0)
        delta, _, ok = _poisson_irls(X, y, offset=offset, tol=1e-8, max_iter=100)
        if not ok:
            raise GlrFitError("refit did not converge")
        eta = X @ delta
        return float(np.sum(y * eta - mu0 * (np.exp(eta) - 1.0)))
    raise ValueError(f"unknown refit mode {refit!r}")


def glr_statistic(test: CaseSeries, base: GlrModel, refit: str = "intercept") -> np.ndarray:
    """Running GLR statistic ``G_n = max_{l<=n} sup_beta sum_{t=l..n} log LR``.

    ``refit="intercept"`` lets the test-window model raise the base mean by a
    common factor (a level shift, one-sided upward); ``"full"`` re-estimates
    all coefficients on each window; ``"none"`` pins the test model to the
    base model.
    """
    y = test.counts
    if np.any(y < 0) or np.any(y != np.round(y)):
        raise DataError("GLR-Poisson needs raw non-negative integer counts")
    if len(y) > 31:
        raise DataError("GLR test window is limited to 31 days")
    t = base.days(test.dates)
    mu0 = base.mean(test.dates)
    X = base.design(t)
    G = np.zeros(len(y))
    for n in range(len(y)):
        best = 0.0
        for l in range(n + 1):
            try:
                val = _window_llr(y[l : n + 1], mu0[l : n + 1], X[l : n + 1], refit)
            except GlrFitError as exc:
                log.warning("skipping changepoint %d for day %d: %s", l, n, exc)
                continue
            best = max(best, val)
        G[n] = best
    return G


def _glr_boundary(test: CaseSeries, base: GlrModel, c_gamma: float, refit: str) -> np.ndarray:
    # Smallest count on day n that would push G_n above c_gamma, earlier days as observed.
    y = test.counts.astype(float)
    mu0 = base.mean(test.dates)
    X = base.design(base.days(test.dates))
    out = np.empty(len(y))
    for n in range(len(y)):

        def G(v):
            yy = y[: n + 1].copy()
            yy[n] = v
            best = 0.0
            for l in range(n + 1):
                try:
                    best = max(best, _window_llr(yy[l:], mu0[l : n + 1], X[l : n + 1], refit))
                except GlrFitError:
                    continue
            return best

        if G(0.0) > c_gamma:
            out[n] = 0.0
            continue
        hi = float(max(1, math.ceil(mu0[n])))
        while G(hi) <= c_gamma:
            hi *= 2
            if hi > 1e12:
                break
        lo = 0.0
        while hi - lo > 1:
            mid = math.floor((lo + hi) / 2)
            if G(mid) > c_gamma:
                hi = mid
            else:
                lo = mid
        out[n] = hi
    return out


def glr_detect(
    test: CaseSeries,
    base: GlrModel,
    c_gamma: float | None = None,
    *,
    refit: str = "intercept",
    run_length: int = 3,
    outlier_rule: str = "glr",
) -> DetectionReport:
    """GLR-Poisson detection over a test window of at most 31 days.

    With ``outlier_rule="glr"`` a day is an outlier when the running GLR
    statistic exceeds ``c_gamma`` and the boundary is the smallest count that
    would have made that day an outlier. ``"poisson_quantile"`` instead marks
    days above the base model's 99th-percentile Poisson count. Alarms follow
    the same run rule as the infection-rate detector.
    """
    c = base.c_gamma if c_gamma is None else c_gamma
    G = glr_statistic(test, base, refit)
    if outlier_rule == "glr":
        boundary = _glr_boundary(test, base, c, refit)
        flags = G > c
    elif outlier_rule == "poisson_quantile":
        boundary = poisson_quantile(base.mean(test.dates), 0.99)
        flags = test.counts > boundary
    else:
        raise ValueError(f"unknown outlier rule {outlier_rule!r}")
    alarms = alarm_days_from_outliers(flags, run_length)
    return DetectionReport(
        "glr_poisson",
        test.region_id,
        test.dates,
        test.counts,
        boundary,
        tuple(test.dates[flags]),
        tuple(test.dates[alarms]),
        statistic=G,
        extra={"c_gamma": c, "refit": refit, "run_length": run_length, "outlier_rule": outlier_rule},
    )


def poisson_quantile(mu, q=0.99) -> np.ndarray:
    """Smallest integer ``k`` with ``P(Y <= k) >= q`` for ``Y ~ Poisson(mu)``."""
    return stats.poisson.ppf(q, np.atleast_1d(np.asarray(mu, dtype=float)))


def write_report(path, reports, boundary_ref: str | None = None) -> None:
    records = [r.to_record(boundary_ref) for r in reports]
    Path(path).write_text(json.dumps(records, indent=2) + "\n")

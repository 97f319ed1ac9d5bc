"""Single-wave convolution model for daily symptomatic counts.

Infections in a region follow a Gamma-shaped rate in time starting at ``t0``;
each infection turns symptomatic after a lognormal incubation delay whose
log-mean and log-sd are themselves random.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special, stats

__all__ = [
    "RegionParams",
    "IncubationDraw",
    "IncubationHyper",
    "DEFAULT_HYPER",
    "calibrate_incubation_hyper",
    "infection_rate_pdf",
    "incubation_pdf",
    "incubation_cdf",
    "sample_incubation",
    "predict_daily",
    "forecast_cutoff",
]

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class RegionParams:
    """Epidemiological parameters of one areal unit.

    ``t0`` is measured in days from the calibration origin, ``theta`` in days
    and ``N`` in persons (raw counts, not population-normalised).
    """

    t0: float
    k: float
    theta: float
    N: float

    def __post_init__(self):
        if not (self.k > 0 and self.theta > 0 and self.N > 0):
            raise ValueError(f"k, theta and N must be positive: {self}")
        if not math.isfinite(self.t0):
            raise ValueError("t0 must be finite")


@dataclass(frozen=True)
class IncubationDraw:
    mu: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("incubation sigma must be positive")


@dataclass(frozen=True)
class IncubationHyper:
    """Distribution of the incubation log-mean and log-sd.

    ``mu = mu_center + mu_scale * T`` with ``T`` Student-t on ``mu_df``
    degrees of freedom, and ``sigma = sigma_scale * sqrt(X / sigma_df)`` with
    ``X`` chi-square on ``sigma_df`` degrees of freedom.
    """

    mu_center: float
    mu_scale: float
    mu_df: float
    sigma_df: float
    sigma_scale: float

    def __post_init__(self):
        if min(self.mu_scale, self.mu_df, self.sigma_df, self.sigma_scale) <= 0:
            raise ValueError("incubation hyper-parameters must be positive")

    def mu_interval(self, level=0.95):
        q = stats.t.ppf(0.5 + level / 2, self.mu_df)
        return self.mu_center - self.mu_scale * q, self.mu_center + self.mu_scale * q

    def sigma_interval(self, level=0.95):
        lo, hi = stats.chi2.ppf([0.5 - level / 2, 0.5 + level / 2], self.sigma_df)
        scale = self.sigma_scale / math.sqrt(self.sigma_df)
        return scale * math.sqrt(lo), scale * math.sqrt(hi)

    @property
    def median_draw(self) -> IncubationDraw:
        s = self.sigma_scale * math.sqrt(stats.chi2.median(self.sigma_df) / self.sigma_df)
        return IncubationDraw(self.mu_center, s)


def calibrate_incubation_hyper(
    mu_ci=(1.48, 1.76), sigma_ci=(0.320, 0.515), level=0.95
) -> IncubationHyper:
    """Solve for hyper-parameters whose central intervals equal the targets.

    The sigma interval fixes both chi-square parameters. A symmetric mu
    interval only pins one Student-t parameter, so ``mu_df`` is tied to
    ``sigma_df`` (both stand for the same sample size) and ``mu_scale`` is
    solved from the interval half-width.
    """
    lo_p, hi_p = 0.5 - level / 2, 0.5 + level / 2
    s_lo, s_hi = sigma_ci
    target = (s_hi / s_lo) ** 2

    def ratio(df):
        return stats.chi2.ppf(hi_p, df) / stats.chi2.ppf(lo_p, df) - target

    sigma_df = optimize.brentq(ratio, 1.0, 1e4, xtol=1e-12)
    sigma_scale = s_lo / math.sqrt(stats.chi2.ppf(lo_p, sigma_df) / sigma_df)
    mu_center = 0.5 * (mu_ci[0] + mu_ci[1])
    mu_scale = 0.5 * (mu_ci[1] - mu_ci[0]) / stats.t.ppf(hi_p, sigma_df)
    return IncubationHyper(
        mu_center, float(mu_scale), float(sigma_df), float(sigma_df), float(sigma_scale)
    )


# Output of calibrate_incubation_hyper() with its default targets; see
# demos/calibrate_incubation.py.
DEFAULT_HYPER = IncubationHyper(
    mu_center=1.62,
    mu_scale=0.06895491399494877,
    mu_df=34.901789610452404,
    sigma_df=34.901789610452404,
    sigma_scale=0.4175971407229095,
)


def infection_rate_pdf(t, k, theta):
    """Gamma density of the infection rate, in 1/day.

    Raises ``ValueError`` for negative ``t``; callers wanting zero before the
    outbreak start must mask explicitly.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("infection_rate_pdf is defined for t >= 0 only")
    if k <= 0 or theta <= 0:
        raise ValueError("k and theta must be positive")
    with np.errstate(divide="ignore", invalid="ignore"):
        logt = np.log(t)
        logpdf = (k - 1.0) * logt - t / theta - k * math.log(theta) - math.lgamma(k)
    out = np.exp(logpdf)
    if k == 1.0:
        out = np.where(t == 0, 1.0 / theta, out)
    return out if out.ndim else float(out)


def incubation_pdf(t, draw: IncubationDraw):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    lt = np.log(t[pos])
    z = (lt - draw.mu) / draw.sigma
    out[pos] = np.exp(-0.5 * z * z - lt - math.log(draw.sigma) - _LOG_SQRT_2PI)
    return out if out.ndim else float(out)


def incubation_cdf(t, draw: IncubationDraw):
    """Lognormal CDF via ``erfc``; zero for ``t <= 0``."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = 0.5 * special.erfc(-(np.log(t[pos]) - draw.mu) / (draw.sigma * math.sqrt(2.0)))
    return out if out.ndim else float(out)


def sample_incubation(hyper: IncubationHyper, rng: np.random.Generator) -> IncubationDraw:
    mu = hyper.mu_center + hyper.mu_scale * rng.standard_t(hyper.mu_df)
    sigma = hyper.sigma_scale * math.sqrt(rng.chisquare(hyper.sigma_df) / hyper.sigma_df)
    return IncubationDraw(mu, sigma)


def _convolve_daily(t0, k, theta, mu, sigma, grid):
    # Midpoint rule with unit steps on tau anchored at t0; all s_i = t_i - t0
    # share the fractional part phi, so full bins form a discrete convolution
    # and each day adds one partial bin of width phi.
    s = grid - t0
    out = np.zeros(len(grid))
    active = s > 0
    if not active.any():
        return out
    s_act = s[active]
    phi = s_act[0] - math.floor(s_act[0])
    m = np.rint(s_act - phi).astype(int)
    M = int(m.max())

    log_norm_inf = k * math.log(theta) + math.lgamma(k)
    log_norm_inc = math.log(sigma) + _LOG_SQRT_2PI

    def f_inf(u):
        return np.exp((k - 1.0) * np.log(u) - u / theta - log_norm_inf)

    def f_inc(u):
        lu = np.log(u)
        z = (lu - mu) / sigma
        return np.exp(-0.5 * z * z - lu - log_norm_inc)

    vals = np.zeros(len(s_act))
    if M >= 1:
        mid = np.arange(M) + 0.5
        conv = np.convolve(f_inf(mid), f_inc(mid + phi))[:M]
        full = m >= 1
        vals[full] = conv[m[full] - 1]
    if phi > 0:
        vals += phi * f_inf(m + 0.5 * phi) * f_inc(np.array([0.5 * phi]))[0]
    out[active] = vals
    return out


def predict_daily(params: RegionParams, draw: IncubationDraw, grid) -> np.ndarray:
    """Expected new symptomatic counts on each day of ``grid``.

    ``grid`` holds day numbers with unit spacing. Each value is
    ``N * dt * integral_{t0}^{t_i} f_inf(tau - t0) f_inc(t_i - tau) dtau``,
    integrated with a one-day midpoint rule.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1:
        raise ValueError("grid must be one-dimensional")
    if len(grid) > 1 and not np.allclose(np.diff(grid), 1.0):
        raise ValueError("grid must have daily spacing")
    dens = _convolve_daily(params.t0, params.k, params.theta, draw.mu, draw.sigma, grid)
    return params.N * dens


def forecast_cutoff(hyper: IncubationHyper | None = None, *, mu_hi=None, sigma_hi=None):
    """Days after which observations stop informing the infection rate.

    Defined as ``exp(mu_hi + 2 * sigma_hi)`` from the upper ends of the 95%
    intervals of the incubation parameters. Either pass ``hyper`` or both
    endpoints.
    """
    if hyper is not None:
        mu_hi = hyper.mu_interval()[1]
        sigma_hi = hyper.sigma_interval()[1]
    if mu_hi is None or sigma_hi is None:
        raise TypeError("pass either hyper or both mu_hi and sigma_hi")
    return math.exp(mu_hi + 2.0 * sigma_hi)

"""Posterior construction and adaptive pseudo-marginal Metropolis sampling.

Sampled coordinates per region are ``(t0, k, theta, N)`` on their natural
scale, followed by ``log sigma_a`` and ``log sigma_m`` and, when the spatial
block is active, ``log tau`` and ``lambda``.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from .data import Adjacency, CaseSeries, DataError, StudyWindow, normalize, smooth_7day
from .epimodel import (
    DEFAULT_HYPER,
    IncubationDraw,
    IncubationHyper,
    RegionParams,
    _convolve_daily,
    sample_incubation,
)
from .spatial import GlobalParams, NumericalError, precision_matrix

__all__ = [
    "SamplerError",
    "ParamVector",
    "ParamLayout",
    "PriorSpec",
    "log_prior",
    "log_likelihood",
    "CalibrationProblem",
    "AMCMCConfig",
    "PAPER_SCALE",
    "Chain",
    "amcmc_run",
    "ess",
    "save_chain",
    "load_chain",
    "find_start",
    "calibrate",
]

log = logging.getLogger(__name__)

_LOG_2PI = math.log(2.0 * math.pi)
REGION_FIELDS = ("t0", "k", "theta", "N")


class SamplerError(RuntimeError):
    """The sampler cannot start (non-finite target at the initial state)."""


@dataclass(frozen=True)
class ParamVector:
    regions: tuple
    global_params: GlobalParams

    def __post_init__(self):
        object.__setattr__(self, "regions", tuple(self.regions))


@dataclass(frozen=True)
class ParamLayout:
    """Maps between :class:`ParamVector` and flat sampled coordinates.

    ``spatial`` is ``"joint"`` (``log tau`` and ``lambda`` sampled),
    ``"variance"`` (single region, ``tau^2`` kept as a pure variance term)
    or ``"none"`` (spatial block dropped).
    """

    region_ids: tuple
    spatial: str = "joint"

    def __post_init__(self):
        object.__setattr__(self, "region_ids", tuple(self.region_ids))
        if self.spatial not in ("joint", "variance", "none"):
            raise ValueError(f"unknown spatial mode {self.spatial!r}")
        if self.spatial != "joint" and self.n_regions != 1:
            raise ValueError("only single-region fits may drop the spatial block")

    @property
    def n_regions(self) -> int:
        return len(self.region_ids)

    @property
    def dim(self) -> int:
        return 4 * self.n_regions + 2 + {"joint": 2, "variance": 1, "none": 0}[self.spatial]

    @property
    def names(self) -> tuple:
        out = [f"{r}:{f}" for r in self.region_ids for f in REGION_FIELDS]
        out += ["log_sigma_a", "log_sigma_m"]
        if self.spatial in ("joint", "variance"):
            out.append("log_tau")
        if self.spatial == "joint":
            out.append("lambda")
        return tuple(out)

    @property
    def natural_names(self) -> tuple:
        out = [f"{r}:{f}" for r in self.region_ids for f in REGION_FIELDS]
        out += ["sigma_a", "sigma_m"]
        if self.spatial in ("joint", "variance"):
            out.append("tau2")
        if self.spatial == "joint":
            out.append("lambda")
        return tuple(out)

    @property
    def _g(self) -> int:
        return 4 * self.n_regions

    def pack(self, p: ParamVector) -> np.ndarray:
        if len(p.regions) != self.n_regions:
            raise ValueError("region count does not match layout")
        x = [v for r in p.regions for v in (r.t0, r.k, r.theta, r.N)]
        g = p.global_params
        x += [math.log(g.sigma_a), math.log(g.sigma_m)]
        if self.spatial in ("joint", "variance"):
            x.append(0.5 * math.log(g.tau2))
        if self.spatial == "joint":
            x.append(g.lam)
        return np.array(x, dtype=float)

    def unpack(self, x) -> ParamVector:
        x = np.asarray(x, dtype=float)
        regions = [RegionParams(*map(float, x[4 * i : 4 * i + 4])) for i in range(self.n_regions)]
        g = self._g
        tau2 = lam = None
        if self.spatial in ("joint", "variance"):
            tau2 = math.exp(2.0 * x[g + 2])
        if self.spatial == "joint":
            lam = float(x[g + 3])
        glob = GlobalParams(math.exp(x[g]), math.exp(x[g + 1]), tau2, lam)
        return ParamVector(regions, glob)

    def natural(self, samples) -> np.ndarray:
        """Samples transformed to natural scale, columns ``natural_names``."""
        s = np.array(samples, dtype=float, copy=True)
        g = self._g
        s[..., g] = np.exp(s[..., g])
        s[..., g + 1] = np.exp(s[..., g + 1])
        if self.spatial in ("joint", "variance"):
            s[..., g + 2] = np.exp(2.0 * s[..., g + 2])
        return s

    def groups(self) -> dict:
        """Column indices per model component: each region, SpC and ErrM."""
        out = {r: list(range(4 * i, 4 * i + 4)) for i, r in enumerate(self.region_ids)}
        g = self._g
        if self.spatial == "joint":
            out["SpC"] = [g + 2, g + 3]
        elif self.spatial == "variance":
            out["SpC"] = [g + 2]
        out["ErrM"] = [g, g + 1]
        return out


@dataclass(frozen=True)
class PriorSpec:
    """Prior hyper-parameters.

    ``n_max`` is the upper bound of the uniform prior on ``N`` (scalar or one
    value per region); :meth:`for_populations` sets it to twice each
    region's population.
    """

    t0_mean: float = 0.0
    t0_sd: float = 10.0
    logsigma_bounds: tuple = (-30.0, 10.0)
    tau_shape: float = 10.0
    tau_scale: float = 2.0
    lambda_range: tuple = (0.0, 0.9)
    k_max: float = 50.0
    theta_max: float = 100.0
    n_max: object = 1e8

    def __post_init__(self):
        if not self.t0_sd > 0:
            raise ValueError("t0_sd must be positive")
        vals = [self.t0_mean, *self.logsigma_bounds, *self.lambda_range, self.k_max, self.theta_max]
        vals += list(np.atleast_1d(self.n_max))
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("prior bounds must be finite")

    @classmethod
    def for_populations(cls, populations, **kwargs) -> "PriorSpec":
        return cls(n_max=tuple(2.0 * float(p) for p in populations), **kwargs)


def _log_prior_array(x, layout: ParamLayout, spec: PriorSpec) -> float:
    # Plain-float loop: this runs once per MCMC step on a handful of values.
    R = layout.n_regions
    v = x.tolist() if isinstance(x, np.ndarray) else list(x)
    n_max = spec.n_max
    n_max = [float(n_max)] * R if np.ndim(n_max) == 0 else [float(n) for n in n_max]
    lp = 0.0
    inv_sd = 1.0 / spec.t0_sd
    for i in range(R):
        t0, k, theta, N = v[4 * i : 4 * i + 4]
        if not (0 < k <= spec.k_max and 0 < theta <= spec.theta_max and 0 < N <= n_max[i]):
            return -math.inf
        z = (t0 - spec.t0_mean) * inv_sd
        lp -= 0.5 * z * z + math.log(n_max[i])
    lp -= R * (math.log(spec.t0_sd) + 0.5 * _LOG_2PI + math.log(spec.k_max * spec.theta_max))
    g = 4 * R
    lo, hi = spec.logsigma_bounds
    if not (lo <= v[g] <= hi and lo <= v[g + 1] <= hi):
        return -math.inf
    lp -= 2.0 * math.log(hi - lo)
    if layout.spatial in ("joint", "variance"):
        # Gamma(shape, scale) on tau, sampled as log tau: density carries +log tau.
        log_tau = v[g + 2]
        if not -700 < log_tau < 700:
            return -math.inf
        a, s = spec.tau_shape, spec.tau_scale
        lp += a * log_tau - math.exp(log_tau) / s - math.lgamma(a) - a * math.log(s)
    if layout.spatial == "joint":
        l_lo, l_hi = spec.lambda_range
        if not l_lo <= v[g + 3] <= l_hi:
            return -math.inf
        lp -= math.log(l_hi - l_lo)
    return lp


def log_prior(p: ParamVector, spec: PriorSpec, layout: ParamLayout | None = None) -> float:
    """Log prior density with respect to the sampled coordinates.

    Returns ``-inf`` outside the prior support.
    """
    if layout is None:
        g = p.global_params
        spatial = "joint" if g.lam is not None else ("variance" if g.tau2 is not None else "none")
        layout = ParamLayout(tuple(str(i) for i in range(len(p.regions))), spatial)
    try:
        x = layout.pack(p)
    except ValueError:
        return -math.inf
    return _log_prior_array(x, layout, spec)


def _gaussian_loglik(resid, y_pred, sigma_a, sigma_m, P_inv, extra_var=0.0) -> float:
    # resid, y_pred: (T, R). P_inv None means a diagonal model.
    d = sigma_a + sigma_m * y_pred
    if P_inv is None:
        var = d * d + extra_var
        if np.any(var <= 0):
            return -math.inf
        return float(-0.5 * np.sum(_LOG_2PI + np.log(var) + resid * resid / var))
    T, R = resid.shape
    cov = np.broadcast_to(P_inv, (T, R, R)).copy()
    idx = np.arange(R)
    cov[:, idx, idx] += d * d
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        log.warning("observation covariance not SPD; rejecting state")
        return -math.inf
    sol = np.linalg.solve(L, resid[..., None])[..., 0]
    logdet = 2.0 * np.sum(np.log(np.diagonal(L, axis1=1, axis2=2)))
    return float(-0.5 * (T * R * _LOG_2PI + logdet + np.sum(sol * sol)))


def _predict_normalized(x, layout, grid, populations, mu, sigma):
    R = layout.n_regions
    out = np.empty((len(grid), R))
    for i in range(R):
        t0, k, theta, N = x[4 * i : 4 * i + 4]
        out[:, i] = N * _convolve_daily(t0, k, theta, mu, sigma, grid) / populations[i]
    return out


def _loglik_array(x, layout, y_obs, grid, populations, draw, adjacency) -> float:
    g = 4 * layout.n_regions
    sigma_a, sigma_m = math.exp(x[g]), math.exp(x[g + 1])
    y_pred = _predict_normalized(x, layout, grid, populations, draw.mu, draw.sigma)
    resid = y_obs - y_pred
    if layout.spatial == "none":
        return _gaussian_loglik(resid, y_pred, sigma_a, sigma_m, None)
    tau2 = math.exp(2.0 * x[g + 2])
    if layout.spatial == "variance":
        return _gaussian_loglik(resid, y_pred, sigma_a, sigma_m, None, extra_var=tau2)
    try:
        kernel = precision_matrix(tau2, float(x[g + 3]), adjacency)
    except (NumericalError, ValueError):
        log.warning("precision matrix not SPD; rejecting state")
        return -math.inf
    return _gaussian_loglik(resid, y_pred, sigma_a, sigma_m, kernel.P_inv)


def _common_grid(data: Sequence[CaseSeries]):
    first = data[0].dates
    for s in data[1:]:
        if not np.array_equal(s.dates, first):
            raise DataError("all series must share a common date grid")
    return np.arange(len(first), dtype=float)


def log_likelihood(
    p: ParamVector,
    data: Sequence[CaseSeries],
    adj: Adjacency | None,
    draw: IncubationDraw,
    *,
    spatial: str | None = None,
) -> float:
    """Gaussian log-likelihood of normalised counts, independent across days.

    Day ``i`` of ``data`` sits at model time ``i`` (the first date is the
    calibration origin). ``spatial`` defaults to ``"joint"`` when ``p``
    carries ``lam``, ``"variance"`` when it carries only ``tau2`` and
    ``"none"`` otherwise.
    """
    if spatial is None:
        g = p.global_params
        spatial = "joint" if g.lam is not None else ("variance" if g.tau2 is not None else "none")
    layout = ParamLayout(tuple(s.region_id for s in data), spatial)
    if spatial == "joint" and (adj is None or tuple(adj.region_ids) != layout.region_ids):
        raise DataError("adjacency must list the same regions as the data, in order")
    grid = _common_grid(data)
    y_obs = np.column_stack([normalize(s) for s in data])
    pops = np.array([s.population for s in data], dtype=float)
    return _loglik_array(layout.pack(p), layout, y_obs, grid, pops, draw, adj)


class CalibrationProblem:
    """Posterior for one calibration window, usable directly as an AMCMC target.

    Calling the problem with ``(x, rng)`` draws fresh incubation parameters
    and returns a pseudo-marginal estimate of the log posterior: the log of
    the likelihood averaged over ``n_incubation_draws`` draws, plus the log
    prior. Passing ``pinned_draw`` replaces the random draws with a constant.
    """

    def __init__(
        self,
        series: Sequence[CaseSeries],
        adjacency: Adjacency | None = None,
        prior: PriorSpec | None = None,
        hyper: IncubationHyper = DEFAULT_HYPER,
        *,
        single_region_spatial: bool = False,
        n_incubation_draws: int = 1,
        pinned_draw: IncubationDraw | None = None,
    ):
        self.series = list(series)
        if not self.series:
            raise DataError("no series to calibrate")
        region_ids = tuple(s.region_id for s in self.series)
        if len(region_ids) == 1:
            spatial = "variance" if single_region_spatial else "none"
        else:
            spatial = "joint"
            if adjacency is None or tuple(adjacency.region_ids) != region_ids:
                raise DataError("adjacency must list the calibration regions, in order")
        self.layout = ParamLayout(region_ids, spatial)
        self.adjacency = adjacency
        self.populations = np.array([s.population for s in self.series], dtype=float)
        self.prior = prior if prior is not None else PriorSpec.for_populations(self.populations)
        self.hyper = hyper
        self.grid = _common_grid(self.series)
        self.dates = self.series[0].dates
        self.y_obs = np.column_stack([normalize(s) for s in self.series])
        if n_incubation_draws < 1:
            raise ValueError("n_incubation_draws must be at least 1")
        self.n_incubation_draws = int(n_incubation_draws)
        self.pinned_draw = pinned_draw

    @classmethod
    def from_window(
        cls,
        series: Sequence[CaseSeries],
        window: StudyWindow,
        adjacency: Adjacency | None = None,
        *,
        smooth: bool = True,
        prior: PriorSpec | None = None,
        **kwargs,
    ) -> "CalibrationProblem":
        """Smooth (on the full record, so early window days see prior data) then clip."""
        prepared = [smooth_7day(s) if smooth else s for s in series]
        clipped = [s.between(window.calibration_start, window.calibration_end) for s in prepared]
        for s in clipped:
            if len(s) != window.n_calibration_days:
                raise DataError(f"{s.region_id}: data does not cover the calibration window")
        return cls(clipped, adjacency, prior, **kwargs)

    @property
    def region_ids(self) -> tuple:
        return self.layout.region_ids

    def log_prior(self, x) -> float:
        return _log_prior_array(np.asarray(x, dtype=float), self.layout, self.prior)

    def log_likelihood(self, x, draw: IncubationDraw) -> float:
        return _loglik_array(
            np.asarray(x, dtype=float),
            self.layout,
            self.y_obs,
            self.grid,
            self.populations,
            draw,
            self.adjacency,
        )

    def log_posterior(self, x, draw: IncubationDraw) -> float:
        lp = self.log_prior(x)
        if lp == -math.inf:
            return lp
        return lp + self.log_likelihood(x, draw)

    def draw_incubation(self, rng) -> IncubationDraw:
        if self.pinned_draw is not None:
            return self.pinned_draw
        return sample_incubation(self.hyper, rng)

    def __call__(self, x, rng: np.random.Generator) -> float:
        lp = self.log_prior(x)
        if lp == -math.inf:
            return lp
        m = self.n_incubation_draws
        if m == 1:
            return lp + self.log_likelihood(x, self.draw_incubation(rng))
        ll = np.array([self.log_likelihood(x, self.draw_incubation(rng)) for _ in range(m)])
        top = ll.max()
        if top == -math.inf:
            return -math.inf
        return lp + top + math.log(np.mean(np.exp(ll - top)))

    def initial_guess(self) -> np.ndarray:
        """Moment-matched starting point; refine with :func:`find_start`."""
        incubation_mean = math.exp(self.hyper.mu_center + 0.5 * self.hyper.median_draw.sigma**2)
        x = []
        for i in range(self.layout.n_regions):
            counts = self.y_obs[:, i] * self.populations[i]
            total = max(counts.sum(), 1.0)
            w = counts / total
            t0 = self.prior.t0_mean
            mean = max(float(w @ self.grid) - incubation_mean - t0, 5.0)
            var = max(float(w @ (self.grid - w @ self.grid) ** 2), 4.0)
            k = float(np.clip(mean * mean / var, 0.5, 0.9 * self.prior.k_max))
            theta = float(np.clip(var / mean, 0.5, 0.9 * self.prior.theta_max))
            n_max = np.broadcast_to(np.asarray(self.prior.n_max, dtype=float), (len(self.series),))
            N = float(min(1.2 * total, 0.5 * n_max[i]))
            x += [t0, k, theta, N]
        scale = float(np.std(self.y_obs)) or 1e-6
        x += [math.log(0.2 * scale), math.log(0.1)]
        if self.layout.spatial in ("joint", "variance"):
            x.append(math.log(0.2 * scale))
        if self.layout.spatial == "joint":
            x.append(0.5)
        return np.array(x)


def find_start(problem: CalibrationProblem, x0=None, *, restarts: int = 3, maxiter: int = 4000):
    """Maximise the log posterior at the median incubation draw.

    Returns ``(x, cov)`` where ``cov`` is a finite-difference Laplace
    covariance suitable as the initial AMCMC proposal, or a diagonal
    fallback when the Hessian is not negative definite.
    """
    draw = problem.pinned_draw or problem.hyper.median_draw
    x = problem.initial_guess() if x0 is None else np.asarray(x0, dtype=float)
    scale = np.maximum(np.abs(x) * 0.1, 0.05)

    def objective(u):
        v = problem.log_posterior(x_ref + u * scale, draw)
        return 1e100 if not math.isfinite(v) else -v

    x_ref = x
    best = x
    for _ in range(restarts):
        x_ref = best
        res = optimize.minimize(
            objective,
            np.zeros_like(x),
            method="Nelder-Mead",
            options={"maxiter": maxiter, "xatol": 1e-6, "fatol": 1e-8, "adaptive": True},
        )
        best = x_ref + res.x * scale
    if not math.isfinite(problem.log_posterior(best, draw)):
        return best, np.diag((0.01 * scale) ** 2)
    return best, _laplace_cov(lambda v: problem.log_posterior(v, draw), best, scale)


def calibrate(problem: CalibrationProblem, config: AMCMCConfig | None = None, x0=None) -> Chain:
    """Optimise a starting point, then run AMCMC from it.

    The initial proposal is the Laplace covariance scaled by ``2.4**2 / d``
    unless ``config.init_cov`` is set.
    """
    config = config or AMCMCConfig()
    start, cov = find_start(problem, x0)
    if not math.isfinite(problem.log_posterior(start, problem.pinned_draw or problem.hyper.median_draw)):
        raise SamplerError("no starting point with a finite log posterior was found")
    if config.init_cov is None:
        config = replace(config, init_cov=cov * 2.4**2 / len(start))
    chain = amcmc_run(problem, start, config)
    chain.meta.update({"start": [float(v) for v in start], "regions": list(problem.region_ids)})
    return chain


def _laplace_cov(f, x, scale):
    d = len(x)
    h = 1e-3 * scale
    H = np.zeros((d, d))
    f0 = f(x)
    for i in range(d):
        for j in range(i, d):
            ei = np.zeros(d)
            ej = np.zeros(d)
            ei[i] = h[i]
            ej[j] = h[j]
            if i == j:
                val = (f(x + ei) - 2 * f0 + f(x - ei)) / h[i] ** 2
            else:
                val = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (
                    4 * h[i] * h[j]
                )
            H[i, j] = H[j, i] = val
    fallback = np.diag((0.01 * scale) ** 2)
    if not np.all(np.isfinite(H)):
        return fallback
    try:
        cov = np.linalg.inv(-H)
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        return fallback
    return 0.5 * (cov + cov.T)


@dataclass
class AMCMCConfig:
    """Adaptive Metropolis settings.

    ``init_cov`` is the proposal covariance used until ``adapt_start``;
    the default is ``0.01 * I``.
    """

    n_steps: int = 200_000
    adapt_start: int = 1000
    burn_in: int = 50_000
    thin: int = 20
    seed: int = 0
    eps: float = 1e-6
    init_cov: np.ndarray | None = None
    refresh_current: bool = False

    def __post_init__(self):
        if not 0 <= self.burn_in < self.n_steps:
            raise ValueError("burn_in must lie in [0, n_steps)")
        if self.thin < 1 or self.adapt_start < 1:
            raise ValueError("thin and adapt_start must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("init_cov")
        return d


PAPER_SCALE = {"n_steps": 2_000_000, "burn_in": 500_000, "thin": 100}


@dataclass(eq=False)
class Chain:
    samples: np.ndarray
    log_post: np.ndarray
    acceptance_rate: float
    proposal_cov_trace: np.ndarray
    seed: int
    names: tuple = ()
    config: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def n_kept(self) -> int:
        return len(self.samples)

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    def column(self, name: str) -> np.ndarray:
        return self.samples[:, self.names.index(name)]


def amcmc_run(
    target: Callable[[np.ndarray, np.random.Generator], float],
    init,
    config: AMCMCConfig | None = None,
) -> Chain:
    """Adaptive Metropolis with pseudo-marginal acceptance.

    ``target(x, rng)`` returns a (possibly noisy) log-posterior estimate.
    The estimate stored for the current state is reused until a proposal is
    accepted. After ``adapt_start`` steps the Gaussian proposal covariance is
    ``s_d * (Cov(history) + eps * I)`` with ``s_d = 2.4**2 / d``, the history
    covariance being updated recursively at every step.
    """
    config = config or AMCMCConfig()
    layout = getattr(target, "layout", None)
    if isinstance(init, ParamVector):
        if layout is None:
            raise TypeError("a ParamVector init needs a target with a layout")
        x = layout.pack(init)
    else:
        x = np.array(init, dtype=float)
    d = len(x)
    rng = np.random.default_rng(config.seed)
    lp = float(target(x, rng))
    if not math.isfinite(lp):
        raise SamplerError(f"target is not finite at the initial state (got {lp})")

    C0 = np.eye(d) * 0.01 if config.init_cov is None else np.asarray(config.init_cov, float)
    L = np.linalg.cholesky(C0)
    trace = float(np.trace(C0))
    sd = 2.4**2 / d
    eps_I = config.eps * np.eye(d)

    mean = x.copy()
    m2 = np.zeros((d, d))
    n_seen = 1

    n_keep = len(range(config.burn_in, config.n_steps, config.thin))
    samples = np.empty((n_keep, d))
    log_post = np.empty(n_keep)
    traces = np.empty(n_keep)
    accepted = 0
    kept = 0

    for step in range(config.n_steps):
        xp = x + L @ rng.standard_normal(d)
        lp_p = float(target(xp, rng))
        if config.refresh_current:
            lp = float(target(x, rng))
        if lp_p > -math.inf and -rng.standard_exponential() < lp_p - lp:
            x, lp = xp, lp_p
            accepted += 1

        n_seen += 1
        delta = x - mean
        mean += delta / n_seen
        m2 += np.outer(delta, x - mean)
        if step + 1 >= config.adapt_start:
            C = sd * (m2 / (n_seen - 1) + eps_I)
            try:
                L = np.linalg.cholesky(C)
                trace = float(np.trace(C))
            except np.linalg.LinAlgError:
                pass

        if step >= config.burn_in and (step - config.burn_in) % config.thin == 0:
            samples[kept] = x
            log_post[kept] = lp
            traces[kept] = trace
            kept += 1

    return Chain(
        samples=samples,
        log_post=log_post,
        acceptance_rate=accepted / config.n_steps,
        proposal_cov_trace=traces,
        seed=config.seed,
        names=tuple(layout.names) if layout is not None else tuple(f"x{i}" for i in range(d)),
        config=config.to_dict(),
    )


def ess(chain_column) -> float:
    """Effective sample size with Geyer's initial monotone sequence truncation."""
    x = np.asarray(chain_column, dtype=float)
    n = len(x)
    if n < 100:
        raise ValueError("ess needs at least 100 samples")
    xc = x - x.mean()
    var = xc @ xc / n
    if var <= 1e-300 * max(1.0, float(np.abs(x).max()) ** 2):
        warnings.warn("degenerate (constant) chain column; ESS set to 1", stacklevel=2)
        return 1.0
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:n] / n
    rho = acov / acov[0]
    n_pairs = n // 2
    pairs = rho[: 2 * n_pairs].reshape(n_pairs, 2).sum(axis=1)
    neg = np.flatnonzero(pairs <= 0)
    pairs = pairs[: neg[0]] if len(neg) else pairs
    pairs = np.minimum.accumulate(pairs)
    tau = -1.0 + 2.0 * pairs.sum()
    return float(np.clip(n / tau, 1.0, n))


def save_chain(chain: Chain, path) -> tuple[Path, Path]:
    """Write ``<path>.npy`` (structured array, one field per column) and ``<path>.json``."""
    base = Path(path)
    if base.suffix in (".npy", ".json"):
        base = base.with_suffix("")
    names = list(chain.names) + ["log_post", "proposal_cov_trace"]
    arr = np.empty(chain.n_kept, dtype=[(n, "<f8") for n in names])
    for i, n in enumerate(chain.names):
        arr[n] = chain.samples[:, i]
    arr["log_post"] = chain.log_post
    arr["proposal_cov_trace"] = chain.proposal_cov_trace
    npy = base.with_suffix(".npy")
    np.save(npy, arr, allow_pickle=False)
    meta = {
        "names": list(chain.names),
        "n_kept": chain.n_kept,
        "acceptance_rate": chain.acceptance_rate,
        "seed": chain.seed,
        "config": chain.config,
        "meta": chain.meta,
    }
    js = base.with_suffix(".json")
    js.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return npy, js


def load_chain(path) -> Chain:
    base = Path(path)
    if base.suffix in (".npy", ".json"):
        base = base.with_suffix("")
    meta = json.loads(base.with_suffix(".json").read_text())
    arr = np.load(base.with_suffix(".npy"), allow_pickle=False)
    names = tuple(meta["names"])
    samples = np.column_stack([arr[n] for n in names]) if names else np.empty((len(arr), 0))
    return Chain(
        samples=samples,
        log_post=np.asarray(arr["log_post"]),
        acceptance_rate=float(meta["acceptance_rate"]),
        proposal_cov_trace=np.asarray(arr["proposal_cov_trace"]),
        seed=int(meta["seed"]),
        names=names,
        config=meta.get("config", {}),
        meta=meta.get("meta", {}),
    )

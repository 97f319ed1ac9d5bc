"""Synthetic case data drawn from the model's own generative process."""

from __future__ import annotations

import numpy as np

from .data import CaseSeries
from .epimodel import IncubationDraw, predict_daily
from .spatial import GlobalParams, observation_covariance, precision_matrix


def simulate_cases(
    regions,
    global_params: GlobalParams,
    populations,
    dates,
    draw: IncubationDraw,
    rng: np.random.Generator,
    *,
    region_ids=None,
    adjacency=None,
    clip: bool = True,
) -> list[CaseSeries]:
    """Sample daily counts ``n + eps`` with ``eps ~ N(0, Sigma_i)`` in normalised units.

    Day ``i`` of ``dates`` is model time ``i``. With ``adjacency`` and a
    ``global_params`` carrying ``tau2``/``lam`` the noise includes the CAR
    component; a lone ``tau2`` adds a plain variance term. Negative draws are
    clipped to zero; with ``clip=False`` they raise ``ValueError`` instead.
    """
    dates = np.asarray(dates, dtype="datetime64[D]")
    grid = np.arange(len(dates), dtype=float)
    pops = np.asarray(populations, dtype=float)
    region_ids = region_ids or [f"r{i}" for i in range(len(regions))]
    y_pred = np.column_stack(
        [predict_daily(p, draw, grid) / pop for p, pop in zip(regions, pops)]
    )
    g = global_params
    if adjacency is not None and g.lam is not None:
        P_inv = precision_matrix(g.tau2, g.lam, adjacency).P_inv
    else:
        P_inv = np.eye(len(regions)) * (g.tau2 or 0.0)
    cov = observation_covariance(P_inv, g.sigma_a, g.sigma_m, y_pred)
    L = np.linalg.cholesky(cov + 1e-300 * np.eye(len(regions)))
    eps = np.einsum("tij,tj->ti", L, rng.standard_normal(y_pred.shape))
    counts = (y_pred + eps) * pops
    if clip:
        counts = np.maximum(counts, 0.0)
    elif np.any(counts < 0):
        raise ValueError("simulated counts went negative; pass clip=True")
    return [CaseSeries(r, int(p), dates, c) for r, p, c in zip(region_ids, pops, counts.T)]

"""Distance-correlation dependence tables over posterior samples."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from .inference import Chain, ParamLayout, ess

__all__ = ["DcorMatrix", "dcor", "dcor_table"]

_BLOCK = 512


@dataclass(frozen=True, eq=False)
class DcorMatrix:
    """Symmetric matrix of distance correlations with row/column labels.

    ``flagged`` lists labels whose samples were degenerate (zero distance
    variance); they are excluded from ``labels``.
    """

    labels: tuple
    values: np.ndarray
    flagged: tuple = field(default=())

    def __getitem__(self, key):
        a, b = key
        return float(self.values[self.labels.index(a), self.labels.index(b)])

    def rounded(self, decimals: int = 1) -> np.ndarray:
        return np.round(self.values, decimals)

    def write_csv(self, path, decimals: int | None = 1) -> None:
        vals = self.values if decimals is None else self.rounded(decimals)
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["", *self.labels])
            for lab, row in zip(self.labels, vals):
                cells = [f"{v:.{decimals}f}" if decimals is not None else repr(float(v)) for v in row]
                w.writerow([lab, *cells])


def _as_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return a[:, None] if a.ndim == 1 else a


def _dist_block(X, sl, out):
    # Euclidean distances from rows ``sl`` to all rows, written into ``out``.
    if X.shape[1] == 1:
        np.subtract(X[sl, 0, None], X[None, :, 0], out=out)
        return np.abs(out, out=out)
    return cdist(X[sl], X, out=out)


def _row_means(X):
    n = len(X)
    out = np.empty(n)
    buf = np.empty((min(_BLOCK, n), n))
    for i in range(0, n, _BLOCK):
        sl = slice(i, min(i + _BLOCK, n))
        blk = buf[: sl.stop - sl.start]
        out[sl] = _dist_block(X, sl, blk).mean(axis=1)
    return out


def _centered_products(X, Y, mx, my):
    # Sums of A*B, A*A, B*B over double-centred distance matrices, one row block at a time.
    n = len(X)
    gx, gy = mx.mean(), my.mean()
    bufa = np.empty((min(_BLOCK, n), n))
    bufb = np.empty_like(bufa)
    sab = saa = sbb = 0.0
    for i in range(0, n, _BLOCK):
        sl = slice(i, min(i + _BLOCK, n))
        m = sl.stop - sl.start
        A = _dist_block(X, sl, bufa[:m])
        A -= mx[sl, None]
        A -= mx[None, :] - gx
        B = _dist_block(Y, sl, bufb[:m])
        B -= my[sl, None]
        B -= my[None, :] - gy
        saa += float(np.einsum("ij,ij->", A, A))
        sbb += float(np.einsum("ij,ij->", B, B))
        sab += float(np.einsum("ij,ij->", A, B))
    return sab, saa, sbb


def dcor(X, Y) -> float:
    """Sample distance correlation of paired samples ``X`` (n x p) and ``Y`` (n x q).

    Computed exactly from double-centred Euclidean distance matrices, in row
    blocks so memory stays linear in ``n``. Returns NaN (with a warning)
    when either sample has zero distance variance.
    """
    X, Y = _as_matrix(X), _as_matrix(Y)
    n = len(X)
    if len(Y) != n:
        raise ValueError("X and Y need the same number of rows")
    if n < 10:
        raise ValueError("dcor needs at least 10 samples")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise ValueError("dcor inputs must be finite")
    sab, saa, sbb = _centered_products(X, Y, _row_means(X), _row_means(Y))
    if saa <= 0 or sbb <= 0:
        warnings.warn("dcor undefined for a constant sample", stacklevel=2)
        return math.nan
    r2 = sab / math.sqrt(saa * sbb)
    return float(math.sqrt(min(max(r2, 0.0), 1.0)))


def _degenerate(col) -> bool:
    return bool(np.ptp(col) <= 1e-12 * max(1.0, float(np.abs(col).max())))


def dcor_table(
    chain: Chain,
    layout: ParamLayout,
    grouping: str = "individual",
    *,
    max_rows: int = 5000,
    min_ess: float = 1000,
) -> DcorMatrix:
    """Pairwise dcor between parameters or between model components.

    Columns are taken on the natural scale (``sigma``, ``tau^2`` rather
    than their logs). At most ``max_rows`` evenly spaced chain rows are used.
    ``grouping="by_component"`` treats each region's four parameters, the
    spatial pair (SpC) and the error pair (ErrM) as one multivariate sample.
    """
    if grouping not in ("individual", "by_component"):
        raise ValueError(f"unknown grouping {grouping!r}")
    nat = layout.natural(chain.samples)
    if chain.n_kept > max_rows:
        nat = nat[np.linspace(0, chain.n_kept - 1, max_rows).round().astype(int)]
    min_seen = min(ess(chain.samples[:, j]) for j in range(chain.dim)) if chain.n_kept >= 100 else 0.0
    if min_seen < min_ess:
        warnings.warn(f"smallest ESS is {min_seen:.0f} (< {min_ess:.0f}); dcor values are noisy", stacklevel=2)

    bad = {j for j in range(nat.shape[1]) if _degenerate(nat[:, j])}
    if grouping == "individual":
        blocks = {name: [j] for j, name in enumerate(layout.natural_names)}
    else:
        blocks = layout.groups()
    labels, cols, flagged = [], [], []
    for name, idx in blocks.items():
        keep = [j for j in idx if j not in bad]
        if keep:
            labels.append(name)
            cols.append(nat[:, keep])
        else:
            flagged.append(name)
    if grouping == "individual":
        flagged = [layout.natural_names[j] for j in sorted(bad)]

    m = len(labels)
    V = np.eye(m)
    for a in range(m):
        for b in range(a + 1, m):
            V[a, b] = V[b, a] = dcor(cols[a], cols[b])
    return DcorMatrix(tuple(labels), V, tuple(flagged))

"""Case-count and region-topology ingestion.

Case files are long-format CSV (``date,region,count``), adjacency files list
undirected edges once (``region_a,region_b``) and population files map
``region,population``.
"""

from __future__ import annotations

import csv
import datetime as dt
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "DataError",
    "ParseError",
    "RegionNotFoundError",
    "CaseSeries",
    "Adjacency",
    "StudyWindow",
    "load_cases",
    "write_cases",
    "load_adjacency",
    "load_populations",
    "load_distances",
    "load_region_values",
    "smooth_7day",
    "normalize",
]


class DataError(ValueError):
    """Raised for malformed or inconsistent input data."""


class ParseError(DataError):
    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


class RegionNotFoundError(DataError, KeyError):
    def __str__(self):
        return ValueError.__str__(self)


def _as_day_array(dates) -> np.ndarray:
    return np.array(dates, dtype="datetime64[D]")


@dataclass(frozen=True, eq=False)
class CaseSeries:
    """Daily case counts for one areal unit.

    ``filled_dates`` lists days that were absent from the source file and
    densified to zero on load.
    """

    region_id: str
    population: int
    dates: np.ndarray
    counts: np.ndarray
    filled_dates: tuple = field(default=())

    def __post_init__(self):
        dates = _as_day_array(self.dates)
        counts = np.array(self.counts, dtype=float)
        if dates.ndim != 1 or counts.ndim != 1:
            raise DataError("dates and counts must be one-dimensional")
        if len(dates) != len(counts):
            raise DataError(
                f"{self.region_id}: {len(dates)} dates but {len(counts)} counts"
            )
        if len(dates) > 1 and np.any(np.diff(dates).astype(int) != 1):
            raise DataError(f"{self.region_id}: dates must advance by exactly one day")
        if np.any(counts < 0) or not np.all(np.isfinite(counts)):
            raise DataError(f"{self.region_id}: counts must be finite and non-negative")
        if int(self.population) <= 0:
            raise DataError(f"{self.region_id}: population must be positive")
        dates.setflags(write=False)
        counts.setflags(write=False)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "population", int(self.population))

    def __len__(self):
        return len(self.counts)

    def __eq__(self, other):
        if not isinstance(other, CaseSeries):
            return NotImplemented
        return (
            self.region_id == other.region_id
            and self.population == other.population
            and np.array_equal(self.dates, other.dates)
            and np.array_equal(self.counts, other.counts)
        )

    @property
    def start(self) -> dt.date:
        return self.dates[0].astype(dt.date)

    @property
    def end(self) -> dt.date:
        return self.dates[-1].astype(dt.date)

    def with_counts(self, counts) -> "CaseSeries":
        return CaseSeries(self.region_id, self.population, self.dates, counts)

    def between(self, start, end) -> "CaseSeries":
        """Sub-series over the closed interval ``[start, end]``."""
        lo, hi = np.datetime64(start, "D"), np.datetime64(end, "D")
        mask = (self.dates >= lo) & (self.dates <= hi)
        if not mask.any():
            raise DataError(f"{self.region_id}: no data between {start} and {end}")
        return CaseSeries(
            self.region_id, self.population, self.dates[mask], self.counts[mask]
        )


@dataclass(frozen=True, eq=False)
class Adjacency:
    """Binary neighbour matrix over an ordered list of regions."""

    region_ids: tuple
    W: np.ndarray

    def __post_init__(self):
        W = np.array(self.W, dtype=float)
        ids = tuple(self.region_ids)
        n = len(ids)
        if W.shape != (n, n):
            raise DataError(f"W has shape {W.shape}, expected ({n}, {n})")
        if not np.all((W == 0) | (W == 1)):
            raise DataError("W entries must be 0 or 1")
        if not np.array_equal(W, W.T):
            raise DataError("W must be symmetric")
        if np.any(np.diag(W) != 0):
            raise DataError("W must have a zero diagonal")
        isolated = [ids[j] for j in np.flatnonzero(W.sum(axis=1) == 0)]
        if isolated:
            raise DataError(f"isolated regions (no neighbours): {isolated}")
        W.setflags(write=False)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "region_ids", ids)

    @property
    def g(self) -> np.ndarray:
        """Neighbour counts."""
        return self.W.sum(axis=1)

    def __len__(self):
        return len(self.region_ids)

    @classmethod
    def from_edges(cls, region_ids: Sequence[str], edges: Iterable[tuple]) -> "Adjacency":
        index = {r: i for i, r in enumerate(region_ids)}
        W = np.zeros((len(index), len(index)))
        for a, b in edges:
            if a in index and b in index and a != b:
                W[index[a], index[b]] = W[index[b], index[a]] = 1
        return cls(tuple(region_ids), W)


@dataclass(frozen=True)
class StudyWindow:
    calibration_start: dt.date
    calibration_end: dt.date
    forecast_horizon: int = 14

    def __post_init__(self):
        start = np.datetime64(self.calibration_start, "D").astype(dt.date)
        end = np.datetime64(self.calibration_end, "D").astype(dt.date)
        object.__setattr__(self, "calibration_start", start)
        object.__setattr__(self, "calibration_end", end)
        if end <= start:
            raise DataError("calibration_end must follow calibration_start")
        if not 1 <= int(self.forecast_horizon) <= 14:
            raise DataError("forecast_horizon must be between 1 and 14 days")

    @property
    def n_calibration_days(self) -> int:
        return (self.calibration_end - self.calibration_start).days + 1

    @property
    def forecast_start(self) -> dt.date:
        return self.calibration_end + dt.timedelta(days=1)

    @property
    def forecast_end(self) -> dt.date:
        return self.calibration_end + dt.timedelta(days=self.forecast_horizon)


def _read_rows(path, header):
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise ParseError(path, 1, "empty file") from None
        if [h.strip() for h in first] != list(header):
            raise ParseError(path, 1, f"expected header {','.join(header)}")
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(
                    path, reader.line_num, f"expected {len(header)} fields, got {len(row)}"
                )
            yield reader.line_num, [c.strip() for c in row]


def load_populations(path) -> dict[str, int]:
    out = {}
    for line, (region, pop) in _read_rows(path, ("region", "population")):
        try:
            value = int(float(pop))
        except ValueError:
            raise ParseError(path, line, f"bad population {pop!r}") from None
        if value <= 0:
            raise ParseError(path, line, "population must be positive")
        out[region] = value
    return out


def load_region_values(path) -> dict[str, float]:
    """One real value per region (header ``region,value``), e.g. model residuals."""
    out = {}
    for line, (region, value) in _read_rows(path, ("region", "value")):
        try:
            out[region] = float(value)
        except ValueError:
            raise ParseError(path, line, f"bad value {value!r}") from None
    return out


def load_cases(
    path,
    region_filter: Iterable[str] | None = None,
    populations: Mapping[str, int] | None = None,
) -> list[CaseSeries]:
    """Read a long-format case file into dense daily series.

    All series share the date range covered by the file. Days missing for a
    region are filled with zero and reported through a ``UserWarning`` (one
    per filled day) and the series' ``filled_dates``.

    Raises
    ------
    ParseError
        On a malformed row; the message carries the line number.
    RegionNotFoundError
        If a requested region does not occur in the file.
    """
    records: dict[str, dict[np.datetime64, float]] = {}
    for line, (date, region, count) in _read_rows(path, ("date", "region", "count")):
        try:
            day = np.datetime64(dt.date.fromisoformat(date), "D")
        except ValueError:
            raise ParseError(path, line, f"bad date {date!r}") from None
        try:
            value = float(count)
        except ValueError:
            raise ParseError(path, line, f"bad count {count!r}") from None
        if not np.isfinite(value) or value < 0:
            raise ParseError(path, line, f"count must be non-negative, got {count!r}")
        per_region = records.setdefault(region, {})
        if day in per_region:
            raise ParseError(path, line, f"duplicate entry for {region} on {date}")
        per_region[day] = value

    if not records:
        raise DataError(f"{path}: no case rows")
    wanted = list(records) if region_filter is None else list(region_filter)
    missing = [r for r in wanted if r not in records]
    if missing:
        raise RegionNotFoundError(f"regions not in {path}: {sorted(missing)}")

    first = min(min(d) for d in records.values())
    last = max(max(d) for d in records.values())
    dates = np.arange(first, last + 1, dtype="datetime64[D]")
    out = []
    for region in wanted:
        per_region = records[region]
        counts = np.zeros(len(dates))
        filled = []
        for i, day in enumerate(dates):
            if day in per_region:
                counts[i] = per_region[day]
            else:
                filled.append(day.astype(dt.date))
        for day in filled:
            warnings.warn(f"{region}: no count for {day}, filled with 0", stacklevel=2)
        if populations is not None:
            if region not in populations:
                raise RegionNotFoundError(f"no population for region {region!r}")
            pop = populations[region]
        else:
            pop = 1
        out.append(CaseSeries(region, pop, dates, counts, tuple(filled)))
    return out


def write_cases(path, series: Sequence[CaseSeries]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date", "region", "count"])
        for s in series:
            for day, count in zip(s.dates, s.counts):
                writer.writerow([str(day), s.region_id, repr(float(count))])


def load_adjacency(path, region_ids: Sequence[str]) -> Adjacency:
    """Build the neighbour matrix for ``region_ids`` from an edge list.

    Edges touching regions outside ``region_ids`` are ignored, so one
    state-wide edge file serves every subset of regions.
    """
    edges = [tuple(row) for _, row in _read_rows(path, ("region_a", "region_b"))]
    return Adjacency.from_edges(region_ids, edges)


def load_distances(path, region_ids: Sequence[str]) -> np.ndarray:
    """Pairwise seat-to-seat distances (``region_a,region_b,distance``).

    Unlisted pairs are ``inf``; the matrix is symmetric.
    """
    index = {r: i for i, r in enumerate(region_ids)}
    D = np.full((len(index), len(index)), np.inf)
    np.fill_diagonal(D, 0.0)
    for line, (a, b, d) in _read_rows(path, ("region_a", "region_b", "distance")):
        try:
            value = float(d)
        except ValueError:
            raise ParseError(path, line, f"bad distance {d!r}") from None
        if value <= 0:
            raise ParseError(path, line, "distance must be positive")
        if a in index and b in index:
            D[index[a], index[b]] = D[index[b], index[a]] = value
    return D


def smooth_7day(series: CaseSeries) -> CaseSeries:
    """Trailing 7-day running mean.

    The first six days average over the available prefix, so no future data
    enters any smoothed value.
    """
    x = series.counts
    if len(x) < 7:
        raise DataError(f"{series.region_id}: need at least 7 days to smooth, got {len(x)}")
    c = np.concatenate([[0.0], np.cumsum(x)])
    idx = np.arange(1, len(x) + 1)
    lo = np.maximum(idx - 7, 0)
    smoothed = (c[idx] - c[lo]) / (idx - lo)
    return series.with_counts(np.maximum(smoothed, 0.0))


def normalize(series: CaseSeries) -> np.ndarray:
    return series.counts / series.population

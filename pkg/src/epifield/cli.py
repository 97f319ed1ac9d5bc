"""Batch command-line frontend: ``fit``, ``forecast``, ``detect``, ``diagnose``.

Every command reads an INI-style config file, works only from files on
disk (inputs plus artifacts written by earlier commands) and records a
``manifest.json`` in its output directory.

Exit codes: 0 success, 1 usage error, 2 numerical failure, 3 data error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import logging
import platform
import sys
from dataclasses import asdict, dataclass, field
from importlib import metadata, resources
from pathlib import Path

import numpy as np
import scipy

from .analysis import dcor_table
from .data import (
    DataError,
    StudyWindow,
    load_adjacency,
    load_cases,
    load_distances,
    load_populations,
    load_region_values,
    smooth_7day,
)
from .detect import (
    GlrFitError,
    detect_alarms,
    glr_detect,
    glr_fit,
    outlier_boundary,
    write_report,
)
from .forecast import HorizonError, average_crps, check_horizon, posterior_predictive, write_bands
from .inference import PAPER_SCALE, AMCMCConfig, CalibrationProblem, SamplerError, calibrate, ess, load_chain, save_chain
from .spatial import NumericalError, morans_i

log = logging.getLogger("epifield")

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_DATA = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _bundled(name: str) -> Path:
    return Path(str(resources.files("epifield.resources").joinpath(name)))


@dataclass
class RunConfig:
    cases: Path
    regions: list
    calibration_start: np.datetime64
    calibration_end: np.datetime64
    adjacency: Path = field(default_factory=lambda: _bundled("nm_adjacency.csv"))
    populations: Path = field(default_factory=lambda: _bundled("nm_populations.csv"))
    distances: Path | None = None
    residuals: Path | None = None
    horizon: int = 14
    smooth: bool = True
    n_steps: int = 200_000
    burn_in: int = 50_000
    thin: int = 20
    adapt_start: int = 1000
    seed: int = 0
    paper_scale: bool = False
    n_draws: int = 100
    detector: str = "infection_rate"
    percentile: float = 99.0
    run_length: int = 3
    c_gamma: float = 3.0
    train_start: np.datetime64 | None = None
    train_end: np.datetime64 | None = None
    test_start: np.datetime64 | None = None
    test_end: np.datetime64 | None = None
    output: Path = Path("out")

    @property
    def window(self) -> StudyWindow:
        return StudyWindow(self.calibration_start, self.calibration_end, self.horizon)

    def mcmc(self) -> AMCMCConfig:
        steps = dict(n_steps=self.n_steps, burn_in=self.burn_in, thin=self.thin)
        if self.paper_scale:
            steps = dict(PAPER_SCALE)
        return AMCMCConfig(adapt_start=self.adapt_start, seed=self.seed, **steps)

    def to_json(self) -> dict:
        d = asdict(self)
        return {k: (str(v) if v is not None and not isinstance(v, (int, float, bool, list)) else v) for k, v in d.items()}

    def input_files(self) -> list[Path]:
        return [p for p in (self.cases, self.adjacency, self.populations, self.distances, self.residuals) if p]


def _day(value):
    return None if value in (None, "") else np.datetime64(value, "D")


def read_config(path, args=None) -> RunConfig:
    """Parse the config file and apply command-line overrides."""
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise UsageError(f"{path}: {exc}") from None
    base = path.parent

    def get(section, key, fallback=None):
        return cp.get(section, key, fallback=fallback) if cp.has_section(section) else fallback

    def file(section, key, default=None):
        v = get(section, key)
        if not v:
            return default
        p = Path(v)
        return p if p.is_absolute() else base / p

    try:
        kw = dict(
            cases=file("data", "cases"),
            regions=[r.strip() for r in (get("study", "regions") or "").split(",") if r.strip()],
            calibration_start=_day(get("study", "calibration_start")),
            calibration_end=_day(get("study", "calibration_end")),
            horizon=int(get("study", "forecast_horizon", 14)),
            smooth=cp.getboolean("study", "smooth", fallback=True) if cp.has_section("study") else True,
            n_steps=int(get("mcmc", "n_steps", 200_000)),
            burn_in=int(get("mcmc", "burn_in", 50_000)),
            thin=int(get("mcmc", "thin", 20)),
            adapt_start=int(get("mcmc", "adapt_start", 1000)),
            seed=int(get("mcmc", "seed", 0)),
            paper_scale=cp.getboolean("mcmc", "paper_scale", fallback=False) if cp.has_section("mcmc") else False,
            n_draws=int(get("detect", "n_draws", 100)),
            detector=get("detect", "detector", "infection_rate"),
            percentile=float(get("detect", "percentile", 99.0)),
            run_length=int(get("detect", "run_length", 3)),
            c_gamma=float(get("detect", "c_gamma", 3.0)),
            train_start=_day(get("detect", "train_start")),
            train_end=_day(get("detect", "train_end")),
            test_start=_day(get("detect", "test_start")),
            test_end=_day(get("detect", "test_end")),
            output=file("output", "directory", Path("out")),
        )
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from None
    for key, default in (("adjacency", "nm_adjacency.csv"), ("populations", "nm_populations.csv")):
        kw[key] = file("data", key, _bundled(default))
    kw["distances"] = file("data", "distances")
    kw["residuals"] = file("data", "residuals")

    if args is not None:
        if getattr(args, "regions", None):
            kw["regions"] = [r.strip() for r in args.regions.split(",") if r.strip()]
        if getattr(args, "seed", None) is not None:
            kw["seed"] = args.seed
        if getattr(args, "paper_scale", False):
            kw["paper_scale"] = True
        if getattr(args, "detector", None):
            kw["detector"] = args.detector
        if getattr(args, "output", None):
            kw["output"] = Path(args.output)

    if kw["cases"] is None:
        raise UsageError("[data] cases is required")
    if not kw["regions"]:
        raise UsageError("no regions given ([study] regions or --regions)")
    if kw["calibration_start"] is None or kw["calibration_end"] is None:
        raise UsageError("[study] calibration_start and calibration_end are required")
    check_horizon(kw["horizon"])
    if kw["detector"] not in ("infection_rate", "glr_poisson"):
        raise UsageError(f"unknown detector {kw['detector']!r}")
    for p in [kw["cases"], kw["adjacency"], kw["populations"], kw["distances"], kw["residuals"]]:
        if p is not None and not Path(p).is_file():
            raise DataError(f"input file not found: {p}")
    return RunConfig(**kw)


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _versions() -> dict:
    try:
        own = metadata.version("epifield")
    except metadata.PackageNotFoundError:
        own = "unknown"
    return {"epifield": own, "numpy": np.__version__, "scipy": scipy.__version__, "python": platform.python_version()}


def write_manifest(cfg: RunConfig, command: str, outputs: list[str], extra: dict | None = None) -> Path:
    """Add this command's entry to ``<output>/manifest.json``."""
    cfg_json = cfg.to_json()
    blob = json.dumps(cfg_json, sort_keys=True).encode()
    entry = {
        "config": cfg_json,
        "config_sha256": hashlib.sha256(blob).hexdigest(),
        "seed": cfg.seed,
        "versions": _versions(),
        "inputs": {str(p): _sha256(p) for p in cfg.input_files()},
        "outputs": sorted(outputs),
    }
    if extra:
        entry.update(extra)
    path = cfg.output / "manifest.json"
    manifest = json.loads(path.read_text()) if path.is_file() else {}
    manifest[command] = entry
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _load_series(cfg: RunConfig):
    pops = load_populations(cfg.populations)
    return load_cases(cfg.cases, cfg.regions, pops)


def _problem(cfg: RunConfig, series=None) -> CalibrationProblem:
    series = series if series is not None else _load_series(cfg)
    adj = load_adjacency(cfg.adjacency, cfg.regions) if len(cfg.regions) > 1 else None
    return CalibrationProblem.from_window(series, cfg.window, adj, smooth=cfg.smooth)


def _chain_for(cfg: RunConfig, problem: CalibrationProblem, chain_path):
    path = Path(chain_path) if chain_path else cfg.output / "chain"
    if not path.with_suffix(".json").is_file():
        raise DataError(f"no chain at {path} (run `fit` first)")
    chain = load_chain(path)
    if tuple(chain.names) != tuple(problem.layout.names):
        raise DataError(f"chain columns {chain.names} do not match regions {cfg.regions}")
    return chain


def cmd_fit(cfg: RunConfig) -> dict:
    """Calibrate and persist the chain plus a posterior summary."""
    problem = _problem(cfg)
    chain = calibrate(problem, cfg.mcmc())
    cfg.output.mkdir(parents=True, exist_ok=True)
    npy, js = save_chain(chain, cfg.output / "chain")
    nat = problem.layout.natural(chain.samples)
    params = {}
    for j, name in enumerate(problem.layout.natural_names):
        q05, med, q95 = np.quantile(nat[:, j], [0.05, 0.5, 0.95])
        params[name] = {
            "median": float(med),
            "ci90": [float(q05), float(q95)],
            "ess": ess(chain.samples[:, j]) if chain.n_kept >= 100 else None,
        }
    summary = {
        "regions": cfg.regions,
        "n_parameters": problem.layout.dim,
        "parameters": params,
        "acceptance_rate": chain.acceptance_rate,
        "n_kept": chain.n_kept,
        "seed": cfg.seed,
    }
    (cfg.output / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    write_manifest(cfg, "fit", [npy.name, js.name, "summary.json"])
    return summary


def cmd_forecast(cfg: RunConfig, chain_path=None) -> dict:
    """Predictive bands over calibration + horizon and per-region CRPS."""
    problem = _problem(cfg)
    chain = _chain_for(cfg, problem, chain_path)
    bands = posterior_predictive(chain, problem, cfg.n_draws, cfg.horizon, include_noise=True, seed=cfg.seed)
    cfg.output.mkdir(parents=True, exist_ok=True)
    write_bands(cfg.output / "bands.csv", bands)
    scores = {}
    for r, band in enumerate(bands):
        observed = problem.y_obs[:, r] * problem.populations[r]
        scores[band.region_id] = average_crps(band, observed)
    with (cfg.output / "crps.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["region", "average_crps"])
        for rid, v in scores.items():
            w.writerow([rid, f"{v:.6g}"])
    write_manifest(cfg, "forecast", ["bands.csv", "crps.csv"])
    return scores


def _write_boundary_csv(path, reports):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "region", "detector", "observed", "boundary", "outlier", "alarm"])
        for rep in reports:
            out = set(rep.outlier_days)
            al = set(rep.alarm_days)
            for day, y, b in zip(rep.dates, rep.observed, rep.boundary):
                w.writerow([str(day), rep.region_id, rep.detector_id, f"{y:.6g}", f"{b:.6g}", int(day in out), int(day in al)])


def cmd_detect(cfg: RunConfig, chain_path=None) -> list:
    """Run the configured detector over the test window of each region."""
    series = _load_series(cfg)
    test_start = cfg.test_start or cfg.window.forecast_start
    test_end = cfg.test_end or cfg.window.forecast_end
    reports = []
    if cfg.detector == "infection_rate":
        problem = _problem(cfg, series)
        chain = _chain_for(cfg, problem, chain_path)
        bands = posterior_predictive(chain, problem, cfg.n_draws, cfg.horizon, include_noise=True, seed=cfg.seed)
        for s, band in zip(series, bands):
            obs = (smooth_7day(s) if cfg.smooth else s).between(test_start, test_end)
            fc = band.forecast_part()
            keep = np.isin(fc.dates, obs.dates)
            if keep.sum() != len(obs):
                raise DataError(f"{s.region_id}: test window extends past the forecast horizon")
            boundary = outlier_boundary(fc, cfg.percentile)[keep]
            reports.append(detect_alarms(obs, boundary, cfg.run_length, boundary_dates=fc.dates[keep]))
    else:
        train_start = cfg.train_start or cfg.calibration_start
        train_end = cfg.train_end or cfg.calibration_end
        for s in series:
            base = glr_fit(s.between(train_start, train_end), c_gamma=cfg.c_gamma)
            reports.append(glr_detect(s.between(test_start, test_end), base, cfg.c_gamma, run_length=cfg.run_length))
    cfg.output.mkdir(parents=True, exist_ok=True)
    stem = f"detect_{cfg.detector}"
    _write_boundary_csv(cfg.output / f"{stem}_boundary.csv", reports)
    write_report(cfg.output / f"{stem}.json", reports, boundary_ref=f"{stem}_boundary.csv")
    write_manifest(cfg, f"detect_{cfg.detector}", [f"{stem}.json", f"{stem}_boundary.csv"])
    return reports


def _residual_vector(cfg: RunConfig, problem, chain):
    # Mean normalised residual per region against the posterior-median curve.
    bands = posterior_predictive(chain, problem, cfg.n_draws, 0, include_noise=False, seed=cfg.seed)
    return {
        b.region_id: float(np.mean(problem.y_obs[:, r] - b.median / problem.populations[r]))
        for r, b in enumerate(bands)
    }


def cmd_diagnose(cfg: RunConfig, chain_path=None) -> dict:
    """dcor tables from the chain and Moran's I of a residual vector."""
    problem = _problem(cfg)
    chain = _chain_for(cfg, problem, chain_path)
    cfg.output.mkdir(parents=True, exist_ok=True)
    outputs = []
    full = {}
    for grouping, name in (("individual", "dcor_individual.csv"), ("by_component", "dcor_components.csv")):
        table = dcor_table(chain, problem.layout, grouping)
        table.write_csv(cfg.output / name)
        outputs.append(name)
        full[grouping] = {"labels": list(table.labels), "values": table.values.tolist(), "flagged": list(table.flagged)}
    (cfg.output / "dcor.json").write_text(json.dumps(full, indent=2) + "\n")
    outputs.append("dcor.json")

    if cfg.residuals is not None:
        values = load_region_values(cfg.residuals)
    elif len(cfg.regions) >= 3:
        values = _residual_vector(cfg, problem, chain)
    else:
        values = None
        log.warning("Moran's I skipped: needs a residual file or at least 3 fitted regions")
    moran = {}
    if values is not None:
        ids = list(values)
        adj = load_adjacency(cfg.adjacency, ids)
        x = np.array([values[r] for r in ids])
        weightings = ["binary", "row_standardised"]
        dist = None
        if cfg.distances is not None:
            weightings.insert(1, "binary_modified")
            dist = load_distances(cfg.distances, ids)
        for wname in weightings:
            res = morans_i(x, adj, wname, dist, rng=cfg.seed)
            moran[wname] = {"I": res.I, "z": res.z}
        with (cfg.output / "moran.csv").open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["weighting", "I", "z"])
            for wname, r in moran.items():
                w.writerow([wname, f"{r['I']:.6g}", f"{r['z']:.6g}"])
        outputs.append("moran.csv")
    write_manifest(cfg, "diagnose", outputs)
    return {"dcor": full, "moran": moran}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="epifield", description="Calibrate, forecast, detect and diagnose from an INI config.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("fit", "calibrate the model and save the chain"),
        ("forecast", "posterior-predictive bands and CRPS"),
        ("detect", "wave-arrival detection"),
        ("diagnose", "distance correlation and Moran's I tables"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="INI config file")
        p.add_argument("--regions", help="comma-separated region ids (overrides config)")
        p.add_argument("--seed", type=int, help="random seed (overrides config)")
        p.add_argument("--paper-scale", action="store_true", help="2e6 steps, 5e5 burn-in, thin 100")
        p.add_argument("--output", help="output directory (overrides config)")
        if name != "fit":
            p.add_argument("--chain", help="chain path stem (default: <output>/chain)")
        if name == "detect":
            p.add_argument("--detector", choices=("infection_rate", "glr_poisson"))
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = read_config(args.config, args)
        if args.command == "fit":
            cmd_fit(cfg)
        elif args.command == "forecast":
            cmd_forecast(cfg, args.chain)
        elif args.command == "detect":
            cmd_detect(cfg, args.chain)
        else:
            cmd_diagnose(cfg, args.chain)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (SamplerError, NumericalError, GlrFitError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (HorizonError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

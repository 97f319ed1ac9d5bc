import json

import numpy as np
import pytest

from epifield import cli
from epifield.data import Adjacency, write_cases
from epifield.epimodel import DEFAULT_HYPER, RegionParams
from epifield.inference import SamplerError
from epifield.spatial import GlobalParams
from epifield.synthetic import simulate_cases

IDS = ["bernalillo", "santa_fe", "valencia"]
POPS = [679121, 150358, 76688]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    rng = np.random.default_rng(3)
    adj = Adjacency.from_edges(IDS, [("bernalillo", "santa_fe"), ("bernalillo", "valencia")])
    regs = [RegionParams(-5, 3, 15, 9000), RegionParams(-2, 2.5, 14, 1500), RegionParams(0, 3, 12, 900)]
    dates = np.datetime64("2020-06-01") + np.arange(130)
    series = simulate_cases(
        regs, GlobalParams(2e-6, 0.15, 1e-11, 0.5), POPS, dates, DEFAULT_HYPER.median_draw, rng,
        region_ids=IDS, adjacency=adj,
    )
    write_cases(root / "cases.csv", [s.with_counts(np.round(s.counts)) for s in series])
    return root


def config(root, name, regions, horizon=14, steps=3000, ini=None, **extra):
    sections = {
        "data": {"cases": "cases.csv"},
        "study": {
            "regions": ", ".join(regions),
            "calibration_start": "2020-06-01",
            "calibration_end": "2020-09-15",
            "forecast_horizon": horizon,
        },
        "mcmc": {"n_steps": steps, "burn_in": 1000, "thin": 10, "seed": 7},
        "output": {"directory": name},
    }
    for key, value in extra.items():
        section, option = key.split("__")
        sections[section][option] = value
    text = "".join(f"[{sec}]\n" + "".join(f"{k} = {v}\n" for k, v in opts.items()) for sec, opts in sections.items())
    path = root / f"{ini or name}.ini"
    path.write_text(text)
    return str(path)


def test_single_region_fit_and_determinism(workspace):
    cfg = config(workspace, "one", ["santa_fe"])
    assert cli.main(["fit", "--config", cfg]) == 0
    summary = json.loads((workspace / "one" / "summary.json").read_text())
    assert summary["n_parameters"] == 6 and len(summary["parameters"]) == 6
    first = (workspace / "one" / "chain.npy").read_bytes()
    assert cli.main(["fit", "--config", cfg]) == 0
    assert (workspace / "one" / "chain.npy").read_bytes() == first
    manifest = json.loads((workspace / "one" / "manifest.json").read_text())["fit"]
    assert manifest["seed"] == 7 and len(manifest["config_sha256"]) == 64
    assert any(p.endswith("cases.csv") for p in manifest["inputs"])
    assert set(manifest["versions"]) >= {"numpy", "scipy", "epifield"}


def test_seed_override_changes_chain(workspace):
    cfg = config(workspace, "seeded", ["santa_fe"])
    assert cli.main(["fit", "--config", cfg, "--seed", "8"]) == 0
    assert json.loads((workspace / "seeded" / "summary.json").read_text())["seed"] == 8


def test_three_region_pipeline(workspace):
    cfg = config(workspace, "three", IDS)
    assert cli.main(["fit", "--config", cfg]) == 0
    out = workspace / "three"
    assert json.loads((out / "summary.json").read_text())["n_parameters"] == 16
    assert cli.main(["forecast", "--config", cfg]) == 0
    assert (out / "bands.csv").read_text().startswith("date,region,median,q05,q25,q75,q95\n")
    crps_rows = (out / "crps.csv").read_text().splitlines()
    assert crps_rows[0] == "region,average_crps" and len(crps_rows) == 4
    assert cli.main(["detect", "--config", cfg]) == 0
    assert cli.main(["detect", "--config", cfg, "--detector", "glr_poisson"]) == 0
    for det in ("infection_rate", "glr_poisson"):
        recs = json.loads((out / f"detect_{det}.json").read_text())
        assert [r["region"] for r in recs] == IDS and all(r["detector"] == det for r in recs)
        assert (out / f"detect_{det}_boundary.csv").is_file()
    with pytest.warns(UserWarning):
        assert cli.main(["diagnose", "--config", cfg]) == 0
    header = (out / "dcor_components.csv").read_text().splitlines()[0]
    assert header == ",bernalillo,santa_fe,valencia,SpC,ErrM"
    assert (out / "moran.csv").is_file()
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest) == {"fit", "forecast", "detect_infection_rate", "detect_glr_poisson", "diagnose"}


def test_regions_override_and_residual_file(workspace):
    res = workspace / "resid.csv"
    res.write_text("region,value\nbernalillo,0.5\nsanta_fe,-0.2\nvalencia,0.1\n")
    cfg = config(workspace, "three", IDS, ini="three_resid", data__residuals="resid.csv")
    args = ["diagnose", "--config", cfg, "--output", str(workspace / "resid_out"), "--chain", str(workspace / "three" / "chain")]
    with pytest.warns(UserWarning, match="ESS"):
        assert cli.main(args) == 0
    assert (workspace / "resid_out" / "moran.csv").read_text().startswith("weighting,I,z\nbinary,")


def test_exit_codes(workspace, monkeypatch):
    assert cli.main(["fit"]) == 1
    assert cli.main(["fit", "--config", str(workspace / "missing.ini")]) == 1
    (workspace / "dup.ini").write_text("[data]\n[data]\n")
    assert cli.main(["fit", "--config", str(workspace / "dup.ini")]) == 1
    assert cli.main(["fit", "--config", config(workspace, "h", ["santa_fe"], horizon=15)]) == 1
    assert cli.main(["fit", "--config", config(workspace, "r", ["atlantis"])]) == 3
    assert cli.main(["forecast", "--config", config(workspace, "nochain", ["santa_fe"])]) == 3

    def boom(*a, **k):
        raise SamplerError("target is not finite at the initial state")

    monkeypatch.setattr(cli, "calibrate", boom)
    assert cli.main(["fit", "--config", config(workspace, "n", ["santa_fe"])]) == 2


def test_chain_region_mismatch(workspace):
    cfg = config(workspace, "one", ["valencia"])
    assert cli.main(["forecast", "--config", cfg, "--chain", str(workspace / "three" / "chain")]) == 3

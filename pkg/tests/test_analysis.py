import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.distance import pdist, squareform
from scipy.stats import special_ortho_group

from epifield.analysis import DcorMatrix, dcor, dcor_table
from epifield.inference import Chain, ParamLayout


def naive_dcor(X, Y):
    # Full-matrix reference implementation.
    X = np.asarray(X, float).reshape(len(X), -1)
    Y = np.asarray(Y, float).reshape(len(Y), -1)
    a, b = squareform(pdist(X)), squareform(pdist(Y))
    A = a - a.mean(0) - a.mean(1)[:, None] + a.mean()
    B = b - b.mean(0) - b.mean(1)[:, None] + b.mean()
    return math.sqrt(max((A * B).mean(), 0) / math.sqrt((A * A).mean() * (B * B).mean()))


def test_matches_naive_blocked_boundary():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(1300, 2))  # spans several row blocks
    Y = X[:, :1] ** 2 + rng.normal(size=(1300, 1))
    assert dcor(X, Y) == pytest.approx(naive_dcor(X, Y), abs=1e-12)


def test_self_dependence():
    x = np.random.default_rng(1).normal(size=(500, 3))
    assert dcor(x, x) == pytest.approx(1.0, abs=1e-10)


def test_independent_uniform_small():
    vals = [dcor(*np.random.default_rng(s).uniform(size=(2, 10_000))) for s in range(20)]
    assert max(vals) < 0.05


def test_detects_quadratic():
    x = np.random.default_rng(3).uniform(-1, 1, 10_000)
    assert dcor(x, x**2) > 0.4
    assert abs(np.corrcoef(x, x**2)[0, 1]) < 0.05


@given(st.integers(0, 10_000), st.floats(0.01, 100), st.floats(-1e3, 1e3))
@settings(max_examples=25, deadline=None)
def test_invariances(seed, a, b):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(60, 3))
    Y = np.sin(X[:, :2]) + 0.3 * rng.normal(size=(60, 2))
    base = dcor(X, Y)
    assert dcor(Y, X) == base
    Q = special_ortho_group.rvs(3, random_state=seed)
    assert dcor(X @ Q.T + b, Y) == pytest.approx(base, abs=1e-8)
    assert dcor(a * X, Y) == pytest.approx(base, abs=1e-8)
    assert 0 <= base <= 1
    x = X[:, 0]
    assert dcor(x, (-a) * x + b) == pytest.approx(1.0, abs=1e-10)


def test_constant_sample_nan():
    with pytest.warns(UserWarning):
        assert math.isnan(dcor(np.ones(20), np.arange(20.0)))
    with pytest.raises(ValueError):
        dcor(np.arange(5.0), np.arange(5.0))


def iid_chain(layout, n=3000, seed=0, constant=None):
    rng = np.random.default_rng(seed)
    s = rng.normal(size=(n, layout.dim)) + 5
    if constant is not None:
        s[:, constant] = 1.0
    return Chain(s, np.zeros(n), 0.3, np.zeros(n), seed, layout.names)


def test_table_iid_columns():
    layout = ParamLayout(("a",), "none")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        t = dcor_table(iid_chain(layout), layout)
    assert t.labels == layout.natural_names
    off = t.rounded()[~np.eye(len(t.labels), dtype=bool)]
    assert np.all(off < 0.1)
    assert np.allclose(np.diag(t.values), 1) and np.allclose(t.values, t.values.T)


def test_table_grouped_and_flagged(tmp_path):
    layout = ParamLayout(("a", "b"))
    chain = iid_chain(layout, n=1500, constant=layout.names.index("lambda"))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ind = dcor_table(chain, layout)
        grp = dcor_table(chain, layout, "by_component")
    assert "lambda" in ind.flagged and "lambda" not in ind.labels
    assert grp.labels == ("a", "b", "SpC", "ErrM")
    grp.write_csv(tmp_path / "g.csv")
    lines = (tmp_path / "g.csv").read_text().splitlines()
    assert lines[0] == ",a,b,SpC,ErrM" and lines[1].startswith("a,1.0,")


def test_table_subsamples():
    layout = ParamLayout(("a",), "none")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        t = dcor_table(iid_chain(layout, n=8000), layout, max_rows=500)
    assert isinstance(t, DcorMatrix) and t["a:k", "a:k"] == 1.0

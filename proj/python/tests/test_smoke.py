import os
from pathlib import Path

import numpy as np
import pytest

import spconf

DATA = Path(os.environ.get("SPCONF_DATA_DIR", Path(__file__).resolve().parents[2] / "data"))


def test_version():
    assert spconf.__version__.count(".") == 2


def test_graph_and_precision():
    g = spconf.lattice_graph(3, 4)
    assert len(g) == 12
    Q = g.icar_precision()
    assert np.allclose(Q.sum(axis=1), 0.0)
    assert np.linalg.matrix_rank(Q) == 11
    Qs = spconf.scaled_car_precision(g, 0.5)
    assert np.allclose(np.diag(np.linalg.inv(Qs)), 1.0)


def test_bad_graph_raises():
    with pytest.raises(spconf.ValidationError):
        spconf.AreaGraph.from_edges(3, [(0, 5)])
    with pytest.raises(spconf.Error):
        spconf.load_graph("/no/such/file.gal")


def test_fit_null_and_spatial():
    rng = np.random.default_rng(1)
    g = spconf.lattice_graph(5, 4)
    x = rng.normal(size=20)
    e = np.full(20, 80.0)
    y = rng.poisson(e * np.exp(0.3 * x)).astype(float)
    d = spconf.make_dataset(y, e, x.reshape(-1, 1), ["x"])
    kw = dict(chains=2, iterations=800, burn_in=200, thin=4, seed=3)
    null = spconf.fit("Null", d, g, **kw)
    assert null["names"] == ["alpha", "x"]
    beta = null["parameters"][1]
    assert beta["q025"] < beta["mean"] < beta["q975"]
    assert abs(beta["mean"] / d.covariate_sds[0] - 0.3) < 0.15
    again = spconf.fit("Null", d, g, **kw)
    assert np.array_equal(null["samples"], again["samples"])
    sp = spconf.fit("Spatial", d, g, **kw)
    assert "sigma" in sp["names"]
    assert sp["fitted_risk"].shape == (20,)


def test_scotland_ingest():
    d, g = spconf.ingest(str(DATA / "scotland" / "scotland.csv"), str(DATA / "scotland" / "scotland.gal"))
    assert len(d) == 56 and len(g) == 56
    assert d.covariate_names == ["AFF"]


def test_metrics():
    assert spconf.se_sim_and_est(np.array([0.0, 1.0]), np.array([0.1, 0.3]))[0] == pytest.approx(0.5)
    assert spconf.coverage_and_length(np.zeros(4), np.ones(4), 0.5) == (100.0, 1.0)
    assert spconf.type_s_rate(np.array([-1.0, 0.2]), np.array([1.0, 0.9])) == 50.0
    assert spconf.marb_mrrmse(np.full(3, 0.4), 0.2) == pytest.approx((1.0, 1.0))
    assert spconf.waic(np.full((5, 2), -1.0)) == pytest.approx(4.0)


def test_simulate_small():
    out = spconf.simulate(1, 0.8, K=2, models=["Null"], iterations=600, burn_in=200)
    assert out["n_failed"] == 0
    metrics = {r["metric"] for r in out["summary"] if r["model"] == "Null"}
    assert {"x1.mean", "x1.coverage95", "waic"} <= metrics

import json
import math

import numpy as np
import pytest

from dyadicgp import data
from dyadicgp.verify import make_test_model
from dyadicgp.vi import CategoricalLikelihood, GaussianLikelihood


def test_normalizer_maps_bounds_to_unit_interval():
    norm = data.fit_normalizer(np.array([[0.0, 10.0], [4.0, 30.0]]))
    out = norm(np.array([[0.0, 10.0], [4.0, 30.0], [2.0, 20.0]]))
    assert np.allclose(out, [[0.0, 0.0], [1.0, 1.0], [0.5, 0.5]], atol=1e-15)
    assert norm.clamped == 0


def test_normalizer_clamps_and_warns():
    norm = data.fit_normalizer(np.array([[0.0], [1.0]]))
    with pytest.warns(UserWarning, match="clamped"):
        out = norm(np.array([[-0.5], [2.0], [0.25]]))
    assert np.allclose(out, [[0.0], [1.0], [0.25]])
    assert norm.clamped == 2


def test_normalizer_constant_feature_and_validation():
    norm = data.fit_normalizer(np.array([[3.0, 1.0], [3.0, 2.0]]))
    out = norm(np.array([[3.0, 1.5]]))
    assert out[0, 0] == 0.5 and out[0, 1] == 0.5
    with pytest.raises(ValueError):
        norm(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        data.Normalizer(np.array([1.0]), np.array([0.0]))
    with pytest.raises(ValueError):
        data.fit_normalizer(np.zeros(5))


def test_fit_normalizer_declared_bounds_take_precedence():
    x = np.array([[0.2], [0.4]])
    norm = data.fit_normalizer(x, bounds=np.array([[0.0, 1.0]]))
    assert norm(np.array([[0.5]]))[0, 0] == 0.5
    with pytest.raises(ValueError):
        data.fit_normalizer(x, bounds=np.array([[0.0, 1.0], [0.0, 1.0]]))


def test_se_covariance_values():
    cov = data.se_covariance(np.array([0.0, 0.1]), lengthscale=1.0)
    assert cov[0, 0] == 1.0
    assert cov[0, 1] == pytest.approx(math.exp(-0.01), abs=1e-15)
    with pytest.raises(ValueError):
        data.se_covariance(np.array([0.0]), lengthscale=0.0)


def test_se_gp_marginals_and_correlation():
    # across many independent draws each marginal is N(0, 1) and neighbours at
    # spacing 0.1 correlate at exp(-0.01)
    grid = np.linspace(-1, 1, 21)
    rng = np.random.default_rng(0)
    draws = np.stack(
        [data.sample_se_gp(grid, 1.0, 0.0, rng).y for _ in range(10_000)]
    )
    stds = draws.std(axis=0)
    assert np.all((stds > 0.97) & (stds < 1.03))
    corr = np.corrcoef(draws[:, 10], draws[:, 11])[0, 1]
    assert corr == pytest.approx(math.exp(-0.01), abs=0.02)


def test_se_gp_noise_and_validation():
    grid = np.linspace(0, 1, 50)
    rng = np.random.default_rng(1)
    clean = data.sample_se_gp(grid, 0.3, 0.0, np.random.default_rng(5))
    noisy = data.sample_se_gp(grid, 0.3, 0.5, np.random.default_rng(5))
    # same function draw, extra independent noise on top
    assert np.allclose(
        np.abs(noisy.y - clean.y).mean(), 0.5 * math.sqrt(2 / math.pi), rtol=0.2
    )
    assert clean.x.shape == (50, 1)
    with pytest.raises(ValueError):
        data.sample_se_gp(np.array([0.1, 0.1]), rng=rng)
    with pytest.raises(ValueError):
        data.sample_se_gp(grid, noise_std=-1.0, rng=rng)


def test_load_csv_regression(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,b,y\n1,2,3\n4,5,6\n")
    ds = data.load_csv(p)
    assert ds.feature_names == ["a", "b"]
    assert ds.target_name == "y"
    assert np.array_equal(ds.x, [[1.0, 2.0], [4.0, 5.0]])
    assert np.array_equal(ds.y, [3.0, 6.0])
    ds2 = data.load_csv(p, target_column="a")
    assert ds2.feature_names == ["b", "y"]
    assert np.array_equal(ds2.x, [[2.0, 3.0], [5.0, 6.0]])


def test_load_csv_classification_label_mapping(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("x,label\n0.1,dog\n0.2,cat\n0.3,dog\n0.4,ant\n")
    ds = data.load_csv(p, task="classification")
    assert ds.label_names == ["ant", "cat", "dog"]
    assert np.array_equal(ds.y, [2, 1, 2, 0])
    assert ds.y.dtype == np.int64


def test_load_csv_error_reporting(tmp_path):
    p = tmp_path / "bad.csv"
    rows = ["x,y"] + [f"0.{i},1.0" for i in range(1, 7)] + ["oops,1.0"]
    p.write_text("\n".join(rows) + "\n")
    with pytest.raises(ValueError, match="row 7"):
        data.load_csv(p)
    p.write_text("x,y\n1.0\n")
    with pytest.raises(ValueError, match="row 1 has 1 cells"):
        data.load_csv(p)
    p.write_text("x,y\n1.0,zebra\n")
    with pytest.raises(ValueError, match="non-numeric target"):
        data.load_csv(p)
    p.write_text("")
    with pytest.raises(ValueError, match="empty"):
        data.load_csv(p)
    p.write_text("x,y\n")
    with pytest.raises(ValueError, match="no data rows"):
        data.load_csv(p)
    p.write_text("x,y\n1,2\n")
    with pytest.raises(ValueError, match="no column named"):
        data.load_csv(p, target_column="z")
    with pytest.raises(ValueError):
        data.load_csv(p, task="ranking")


def test_write_csv_with_footer(tmp_path):
    p = tmp_path / "out.csv"
    data.write_csv(
        p, ["a", "b"], [[1, 2], [3, 4]], footer_rows=[["metric", "rmse", "0.5"]]
    )
    assert p.read_bytes() == b"a,b\r\n1,2\r\n3,4\r\n\r\nmetric,rmse,0.5\r\n"


def test_model_roundtrip_is_bitwise(tmp_path):
    rng = np.random.default_rng(2)
    model = make_test_model(rng)
    lik = GaussianLikelihood(noise_variance=0.37)
    norm = data.Normalizer(np.array([-5.0, 0.0]), np.array([5.0, 2.0]))
    p = tmp_path / "model.json"
    data.save_model(model, lik, norm, p)
    m2, lik2, norm2 = data.load_model(p)
    assert m2.squash == model.squash
    assert len(m2.layers) == len(model.layers)
    for l1, l2 in zip(model.layers, m2.layers):
        assert l2.theta == l1.theta and l2.grid.depth == l1.grid.depth
        assert np.array_equal(l2.weight_mean, l1.weight_mean)
        assert np.array_equal(l2.weight_rho, l1.weight_rho)
        assert np.array_equal(l2.bias_mean, l1.bias_mean)
        assert np.array_equal(l2.bias_rho, l1.bias_rho)
    assert lik2.kind == "gaussian"
    assert lik2.raw_noise[0] == lik.raw_noise[0]
    assert np.array_equal(norm2.mins, norm.mins)
    # reloaded model computes the identical function
    x = rng.uniform(0, 1, (5, model.in_dim))
    assert np.array_equal(model.forward(x)[0], m2.forward(x)[0])


def test_model_roundtrip_categorical_without_normalizer(tmp_path):
    rng = np.random.default_rng(3)
    model = make_test_model(rng, out_dim=3)
    lik = CategoricalLikelihood(3, labels=["a", "b", "c"])
    p = tmp_path / "model.json"
    data.save_model(model, lik, None, p)
    _, lik2, norm2 = data.load_model(p)
    assert lik2.kind == "categorical"
    assert lik2.n_classes == 3
    assert lik2.labels == ["a", "b", "c"]
    assert norm2 is None


def test_model_file_structure_is_stable(tmp_path):
    # the on-disk schema is part of the interface: documented keys only
    rng = np.random.default_rng(4)
    model = make_test_model(rng)
    p = tmp_path / "model.json"
    data.save_model(model, GaussianLikelihood(), None, p)
    doc = json.loads(p.read_text())
    assert set(doc) == {"format_version", "squash", "layers", "likelihood", "normalizer"}
    assert doc["format_version"] == 1
    layer = doc["layers"][0]
    assert set(layer) == {
        "in_dim",
        "out_dim",
        "depth",
        "theta",
        "layout",
        "weight_mean",
        "weight_rho",
        "bias_mean",
        "bias_rho",
    }
    assert layer["layout"] == "feature-major"
    assert set(layer["weight_mean"]) == {"shape", "data"}
    m = 2 ** layer["depth"] + 1
    assert layer["weight_mean"]["shape"] == [layer["in_dim"] * m, layer["out_dim"]]


def test_load_model_rejects_bad_files(tmp_path):
    rng = np.random.default_rng(5)
    model = make_test_model(rng)
    p = tmp_path / "model.json"
    data.save_model(model, GaussianLikelihood(), None, p)
    text = p.read_text()

    truncated = tmp_path / "trunc.json"
    truncated.write_text(text[: len(text) // 2])
    with pytest.raises(ValueError, match="corrupt or truncated"):
        data.load_model(truncated)

    doc = json.loads(text)
    doc["format_version"] = 99
    vbad = tmp_path / "v.json"
    vbad.write_text(json.dumps(doc))
    with pytest.raises(ValueError, match="version"):
        data.load_model(vbad)

    doc = json.loads(text)
    doc["layers"][0]["weight_mean"]["data"] = doc["layers"][0]["weight_mean"]["data"][:-1]
    sbad = tmp_path / "s.json"
    sbad.write_text(json.dumps(doc))
    with pytest.raises(ValueError, match="declares shape"):
        data.load_model(sbad)

    doc = json.loads(text)
    doc["likelihood"] = {"kind": "poisson"}
    lbad = tmp_path / "l.json"
    lbad.write_text(json.dumps(doc))
    with pytest.raises(ValueError, match="likelihood"):
        data.load_model(lbad)

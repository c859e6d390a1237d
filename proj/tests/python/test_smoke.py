import math

import numpy as np
import pytest

import mocsm

QUICK = {"max_iterations": 30, "restarts": 1}


@pytest.fixture(scope="module")
def data():
    return mocsm.generate_synthetic(seed=2, Q=2, n=40)


def test_families_and_counts():
    assert "MOCSM" in mocsm.families()
    assert mocsm.param_count("MOCSM", 2, 3, 1) == 30


def test_synthetic_shape(data):
    assert len(data) == 3
    X, y = data[0]
    assert X.shape == (40, 1) and y.shape == (40,)


def test_single_channel_matches_sm(data):
    p = mocsm.init_params(data[:1], 2, "MOCSM")
    q = dict(p, family="SM")
    for t in np.linspace(-3, 3, 13):
        assert mocsm.kernel_eval(p, 0, 0, t) == pytest.approx(mocsm.kernel_eval(q, 0, 0, t), abs=1e-12)


def test_gram_is_symmetric(data):
    p = mocsm.init_params(data, 2)
    k = mocsm.gram_matrix(p, [0, 1, 2, 2], [0.0, 0.5, 1.0, -1.0])
    assert np.allclose(k, k.T)
    assert np.linalg.eigvalsh(k).min() > -1e-10


def test_fit_predict(data):
    train, test = mocsm.split(data, ["random:1", "first", "last"])
    p = mocsm.init_params(train, 2)
    before = mocsm.nlml(p, train)
    model, report = mocsm.fit(p, train, QUICK)
    assert report["final_nlml"] <= before + 1e-9
    X, y = test[2]
    mean, var = mocsm.predict(model, [2] * len(y), X)
    assert mean.shape == y.shape
    assert np.all(var >= 0)


def test_gradient_shape(data):
    p = mocsm.init_params(data, 1)
    g = mocsm.nlml_grad(p, data)
    assert np.all(np.isfinite(g))


def test_compare_and_crosscov(data):
    r = mocsm.compare(data, "random:3", ["SM", "MOCSM"], 1, QUICK, seed=1)
    assert [row["family"] for row in r["rows"]] == ["SM", "MOCSM", "MEAN"]
    curves = mocsm.cross_covariance(mocsm.init_params(data, 1), [(0, 1)], [0.0, 1.0], True)
    assert {c[1] for c in curves} == {"MOCSM:1x2", "MOSM:1x2"}


def test_errors_carry_kind(data):
    p = mocsm.init_params(data, 1)
    with pytest.raises(mocsm.MocsmError) as e:
        mocsm.predict(mocsm.fit(p, data, QUICK)[0], [7], [0.0])
    assert e.value.kind == "ChannelOutOfRange"
    assert not math.isnan(mocsm.nlml(p, data))

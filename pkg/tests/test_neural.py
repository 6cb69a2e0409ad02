import numpy as np
import pytest

from conftest import nonlinear_data
from dualroute.neural import (NeuralModel, _forward_backward, _init_params, _loss,
                              extract_penultimate, nn_dual_weights, nn_fit, refit_head,
                              replication_accuracy, sigmoid)


def test_replication_accuracy_oracle():
    # residual SS 1, total SS 2
    assert replication_accuracy([1.0, 2.0, 3.0], [1.0, 2.0, 4.0]) == 0.5
    assert replication_accuracy([1.0, 1.0], [1.0, 1.0]) == 1.0


def test_sigmoid_is_stable():
    out = sigmoid(np.array([-1000.0, 0.0, 1000.0]))
    np.testing.assert_array_equal(out, [0.0, 0.5, 1.0])


@pytest.mark.parametrize("task", ["regression", "classification"])
def test_backprop_matches_finite_differences(task):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(12, 4))
    y = (rng.random(12) < 0.5).astype(float) if task == "classification" else rng.normal(size=12)
    params = _init_params(4, 5, 2, rng, head_init="random")
    params[-1][0] = 0.3

    def loss():
        h = X
        for k in range(2):
            h = np.maximum(h @ params[2 * k] + params[2 * k + 1], 0.0)
        out = h @ params[-2] + (params[-1][0] if task == "classification" else 0.0)
        return _loss(out, y, task)

    grads = _forward_backward(params, X, y, 2, 0.0, rng, task)
    eps = 1e-6
    for p, g in zip(params, grads):
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for k in range(0, flat.size, max(1, flat.size // 6)):
            old = flat[k]
            flat[k] = old + eps
            up = loss()
            flat[k] = old - eps
            down = loss()
            flat[k] = old
            assert gflat[k] == pytest.approx((up - down) / (2 * eps), abs=1e-6)


def test_zero_head_init():
    params = _init_params(3, 4, 2, np.random.default_rng(0), head_init="zero")
    assert not params[-2].any()
    assert params[0].any()


@pytest.fixture(scope="module")
def small_net():
    X, y = nonlinear_data(160, 5, seed=11)
    model = nn_fit(X, y, width=16, depth=2, epochs=40, lr=0.01, dropout=0.1, batch=16, B=3,
                   seed=4)
    return X, y, model


def test_members_split_rows(small_net):
    X, y, model = small_net
    assert model.B == 3
    for m in model.members:
        assert len(np.intersect1d(m.train_rows, m.val_rows)) == 0
        assert len(m.train_rows) + len(m.val_rows) == len(y)
        assert len(m.val_rows) == round(0.15 * len(y))
        assert m.epochs >= 1


def test_fit_is_seeded(small_net):
    X, y, model = small_net
    again = nn_fit(X, y, width=16, depth=2, epochs=40, lr=0.01, dropout=0.1, batch=16, B=3,
                   seed=4)
    np.testing.assert_array_equal(again.predict(X), model.predict(X))


def test_roundtrip(small_net):
    X, _, model = small_net
    back = NeuralModel.from_dict(model.to_dict())
    np.testing.assert_array_equal(back.predict(X), model.predict(X))
    assert extract_penultimate(model, X[:2]).shape == (2, 16)


def test_dual_weights_replicate(small_net):
    X, y, model = small_net
    Xt = np.random.default_rng(1).normal(size=(30, 5))
    W, report = nn_dual_weights(model, X, y, Xt)
    assert W.shape == (30, 160)
    assert report.accuracy == pytest.approx(replication_accuracy(model.predict(Xt), W @ y))
    assert report.accuracy >= 0.95
    assert len(report.lambdas) == 3 and set(report.scalings) <= {"raw", "norm"}
    # a row no member trained on carries no weight
    trained = np.unique(np.concatenate([m.train_rows for m in model.members]))
    untouched = np.setdiff1d(np.arange(len(y)), trained)
    assert (W[:, untouched] == 0).all()


def test_exact_head_is_replicated_almost_perfectly(small_net):
    X, y, model = small_net
    model = NeuralModel.from_dict(model.to_dict())
    refit_head(model, X, y)
    Xt = np.random.default_rng(2).normal(size=(20, 5))
    _, report = nn_dual_weights(model, X, y, Xt, lam_grid=np.logspace(-12, -6, 7))
    assert report.accuracy > 0.999


def test_argument_errors():
    X, y = nonlinear_data(10, 2)
    with pytest.raises(ValueError, match="fewer than one batch"):
        nn_fit(X, y, batch=32)
    with pytest.raises(ValueError, match="unknown task"):
        nn_fit(X, y, batch=4, task="ranking")
    model = nn_fit(X, (y > 0).astype(float), width=4, depth=1, epochs=2, batch=4, B=1,
                   task="classification")
    with pytest.raises(ValueError, match="classifiers"):
        nn_dual_weights(model, X, y, X)
    with pytest.raises(ValueError, match="classification"):
        nn_fit(X, y, width=4, depth=1, epochs=1, batch=4, B=1).predict_proba(X)

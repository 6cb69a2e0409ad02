import csv

import numpy as np
import pytest

from conftest import nonlinear_data
from dualroute.classification import (ConvergenceWarning, DualLogisticModel, dual_logistic_fit,
                                      kernel_logistic_fit, logodds_contributions,
                                      nn_class_contributions, rf_class_weights,
                                      yield_curve_model)
from dualroute.kernel_methods import KernelSpec, cross_gram, gram
from dualroute.neural import nn_fit, sigmoid
from dualroute.trees import rf_fit


def _labels(n, seed=0):
    r = np.random.default_rng(seed)
    X = r.normal(size=(n, 2))
    y = (X[:, 0] + 0.5 * r.normal(size=n) > 0).astype(float)
    return X, y


@pytest.fixture(scope="module")
def fitted():
    X, y = _labels(60)
    spec = KernelSpec("gaussian")
    return X, y, kernel_logistic_fit(X, y, spec, 0.05)


def test_stationarity_conditions(fitted):
    X, y, m = fitted
    assert m.converged
    K = gram(X, m.spec)
    p = sigmoid(K @ m.alpha + m.intercept)
    # optimum: lam * alpha = (y - p) / N and the residuals sum to zero
    np.testing.assert_allclose(m.lam * m.alpha, (y - p) / len(y), atol=1e-7)
    assert abs((y - p).sum()) < 1e-5


def test_logodds_identity_and_cumulative(fitted):
    X, y, m = fitted
    Xt = np.random.default_rng(5).normal(size=(8, 2))
    Kt = m.kernel_rows(Xt)
    P = m.predict_proba(Xt)
    for j, c in enumerate(logodds_contributions(m, Kt)):
        assert abs(c.logodds - np.log(P[j] / (1 - P[j]))) < 1e-8
        assert c.cumulative[-1] == pytest.approx(P[j], abs=1e-12)
        assert c.marginal.sum() == pytest.approx(P[j] - sigmoid(np.array([m.intercept]))[0],
                                                 abs=1e-12)


def test_permutation_invariance(fitted):
    X, y, m = fitted
    Kt = m.kernel_rows(X[:1])[0]
    perm = np.random.default_rng(0).permutation(len(y))
    a = logodds_contributions(m, Kt)
    b = logodds_contributions(m, Kt, order=perm)
    assert b.logodds == pytest.approx(a.logodds, abs=1e-12)
    np.testing.assert_array_equal(b.c_logodds, a.c_logodds[perm])
    assert not np.allclose(b.cumulative, a.cumulative)


def test_to_csv(fitted, tmp_path):
    X, y, m = fitted
    c = logodds_contributions(m, m.kernel_rows(X[:1])[0])
    c.to_csv(tmp_path / "c.csv")
    rows = list(csv.DictReader(open(tmp_path / "c.csv")))
    assert len(rows) == len(y)
    assert float(rows[-1]["cumulative_p"]) == c.cumulative[-1]


def test_roundtrip(fitted):
    X, _, m = fitted
    back = DualLogisticModel.from_dict(m.to_dict())
    np.testing.assert_array_equal(back.predict_proba(X), m.predict_proba(X))


def test_nonconvergence_warns_and_returns_best():
    X, y = _labels(30)
    K = gram(X, KernelSpec())
    with pytest.warns(ConvergenceWarning, match="stopped after 3 iterations"):
        m = dual_logistic_fit(K, y, 0.1, max_iter=3)
    assert not m.converged
    assert min(m.trace) <= m.trace[0]


def test_label_and_shape_checks():
    K = np.eye(3)
    with pytest.raises(ValueError):
        dual_logistic_fit(K, np.array([0.0, 2.0, 1.0]), 1.0)
    with pytest.raises(ValueError, match="Gram matrix"):
        dual_logistic_fit(np.eye(2), np.array([0.0, 1.0, 1.0]), 1.0)


def test_yield_curve_model():
    r = np.random.default_rng(3)
    s = r.normal(size=80)
    y = (s + 0.7 * r.normal(size=80) < -0.3).astype(float)
    m = yield_curve_model(s, y, 0.01)
    assert m.converged
    # inverted curve (low spread) raises the probability
    assert m.predict_proba(np.array([[-2.0]]))[0] > m.predict_proba(np.array([[2.0]]))[0]
    with pytest.raises(ValueError, match="single feature"):
        yield_curve_model(np.ones((3, 2)), np.array([0.0, 1.0, 0.0]), 1.0)


def test_rf_class_weights():
    X, y = _labels(80)
    f = rf_fit(X, y, B=20, seed=0)
    W, p = rf_class_weights(f, X[:10])
    np.testing.assert_allclose(W.sum(axis=1), 1.0, atol=1e-12)
    assert ((p >= 0) & (p <= 1)).all()
    np.testing.assert_allclose(p, f.predict(X[:10]), atol=1e-12)
    with pytest.raises(ValueError, match="0/1"):
        rf_class_weights(rf_fit(*nonlinear_data(30, 2), B=2), X[:1])


def test_nn_classifier_contributions():
    X, y = _labels(120, seed=1)
    model = nn_fit(X, y, width=8, depth=1, epochs=30, lr=0.01, dropout=0.0, batch=16, B=2,
                   seed=0, task="classification")
    Xt = np.random.default_rng(4).normal(size=(6, 2))
    contribs, report = nn_class_contributions(model, X, y, Xt,
                                              lam_grid=np.logspace(-4, 0, 5), max_iter=3000)
    assert len(contribs) == 6
    assert report.accuracy > 0.9
    # the decomposition is exact for its own auxiliary log-odds
    for c in contribs:
        assert c.cumulative[-1] == pytest.approx(c.probability, abs=1e-12)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualroute.dataset import DataError, build_supervised, standardize
from dualroute.linear_models import (RidgeModel, ar_fit, cross_validate_lambda, faar_fit,
                                     ols_dual_weights, ridge_dual_alpha, ridge_fit,
                                     ridge_path_predictions, ridge_primal, ridge_weights)


class TestRidgeOracle:
    # hand-solved: X'X + I = diag(2, 5), X'y = (1, 2)
    X = np.array([[1.0, 0.0], [0.0, 2.0]])
    y = np.array([1.0, 1.0])

    def test_primal(self):
        np.testing.assert_allclose(ridge_primal(self.X, self.y, 1.0), [0.5, 0.4], rtol=1e-14)

    def test_dual(self):
        np.testing.assert_allclose(ridge_dual_alpha(self.X, self.y, 1.0), [0.5, 0.2], rtol=1e-14)

    def test_weights(self):
        m = ridge_fit(self.X, self.y, 1.0)
        np.testing.assert_allclose(ridge_weights(np.array([1.0, 1.0]), m), [0.5, 0.4],
                                   rtol=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 25), st.integers(1, 25), st.floats(1e-3, 1e3), st.integers(0, 10 ** 6))
def test_primal_dual_agree(n, p, lam, seed):
    r = np.random.default_rng(seed)
    X, y = r.normal(size=(n, p)), r.normal(size=n)
    m = ridge_fit(X, y, lam)
    assert np.linalg.norm(m.beta - m.beta_dual) <= 1e-8 * max(1.0, np.linalg.norm(m.beta))


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 20), st.integers(1, 20), st.floats(1e-2, 1e2), st.integers(0, 10 ** 6))
def test_weights_reproduce_prediction(n, p, lam, seed):
    r = np.random.default_rng(seed)
    X, y, Xt = r.normal(size=(n, p)), r.normal(size=n), r.normal(size=(4, p))
    m = ridge_fit(X, y, lam)
    W = ridge_weights(Xt, m)
    np.testing.assert_allclose(W @ y, m.predict(Xt), atol=1e-10 * max(1, np.abs(y).max()))


def test_weights_do_not_depend_on_y(rng):
    X = rng.normal(size=(30, 5))
    a = ridge_fit(X, rng.normal(size=30), 2.0)
    b = ridge_fit(X, rng.normal(size=30), 2.0)
    Xt = rng.normal(size=(3, 5))
    np.testing.assert_array_equal(ridge_weights(Xt, a), ridge_weights(Xt, b))


def test_lambda_zero_underdetermined_uses_pseudoinverse(rng):
    X = rng.normal(size=(5, 20))
    y = rng.normal(size=5)
    m = ridge_fit(X, y, 0.0)
    np.testing.assert_allclose(m.beta, np.linalg.pinv(X) @ y, atol=1e-10)
    np.testing.assert_allclose(m.fitted(), y, atol=1e-10)
    W = ridge_weights(X, m)
    np.testing.assert_allclose(W, np.eye(5), atol=1e-10)


def test_ridge_input_validation(rng):
    X = rng.normal(size=(5, 2))
    with pytest.raises(ValueError, match="lambda"):
        ridge_fit(X, np.ones(5), -1)
    X[0, 0] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        ridge_fit(X, np.ones(5), 1.0)
    m = ridge_fit(np.ones((3, 2)), np.ones(3), 1.0)
    with pytest.raises(ValueError, match="dimension mismatch"):
        ridge_weights(np.ones(3), m)


def test_ridge_serialization(rng):
    m = ridge_fit(rng.normal(size=(6, 3)), rng.normal(size=6), 0.5)
    back = RidgeModel.from_dict(m.to_dict())
    np.testing.assert_array_equal(back.beta, m.beta)
    np.testing.assert_array_equal(back.alpha, m.alpha)


def test_ols_intercept_weights_sum_to_one(rng):
    Z = np.column_stack([np.ones(40), rng.normal(size=(40, 3))])
    W = ols_dual_weights(Z, Z)
    np.testing.assert_allclose(W.sum(axis=1), 1.0, atol=1e-12)
    # projection matrix: symmetric and idempotent
    np.testing.assert_allclose(W, W.T, atol=1e-12)
    np.testing.assert_allclose(W @ W, W, atol=1e-12)


def test_path_matches_direct_solves(rng):
    X, y = rng.normal(size=(25, 8)), rng.normal(size=25)
    Xo = rng.normal(size=(5, 8))
    lams = [0.0, 0.1, 3.0]
    path = ridge_path_predictions(X, y, Xo, lams)
    for k, lam in enumerate(lams):
        np.testing.assert_allclose(path[k], Xo @ ridge_primal(X, y, lam), atol=1e-10)


def test_cross_validation_picks_from_grid_and_is_deterministic(rng):
    X = rng.normal(size=(80, 10))
    y = X[:, 0] + 0.1 * rng.normal(size=80)
    grid = [1e-3, 1.0, 1e4]
    lam = cross_validate_lambda((X, y), grid, n_bags=10, seed=1)
    assert lam in grid and lam != 1e4
    assert cross_validate_lambda((X, y), grid, n_bags=10, seed=1) == lam
    assert cross_validate_lambda((X, y), [7.0]) == 7.0


class TestFaar:
    def _ds(self, panel, first_lag=0):
        ds = build_supervised(panel, "GDP", h=1, lags=4, first_lag=first_lag)
        return standardize(ds)[0]

    @pytest.mark.parametrize("first_lag", [0, 1])
    def test_efficiency_and_leverage(self, panel, first_lag):
        ds = self._ds(panel, first_lag)
        m = faar_fit(ds, r=2, y_lags=2, f_lags=2)
        W = m.weights(ds.X)
        np.testing.assert_allclose(W @ ds.y, m.predict(ds.X), atol=1e-10)
        np.testing.assert_allclose(W.sum(axis=1), 1.0, atol=1e-10)
        names = [ds.feature_names[c] for c in m.y_cols]
        assert names == [f"GDP_lag{first_lag}", f"GDP_lag{first_lag + 1}"]

    def test_ar_is_ols_on_own_lags(self, panel):
        ds = self._ds(panel)
        m = ar_fit(ds, p=3)
        Z = np.column_stack([np.ones(ds.N), ds.X[:, ds.columns_for("GDP", range(3))]])
        np.testing.assert_allclose(m.predict(ds.X), Z @ np.linalg.lstsq(Z, ds.y, rcond=None)[0],
                                   atol=1e-10)

    def test_too_many_factors(self, panel):
        with pytest.raises(DataError, match="factors requested"):
            faar_fit(self._ds(panel), r=50, y_lags=1, f_lags=1)

    def test_too_few_lags(self, panel):
        with pytest.raises(DataError, match="FAAR needs"):
            faar_fit(self._ds(panel), r=1, y_lags=6, f_lags=1)

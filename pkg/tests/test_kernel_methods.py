import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualroute.kernel_methods import (KernelRidge, KernelSpec, SingularSystemError,
                                      cosine_decomposition, cross_gram, cross_validate_krr, gram,
                                      krr_fit, krr_weights, median_distance, spectral_path)
from dualroute.linear_models import ridge_fit, ridge_weights


class TestKernelValues:
    A = np.array([[0.0, 0.0], [3.0, 4.0]])  # distance 5

    def test_linear(self):
        np.testing.assert_array_equal(gram(self.A, KernelSpec("linear")), [[0, 0], [0, 25]])

    def test_polynomial(self):
        K = gram(self.A, KernelSpec("polynomial", degree=2, offset=1.0))
        np.testing.assert_allclose(K, [[1, 1], [1, 676]])

    def test_gaussian(self):
        K = gram(self.A, KernelSpec("gaussian", bandwidth=5.0))
        np.testing.assert_allclose(K[0, 1], np.exp(-0.5), rtol=1e-15)
        np.testing.assert_allclose(np.diag(K), 1.0)

    def test_laplacian(self):
        K = gram(self.A, KernelSpec("laplacian", bandwidth=5.0))
        np.testing.assert_allclose(K[0, 1], np.exp(-1.0), rtol=1e-15)

    def test_median_bandwidth(self):
        X = np.array([[0.0], [1.0], [3.0]])  # distances 1, 2, 3
        assert median_distance(X) == 2.0
        assert KernelSpec("gaussian").resolved(X).bandwidth == 2.0

    def test_bad_spec(self):
        with pytest.raises(ValueError, match="unknown kernel family"):
            KernelSpec("sigmoid")
        with pytest.raises(ValueError, match="bandwidth"):
            KernelSpec("gaussian", bandwidth=0.0)

    def test_unresolved_bandwidth(self):
        with pytest.raises(ValueError, match="bandwidth unset"):
            gram(self.A, KernelSpec("gaussian"))

    def test_dimension_mismatch_and_nan(self):
        with pytest.raises(ValueError, match="dimension mismatch"):
            cross_gram(np.ones((1, 3)), self.A, KernelSpec())
        with pytest.raises(ValueError, match="non-finite"):
            gram(np.array([[np.nan]]), KernelSpec())


class TestOneTrainingPoint:
    X1 = np.array([1.0, -2.0, 0.5])

    def test_identical_and_mirrored(self):
        assert cosine_decomposition(self.X1, self.X1)[2] == pytest.approx(1.0, abs=1e-12)
        assert cosine_decomposition(self.X1, -self.X1)[2] == pytest.approx(-1.0, abs=1e-12)

    def test_half_at_lambda_equal_to_norm(self):
        lam = float(self.X1 @ self.X1)
        assert cosine_decomposition(self.X1, self.X1, lam)[2] == pytest.approx(0.5, abs=1e-12)
        K = np.array([[lam]])
        assert krr_weights(np.array([lam]), K, lam)[0] == pytest.approx(0.5, abs=1e-12)

    def test_orthogonal_is_zero(self):
        X2 = np.array([2.0, 1.0, 0.0])
        cos, ratio, w = cosine_decomposition(self.X1, X2)
        assert cos == 0 and w == 0
        assert ratio == pytest.approx(np.linalg.norm(X2) / np.linalg.norm(self.X1))

    def test_zero_norm(self):
        with pytest.raises(ValueError, match="zero norm"):
            cosine_decomposition(np.zeros(2), np.ones(2))


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 30), st.integers(1, 10), st.floats(1e-3, 1e2), st.integers(0, 10 ** 6))
def test_linear_kernel_equals_ridge(n, p, lam, seed):
    r = np.random.default_rng(seed)
    X, y, Xt = r.normal(size=(n, p)), r.normal(size=n), r.normal(size=(3, p))
    krr = KernelRidge.fit(X, y, KernelSpec("linear"), lam)
    rm = ridge_fit(X, y, lam)
    np.testing.assert_allclose(krr.weights(Xt), ridge_weights(Xt, rm), atol=1e-8)
    np.testing.assert_allclose(krr.predict(Xt), rm.predict(Xt), atol=1e-8)


@pytest.mark.parametrize("family", ["gaussian", "laplacian", "polynomial"])
def test_efficiency_nonlinear_kernels(rng, family):
    X, y = rng.normal(size=(40, 3)), rng.normal(size=40)
    Xt = rng.normal(size=(6, 3))
    m = KernelRidge.fit(X, y, KernelSpec(family), 0.3)
    W = m.weights(Xt)
    np.testing.assert_allclose(W @ y, m.predict(Xt), atol=1e-10)


def test_singular_at_lambda_zero(rng):
    X = rng.normal(size=(6, 2))
    K = gram(X, KernelSpec())
    with pytest.raises(SingularSystemError):
        krr_fit(K, rng.normal(size=6), 0.0)


def test_krr_fit_residual_and_roundtrip(rng):
    X, y = rng.normal(size=(20, 2)), rng.normal(size=20)
    m = KernelRidge.fit(X, y, KernelSpec("gaussian"), 0.1)
    assert m.coef.residual < 1e-10
    back = KernelRidge.from_dict(m.to_dict())
    np.testing.assert_array_equal(back.predict(X), m.predict(X))


def test_spectral_path_matches_solves(rng):
    X, y = rng.normal(size=(30, 3)), rng.normal(size=30)
    spec = KernelSpec("laplacian", bandwidth=1.0)
    K, Kt = gram(X, spec), cross_gram(X[:4], X, spec)
    lams = [0.01, 1.0]
    path = spectral_path(K, Kt, y, lams)
    for k, lam in enumerate(lams):
        np.testing.assert_allclose(path[k], krr_weights(Kt, K, lam) @ y, atol=1e-9)


def test_cross_validation_returns_candidate(rng):
    X = rng.normal(size=(60, 2))
    y = np.sin(2 * X[:, 0]) + 0.1 * rng.normal(size=60)
    spec, lam = cross_validate_krr(X, y, lam_grid=[1e-2, 1.0], n_bags=8, seed=0)
    assert spec.family in ("gaussian", "laplacian")
    assert lam in (1e-2, 1.0)
    assert cross_validate_krr(X, y, lam_grid=[1e-2, 1.0], n_bags=8, seed=0) == (spec, lam)

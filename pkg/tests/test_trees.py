import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import nonlinear_data
from dualroute.resampling import block_bags, block_subsample
from dualroute.trees import (ForestModel, GbtModel, ReconstructionError, Tree, cross_validate_gbt,
                             gbt_axil_insample, gbt_axil_weights, gbt_fit, rf_fit, rf_weights,
                             tree_fit)


class TestTreeOracle:
    # x = 0..5, y steps from 0 to 10 between x = 2 and x = 3
    X = np.arange(6.0)[:, None]
    y = np.array([0.0, 0.0, 0.0, 10.0, 10.0, 10.0])

    def test_single_split(self):
        t = tree_fit(self.X, self.y, min_node=2)
        assert t.n_leaves == 2
        assert t.threshold[0] == 2.5
        np.testing.assert_array_equal(t.predict(np.array([[1.0], [4.0]])), [0.0, 10.0])

    def test_leaf_weights(self):
        t = tree_fit(self.X, self.y, min_node=2)
        L = t.leaf_weight_matrix(6)
        np.testing.assert_allclose(L[t.apply(np.array([[0.0]]))[0]], [1 / 3] * 3 + [0] * 3)

    def test_min_node_blocks_split(self):
        assert tree_fit(self.X, self.y, min_node=7).n_leaves == 1

    def test_max_depth(self, rng):
        X, y = nonlinear_data(100, 3, seed=1)
        assert tree_fit(X, y, min_node=2, max_depth=2).depth <= 2

    def test_roundtrip(self):
        t = tree_fit(self.X, self.y, min_node=2)
        back = Tree.from_dict(t.to_dict())
        np.testing.assert_array_equal(back.apply(self.X), t.apply(self.X))


class TestBlocks:
    def test_subsample_is_whole_blocks(self, rng):
        rows = block_subsample(20, 0.6, 4, rng)
        assert len(rows) == 12  # 3 of 5 blocks
        for b in set(rows // 4):
            assert set(range(4 * b, 4 * b + 4)) <= set(rows)

    def test_bags_have_oob(self):
        for i, o in block_bags(30, 10, 1.0, 5, seed=0):
            assert len(o) > 0
            assert len(np.intersect1d(i, o)) == 0

    def test_block_too_long(self):
        with pytest.raises(ValueError, match="exceeds"):
            block_bags(5, 2, 0.5, 8)


class TestForest:
    def test_weights_portfolio(self):
        X, y = nonlinear_data(150, 5, seed=2)
        f = rf_fit(X, y, B=30, seed=0)
        Xt = np.random.default_rng(9).normal(size=(50, 5))
        W = rf_weights(f, Xt)
        assert (W >= 0).all()
        np.testing.assert_allclose(W.sum(axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(W @ y, f.predict(Xt), atol=1e-12)

    def test_seed_determinism_and_roundtrip(self):
        X, y = nonlinear_data(80, 4, seed=3)
        a, b = rf_fit(X, y, B=5, seed=7), rf_fit(X, y, B=5, seed=7)
        np.testing.assert_array_equal(a.predict(X), b.predict(X))
        back = ForestModel.from_dict(a.to_dict())
        np.testing.assert_array_equal(back.predict(X), a.predict(X))

    def test_unsampled_rows_get_no_weight_from_tree(self):
        X, y = nonlinear_data(64, 3, seed=4)
        f = rf_fit(X, y, B=1, subsample=0.5, block_len=8, seed=0)
        W = rf_weights(f, X)
        out = np.setdiff1d(np.arange(64), f.samples[0])
        assert (W[:, out] == 0).all()


class TestAxil:
    @pytest.mark.parametrize("subsample", [1.0, 0.7])
    def test_reconstruction(self, subsample):
        X, y = nonlinear_data(120, 4, seed=5)
        m = gbt_fit(X, y, S=30, nu=0.2, max_depth=3, subsample=subsample, block_len=8, seed=1)
        Xt = np.random.default_rng(2).normal(size=(40, 4))
        W = gbt_axil_weights(m, Xt)
        np.testing.assert_allclose(W @ y, m.predict(Xt), atol=1e-8)

    def test_staged_insample(self):
        X, y = nonlinear_data(90, 3, seed=6)
        m = gbt_fit(X, y, S=12, nu=0.3, max_depth=2, seed=0)
        staged = m.staged_fitted()
        Hs = gbt_axil_insample(m, stages=range(m.S + 1))
        for s, H in enumerate(Hs):
            np.testing.assert_allclose(H @ y, staged[s], atol=1e-10)
        np.testing.assert_allclose(Hs[0], 1.0 / 90)

    def test_weights_independent_of_y_scale_shift(self):
        # leverage of the mean stage: weights sum to 1 at every test point
        X, y = nonlinear_data(70, 3, seed=7)
        m = gbt_fit(X, y, S=20, nu=0.1, seed=0)
        W = gbt_axil_weights(m, X[:10])
        np.testing.assert_allclose(W.sum(axis=1), 1.0, atol=1e-10)

    def test_check_catches_tampering(self):
        X, y = nonlinear_data(50, 2, seed=8)
        m = gbt_fit(X, y, S=5, seed=0)
        m.loadings[0] = m.loadings[0] + 1.0
        with pytest.raises(ReconstructionError):
            gbt_axil_weights(m, X[:3])

    def test_roundtrip_recomputes_loadings(self):
        X, y = nonlinear_data(50, 2, seed=9)
        m = gbt_fit(X, y, S=8, seed=0)
        back = GbtModel.from_dict(m.to_dict())
        np.testing.assert_allclose(gbt_axil_weights(back, X), gbt_axil_weights(m, X),
                                   atol=1e-14)

    def test_bad_arguments(self):
        X, y = nonlinear_data(20, 2)
        with pytest.raises(ValueError, match="S must"):
            gbt_fit(X, y, S=0)
        with pytest.raises(ValueError, match="learning rate"):
            gbt_fit(X, y, nu=1.5)


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 15), st.floats(0.01, 1.0), st.integers(1, 4), st.integers(0, 1000))
def test_axil_property(S, nu, depth, seed):
    X, y = nonlinear_data(60, 3, seed=seed)
    m = gbt_fit(X, y, S=S, nu=nu, max_depth=depth, seed=seed)
    W = gbt_axil_weights(m, X[:5], check=False)
    assert np.abs(W @ y - m.predict(X[:5])).max() <= 1e-8


def test_gbt_cross_validation():
    X, y = nonlinear_data(64, 3, seed=10)
    grid = {"nu": (0.1, 0.3), "max_depth": (1, 3)}
    best = cross_validate_gbt(X, y, grid, S=10, n_bags=3, seed=0)
    assert best["nu"] in grid["nu"] and best["max_depth"] in grid["max_depth"]
    assert cross_validate_gbt(X, y, {"nu": (0.2,)}) == {"nu": 0.2}

"""CART regression trees, random forest leaf-vote weights and least-squares
gradient boosting with instance loadings (AXIL)."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .resampling import block_subsample, oob_grid_search, spawn_seeds


class ReconstructionError(RuntimeError):
    """Weights failed to reproduce the model's own prediction."""


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_index: np.ndarray  # per node; -1 for internal nodes
    leaf_members: list  # per leaf: training row indices (into the full X)
    leaf_value: np.ndarray

    @property
    def n_leaves(self):
        return len(self.leaf_members)

    @property
    def depth(self):
        depth = np.zeros(len(self.feature), dtype=int)
        for node in range(len(self.feature)):
            if self.left[node] >= 0:
                depth[self.left[node]] = depth[node] + 1
                depth[self.right[node]] = depth[node] + 1
        return int(depth.max())

    def apply(self, X):
        """Leaf index of every row of X."""
        return _kernels.route(X, self.feature, self.threshold, self.left, self.right,
                              self.leaf_index)

    def predict(self, X):
        return self.leaf_value[self.apply(X)]

    def leaf_weight_matrix(self, n):
        """L x n matrix; row l spreads 1/leaf size over the leaf's members."""
        M = np.zeros((self.n_leaves, n))
        for lf, members in enumerate(self.leaf_members):
            M[lf, members] = 1.0 / len(members)
        return M

    def to_dict(self):
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "leaf_index": self.leaf_index.tolist(),
            "leaf_members": [m.tolist() for m in self.leaf_members],
            "leaf_value": self.leaf_value.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            feature=np.asarray(d["feature"], dtype=np.int64),
            threshold=np.asarray(d["threshold"], dtype=float),
            left=np.asarray(d["left"], dtype=np.int64),
            right=np.asarray(d["right"], dtype=np.int64),
            leaf_index=np.asarray(d["leaf_index"], dtype=np.int64),
            leaf_members=[np.asarray(m, dtype=np.int64) for m in d["leaf_members"]],
            leaf_value=np.asarray(d["leaf_value"], dtype=float),
        )


def tree_fit(X, y, min_node=5, mtry_fraction=1.0, rng=None, max_depth=None, rows=None,
             min_leaf=1) -> Tree:
    """Grow a CART regression tree greedily on squared error.

    A node is split only if it holds at least ``min_node`` rows and is
    shallower than ``max_depth``; both children keep ``min_leaf`` rows.  With
    ``mtry_fraction < 1`` every node draws its own candidate-feature subset.
    ``rows`` restricts fitting to a subsample; leaves record the member rows
    as indices into the full ``X``.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    N, P = X.shape
    rows = np.arange(N) if rows is None else np.asarray(rows, dtype=np.int64)
    rng = np.random.default_rng() if rng is None else rng
    n_try = max(1, int(np.floor(mtry_fraction * P)))
    max_depth = np.inf if max_depth is None else max_depth

    feature, threshold, left, right, leaf_index = [], [], [], [], []
    members, values = [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        leaf_index.append(-1)
        return len(feature) - 1

    def make_leaf(node, idx):
        leaf_index[node] = len(members)
        members.append(np.sort(idx))
        values.append(float(np.mean(y[idx])))

    # explicit stack, depth-first, left child first
    root = new_node()
    stack = [(root, rows, 0)]
    while stack:
        node, idx, depth = stack.pop()
        yi = y[idx]
        if len(idx) < max(min_node, 2) or depth >= max_depth or np.ptp(yi) == 0:
            make_leaf(node, idx)
            continue
        if n_try < P:
            cand = np.sort(rng.choice(P, size=n_try, replace=False))
        else:
            cand = np.arange(P)
        f, thr, gain = _kernels.best_split(X, y, idx, cand, min_leaf)
        sse = float(((yi - yi.mean()) ** 2).sum())
        if f < 0 or not gain > 1e-12 * max(sse, 1e-300):
            make_leaf(node, idx)
            continue
        go_left = X[idx, f] <= thr
        lnode, rnode = new_node(), new_node()
        feature[node], threshold[node] = f, thr
        left[node], right[node] = lnode, rnode
        stack.append((rnode, idx[~go_left], depth + 1))
        stack.append((lnode, idx[go_left], depth + 1))

    return Tree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=float),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        leaf_index=np.asarray(leaf_index, dtype=np.int64),
        leaf_members=members,
        leaf_value=np.asarray(values, dtype=float),
    )


# --------------------------------------------------------------------------
# random forest
# --------------------------------------------------------------------------

@dataclass
class ForestModel:
    trees: list
    samples: list  # per tree: sorted training rows it was grown on
    y_train: np.ndarray
    params: dict = field(default_factory=dict)

    @property
    def B(self):
        return len(self.trees)

    @property
    def N(self):
        return len(self.y_train)

    def predict(self, X):
        return np.mean([t.predict(X) for t in self.trees], axis=0)

    def to_dict(self):
        return {"kind": "rf", "trees": [t.to_dict() for t in self.trees],
                "samples": [s.tolist() for s in self.samples],
                "y_train": self.y_train.tolist(), "params": self.params}

    @classmethod
    def from_dict(cls, d):
        return cls(trees=[Tree.from_dict(t) for t in d["trees"]],
                   samples=[np.asarray(s, dtype=np.int64) for s in d["samples"]],
                   y_train=np.asarray(d["y_train"], dtype=float), params=dict(d["params"]))


def rf_fit(X, y, B=500, subsample=0.75, block_len=8, mtry=1 / 3, min_node=5, seed=0,
           max_depth=None) -> ForestModel:
    """Random forest on block-subsampled rows (no replacement)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    N = len(y)
    block_len = min(block_len, N)
    trees, samples = [], []
    for s in spawn_seeds(seed, B):
        rng = np.random.default_rng(s)
        rows = np.arange(N) if subsample >= 1 else block_subsample(N, subsample, block_len, rng)
        trees.append(tree_fit(X, y, min_node=min_node, mtry_fraction=mtry, rng=rng,
                              max_depth=max_depth, rows=rows))
        samples.append(rows)
    params = dict(B=B, subsample=subsample, block_len=block_len, mtry=mtry, min_node=min_node,
                  seed=seed, max_depth=max_depth)
    return ForestModel(trees=trees, samples=samples, y_train=y, params=params)


def rf_weights(forest: ForestModel, X_j):
    """Leaf-vote weights: average over trees of 1/leaf size on the rows
    sharing test point j's leaf.  Returns J x N (or N for one point)."""
    X_j = np.asarray(X_j, dtype=float)
    Xm = np.atleast_2d(X_j)
    W = np.zeros((Xm.shape[0], forest.N))
    for tree in forest.trees:
        W += tree.leaf_weight_matrix(forest.N)[tree.apply(Xm)]
    W /= forest.B
    return W[0] if X_j.ndim == 1 else W


# --------------------------------------------------------------------------
# gradient boosting
# --------------------------------------------------------------------------

@dataclass
class GbtModel:
    trees: list
    nu: float
    base: float
    y_train: np.ndarray
    samples: list
    train_leaves: np.ndarray  # S x N leaf of every training row, sampled or not
    loadings: list = field(default_factory=list)  # S arrays, L_s x N
    params: dict = field(default_factory=dict)

    @property
    def S(self):
        return len(self.trees)

    @property
    def N(self):
        return len(self.y_train)

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.full(X.shape[0], self.base)
        for tree in self.trees:
            out += self.nu * tree.predict(X)
        return out

    def staged_fitted(self):
        """S+1 x N in-sample fits after the mean stage and after each tree."""
        out = np.empty((self.S + 1, self.N))
        cur = np.full(self.N, self.base)
        out[0] = cur
        for s, tree in enumerate(self.trees):
            cur = cur + self.nu * tree.leaf_value[self.train_leaves[s]]
            out[s + 1] = cur
        return out

    def to_dict(self):
        return {"kind": "gbt", "trees": [t.to_dict() for t in self.trees], "nu": self.nu,
                "base": self.base, "y_train": self.y_train.tolist(),
                "samples": [s.tolist() for s in self.samples],
                "train_leaves": self.train_leaves.tolist(), "params": self.params}

    @classmethod
    def from_dict(cls, d):
        model = cls(trees=[Tree.from_dict(t) for t in d["trees"]], nu=float(d["nu"]),
                    base=float(d["base"]), y_train=np.asarray(d["y_train"], dtype=float),
                    samples=[np.asarray(s, dtype=np.int64) for s in d["samples"]],
                    train_leaves=np.asarray(d["train_leaves"], dtype=np.int64).reshape(
                        len(d["trees"]), len(d["y_train"])),
                    params=dict(d["params"]))
        _axil_loadings(model)
        return model


def gbt_fit(X, y, S=100, nu=0.1, max_depth=3, subsample=1.0, seed=0, min_node=2,
            colsample=1.0, block_len=1) -> GbtModel:
    """Least-squares boosting: a mean stage, then S trees on pseudo-residuals.

    Each tree may be grown on a block subsample of rows; leaf values are the
    mean residual of the rows the tree was grown on.  Every training row is
    routed through every tree so the instance loadings span all of y.
    """
    if S < 1:
        raise ValueError("S must be >= 1")
    if not 0 <= nu <= 1:
        raise ValueError("learning rate must lie in [0, 1]")
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    N = len(y)
    base = float(np.mean(y))
    fitted = np.full(N, base)
    trees, samples, leaves = [], [], []
    for s in spawn_seeds(seed, S):
        rng = np.random.default_rng(s)
        rows = (np.arange(N) if subsample >= 1
                else block_subsample(N, subsample, min(block_len, N), rng))
        resid = y - fitted
        tree = tree_fit(X, resid, min_node=min_node, mtry_fraction=colsample, rng=rng,
                        max_depth=max_depth, rows=rows)
        lf = tree.apply(X)
        fitted = fitted + nu * tree.leaf_value[lf]
        trees.append(tree)
        samples.append(rows)
        leaves.append(lf)
    model = GbtModel(trees=trees, nu=float(nu), base=base, y_train=y, samples=samples,
                     train_leaves=np.asarray(leaves, dtype=np.int64),
                     params=dict(S=S, nu=nu, max_depth=max_depth, subsample=subsample,
                                 seed=seed, min_node=min_node, colsample=colsample,
                                 block_len=block_len))
    _axil_loadings(model)
    return model


def _axil_loadings(model: GbtModel):
    """Per-tree leaf loadings M_s and the final in-sample weight matrix.

    H holds, in row r, the weights turning y into row r's fitted value.  The
    mean stage is H_0 = 1/N.  Tree s assigns leaf l the mean residual of its
    members, i.e. weights M_s[l] = mean_{i in l}(e_i - H_{s-1}[i]); then
    H_s[r] = H_{s-1}[r] + nu * M_s[leaf_s(r)].
    """
    N = model.N
    H = np.full((N, N), 1.0 / N)
    loadings = []
    for s, tree in enumerate(model.trees):
        M = _kernels.leaf_residual_loadings(H, model.train_leaves[s], model.samples[s],
                                            tree.n_leaves)
        H += model.nu * M[model.train_leaves[s]]
        loadings.append(M)
    model.loadings = loadings
    return H


def gbt_axil_insample(model: GbtModel, stages=None):
    """In-sample weight matrices H_s (row r gives fitted value r as H_s[r] @ y).

    Returns the final matrix, or a list for every stage index in ``stages``
    (0 is the mean stage).
    """
    N = model.N
    H = np.full((N, N), 1.0 / N)
    wanted = None if stages is None else set(stages)
    out = {}
    if wanted is not None and 0 in wanted:
        out[0] = H.copy()
    for s, M in enumerate(model.loadings, start=1):
        H = H + model.nu * M[model.train_leaves[s - 1]]
        if wanted is not None and s in wanted:
            out[s] = H.copy()
    if wanted is None:
        return H
    return [out[s] for s in stages]


def gbt_axil_weights(model: GbtModel, X_j, check=True, atol=1e-8):
    """AXIL weights: w_j = 1/N + nu * sum_s M_s[leaf_s(X_j)].

    With ``check`` the reconstruction w_j . y == prediction is verified and a
    ``ReconstructionError`` raised on mismatch.
    """
    X_j = np.asarray(X_j, dtype=float)
    Xm = np.atleast_2d(X_j)
    W = np.full((Xm.shape[0], model.N), 1.0 / model.N)
    for tree, M in zip(model.trees, model.loadings):
        W += model.nu * M[tree.apply(Xm)]
    if check:
        gap = np.abs(W @ model.y_train - model.predict(Xm))
        scale = max(1.0, float(np.abs(model.y_train).max()))
        if gap.max() > atol * scale:
            raise ReconstructionError(f"AXIL weights miss the prediction by {gap.max():.3g}")
    return W[0] if X_j.ndim == 1 else W


DEFAULT_GBT_GRID = {"nu": (0.05, 0.1, 0.2), "max_depth": (2, 3, 4), "subsample": (0.8, 1.0),
                    "colsample": (0.5, 1.0)}


def cross_validate_gbt(X, y, grid=None, S=100, n_bags=5, bag_rate=0.8, block_len=8, seed=0,
                       min_node=2):
    """Boosting settings minimizing the mean out-of-bag squared error over
    block bags.  ``grid`` maps gbt_fit keyword names to candidate values;
    returns the winning keyword dict (ties go to the earliest combination)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    grid = DEFAULT_GBT_GRID if grid is None else grid
    keys = sorted(grid)
    combos = [dict(zip(keys, vals)) for vals in itertools.product(*(grid[k] for k in keys))]
    if len(combos) == 1:
        return combos[0]

    def score(in_bag, oob):
        out = []
        for kw in combos:
            m = gbt_fit(X[in_bag], y[in_bag], S=S, seed=seed, min_node=min_node,
                        block_len=block_len, **kw)
            out.append(float(((m.predict(X[oob]) - y[oob]) ** 2).mean()))
        return np.array(out)

    losses = oob_grid_search(len(y), n_bags, bag_rate, block_len, score, seed)
    return combos[int(np.argmin(losses))]

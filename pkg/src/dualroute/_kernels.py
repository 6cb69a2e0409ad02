"""Hot inner loops, each with a numba and a numpy implementation.

The two paths are kept numerically identical where the algorithm makes a
discrete choice (split search sums in the same sequential order), so the
backend never changes a fitted tree.  Dispatch happens per call through
``_accel.USE_NUMBA``.
"""
import numpy as np
from scipy.spatial.distance import cdist

from . import _accel
from ._accel import njit

# relative slack for calling two split gains equal
TIE_RTOL = 1e-12


# --------------------------------------------------------------------------
# pairwise squared distances
# --------------------------------------------------------------------------

@njit(cache=True)
def sq_dists_nb(A, B):
    n, p = A.shape
    m = B.shape[0]
    out = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for k in range(p):
                d = A[i, k] - B[j, k]
                acc += d * d
            out[i, j] = acc
    return out


def sq_dists_np(A, B):
    return cdist(A, B, metric="sqeuclidean")


def sq_dists(A, B):
    A = np.ascontiguousarray(A, dtype=np.float64)
    B = np.ascontiguousarray(B, dtype=np.float64)
    if _accel.USE_NUMBA:
        return sq_dists_nb(A, B)
    return sq_dists_np(A, B)


# --------------------------------------------------------------------------
# CART split search
# --------------------------------------------------------------------------

@njit(cache=True)
def _feature_gains_nb(X, y, rows, f, total, min_leaf, xs, ys, gains):
    n = rows.shape[0]
    vals = np.empty(n)
    for k in range(n):
        vals[k] = X[rows[k], f]
    order = np.argsort(vals, kind="mergesort")
    for k in range(n):
        xs[k] = vals[order[k]]
        ys[k] = y[rows[order[k]]]
    parent = total * total / n
    sl = 0.0
    for k in range(n - 1):
        sl += ys[k]
        nl = k + 1
        nr = n - nl
        if xs[k] < xs[k + 1] and nl >= min_leaf and nr >= min_leaf:
            sr = total - sl
            gains[k] = sl * sl / nl + sr * sr / nr - parent
        else:
            gains[k] = -np.inf


@njit(cache=True)
def best_split_nb(X, y, rows, features, min_leaf):
    n = rows.shape[0]
    total = 0.0
    for k in range(n):
        total += y[rows[k]]
    xs = np.empty(n)
    ys = np.empty(n)
    gains = np.empty(max(n - 1, 1))
    best = -np.inf
    for f in features:
        _feature_gains_nb(X, y, rows, f, total, min_leaf, xs, ys, gains)
        for k in range(n - 1):
            if gains[k] > best:
                best = gains[k]
    if best == -np.inf:
        return -1, 0.0, best
    cut = best - TIE_RTOL * max(1.0, abs(best))
    for f in features:
        _feature_gains_nb(X, y, rows, f, total, min_leaf, xs, ys, gains)
        for k in range(n - 1):
            if gains[k] >= cut:
                thr = xs[k] + 0.5 * (xs[k + 1] - xs[k])
                if thr >= xs[k + 1]:
                    thr = xs[k]
                return f, thr, best
    return -1, 0.0, best


def _feature_gains_np(X, y, rows, f, total, min_leaf):
    vals = X[rows, f]
    order = np.argsort(vals, kind="mergesort")
    xs = vals[order]
    ys = y[rows[order]]
    n = rows.shape[0]
    sl = np.cumsum(ys)[:-1]
    nl = np.arange(1, n, dtype=np.float64)
    nr = n - nl
    sr = total - sl
    gains = sl * sl / nl + sr * sr / nr - total * total / n
    valid = (xs[:-1] < xs[1:]) & (nl >= min_leaf) & (nr >= min_leaf)
    return np.where(valid, gains, -np.inf), xs


def best_split_np(X, y, rows, features, min_leaf):
    n = rows.shape[0]
    if n < 2:
        return -1, 0.0, -np.inf
    total = np.cumsum(y[rows])[-1]
    per_feature = [_feature_gains_np(X, y, rows, f, total, min_leaf) for f in features]
    best = max((g.max() for g, _ in per_feature), default=-np.inf)
    if best == -np.inf:
        return -1, 0.0, best
    cut = best - TIE_RTOL * max(1.0, abs(best))
    for f, (gains, xs) in zip(features, per_feature):
        hits = np.flatnonzero(gains >= cut)
        if hits.size:
            k = hits[0]
            thr = xs[k] + 0.5 * (xs[k + 1] - xs[k])
            if thr >= xs[k + 1]:
                thr = xs[k]
            return int(f), float(thr), float(best)
    return -1, 0.0, best


def best_split(X, y, rows, features, min_leaf):
    """Best variance-reduction split of ``rows`` over candidate ``features``.

    Returns ``(feature, threshold, gain)`` with ``feature == -1`` when no
    admissible split exists.  Rows with ``x <= threshold`` go left.  Among
    (near-)equal gains the lowest feature index, then the lowest threshold,
    wins.
    """
    rows = np.ascontiguousarray(rows, dtype=np.int64)
    features = np.ascontiguousarray(np.sort(features), dtype=np.int64)
    if _accel.USE_NUMBA:
        f, thr, gain = best_split_nb(X, y, rows, features, int(min_leaf))
        return int(f), float(thr), float(gain)
    return best_split_np(X, y, rows, features, int(min_leaf))


# --------------------------------------------------------------------------
# tree routing
# --------------------------------------------------------------------------

@njit(cache=True)
def route_nb(X, feature, threshold, left, right, leaf_index):
    n = X.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        node = 0
        while left[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = leaf_index[node]
    return out


def route_np(X, feature, threshold, left, right, leaf_index):
    node = np.zeros(X.shape[0], dtype=np.int64)
    active = left[node] >= 0
    while active.any():
        idx = np.flatnonzero(active)
        cur = node[idx]
        go_left = X[idx, feature[cur]] <= threshold[cur]
        node[idx] = np.where(go_left, left[cur], right[cur])
        active = left[node] >= 0
    return leaf_index[node]


def route(X, feature, threshold, left, right, leaf_index):
    X = np.ascontiguousarray(X, dtype=np.float64)
    if _accel.USE_NUMBA:
        return route_nb(X, feature, threshold, left, right, leaf_index)
    return route_np(X, feature, threshold, left, right, leaf_index)


# --------------------------------------------------------------------------
# boosting instance loadings
# --------------------------------------------------------------------------

@njit(cache=True)
def leaf_residual_loadings_nb(H, leaf, members, n_leaves):
    n = H.shape[1]
    M = np.zeros((n_leaves, n))
    counts = np.zeros(n_leaves)
    for i in members:
        lf = leaf[i]
        counts[lf] += 1.0
        M[lf, i] += 1.0
        for k in range(n):
            M[lf, k] -= H[i, k]
    for lf in range(n_leaves):
        if counts[lf] > 0:
            for k in range(n):
                M[lf, k] /= counts[lf]
    return M


def leaf_residual_loadings_np(H, leaf, members, n_leaves):
    n = H.shape[1]
    member_leaf = leaf[members]
    counts = np.bincount(member_leaf, minlength=n_leaves).astype(np.float64)
    L = np.zeros((n_leaves, n))
    L[member_leaf, members] = 1.0
    L /= np.where(counts > 0, counts, 1.0)[:, None]
    return L - L @ H


def leaf_residual_loadings(H, leaf, members, n_leaves):
    """Per-leaf weight vectors that turn ``y`` into the leaf's mean residual.

    ``H`` is the current in-sample weight matrix (row r holds the weights
    whose dot product with ``y`` is the fitted value of row r), ``leaf`` the
    leaf of every training row and ``members`` the rows the tree was fit on.
    Row l of the result is the mean over members in leaf l of ``e_i - H[i]``.
    """
    members = np.ascontiguousarray(members, dtype=np.int64)
    leaf = np.ascontiguousarray(leaf, dtype=np.int64)
    if _accel.USE_NUMBA:
        return leaf_residual_loadings_nb(np.ascontiguousarray(H), leaf, members, int(n_leaves))
    return leaf_residual_loadings_np(H, leaf, members, int(n_leaves))

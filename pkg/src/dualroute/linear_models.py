"""Ridge regression by primal and dual routes, OLS dual weights, FAAR and
block out-of-bag tuning of the ridge penalty."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .dataset import DataError, TimeSeriesDataset
from .kernel_methods import krr_weights
from .resampling import oob_grid_search

DEFAULT_LAMBDA_GRID = np.logspace(-4, 6, 50)


def _check_finite(*arrays):
    for a in arrays:
        if not np.isfinite(a).all():
            raise ValueError("non-finite input")


def ridge_primal(X, y, lam):
    """beta = (X'X + lam I_P)^-1 X'y; pseudoinverse when lam = 0 and X'X is
    singular."""
    P = X.shape[1]
    A = X.T @ X + lam * np.eye(P)
    try:
        c = linalg.cho_factor(A, lower=True, check_finite=False)
        if lam == 0 and np.linalg.cond(A) > 1.0 / np.finfo(float).eps:
            raise linalg.LinAlgError
        return linalg.cho_solve(c, X.T @ y, check_finite=False)
    except linalg.LinAlgError:
        if lam > 0:
            return linalg.solve(A, X.T @ y, assume_a="sym")
        return np.linalg.pinv(X) @ y


def ridge_dual_alpha(X, y, lam):
    """alpha = (XX' + lam I_N)^-1 y, with (XX')^+ y when lam = 0 and XX' is
    singular."""
    N = X.shape[0]
    K = X @ X.T
    A = K + lam * np.eye(N)
    try:
        c = linalg.cho_factor(A, lower=True, check_finite=False)
        if lam == 0 and np.linalg.cond(A) > 1.0 / np.finfo(float).eps:
            raise linalg.LinAlgError
        return linalg.cho_solve(c, y, check_finite=False)
    except linalg.LinAlgError:
        if lam > 0:
            return linalg.solve(A, y, assume_a="sym")
        return np.linalg.pinv(K, hermitian=True) @ y


@dataclass
class RidgeModel:
    beta: np.ndarray
    alpha: np.ndarray
    lam: float
    X_train: np.ndarray
    y_train: np.ndarray
    feature_names: list | None = None

    @property
    def beta_dual(self):
        return self.X_train.T @ self.alpha

    def predict(self, X):
        return np.asarray(X, dtype=float) @ self.beta

    def fitted(self):
        return self.predict(self.X_train)

    def to_dict(self):
        return {"kind": "ridge", "beta": self.beta.tolist(), "alpha": self.alpha.tolist(),
                "lambda": self.lam, "X_train": self.X_train.tolist(),
                "y_train": self.y_train.tolist(), "names": self.feature_names}

    @classmethod
    def from_dict(cls, d):
        return cls(beta=np.asarray(d["beta"], dtype=float),
                   alpha=np.asarray(d["alpha"], dtype=float),
                   lam=float(d["lambda"]),
                   X_train=np.asarray(d["X_train"], dtype=float),
                   y_train=np.asarray(d["y_train"], dtype=float),
                   feature_names=d.get("names"))


def ridge_fit(X, y, lam, feature_names=None) -> RidgeModel:
    """Fit ridge (no intercept; inputs assumed standardized) and keep both the
    primal ``beta`` and the dual ``alpha``."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_finite(X, y)
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    return RidgeModel(beta=ridge_primal(X, y, lam), alpha=ridge_dual_alpha(X, y, lam),
                      lam=float(lam), X_train=X, y_train=y, feature_names=feature_names)


def ridge_weights(X_j, model: RidgeModel):
    """w_j = X_j X'(XX' + lam I)^-1 (OLS pseudoinverse form when lam = 0)."""
    X_j = np.asarray(X_j, dtype=float)
    if X_j.shape[-1] != model.X_train.shape[1]:
        raise ValueError("dimension mismatch between X_j and the training design")
    if model.lam == 0:
        return ols_dual_weights(X_j, model.X_train)
    K = model.X_train @ model.X_train.T
    return krr_weights(X_j @ model.X_train.T, K, model.lam)


def ols_dual_weights(Z_j, Z, y=None):
    """OLS data-portfolio weights w_j = Z_j Z'(ZZ')^+, any rank.

    Computed as Z_j Z^+ (the same matrix, better conditioned).  ``y`` is
    accepted for signature symmetry and ignored: the weights do not depend on
    it.
    """
    Z = np.asarray(Z, dtype=float)
    return np.asarray(Z_j, dtype=float) @ np.linalg.pinv(Z)


def ols_predict(Z_j, Z, y):
    return np.asarray(Z_j, dtype=float) @ (np.linalg.pinv(Z) @ y)


# --------------------------------------------------------------------------
# factor-augmented autoregression
# --------------------------------------------------------------------------

@dataclass
class FaarModel:
    loadings: np.ndarray  # P_block x r, applied to the standardized lag-0 block
    block_mean: np.ndarray
    block_std: np.ndarray
    y_cols: list
    block_cols: list  # one list of column indices per factor lag
    coef: np.ndarray
    Z: np.ndarray
    y_train: np.ndarray

    @property
    def r(self):
        return self.loadings.shape[1]

    def regressors(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        parts = [np.ones((X.shape[0], 1)), X[:, self.y_cols]]
        for cols in self.block_cols:
            block = (X[:, cols] - self.block_mean) / self.block_std
            parts.append(block @ self.loadings)
        return np.hstack(parts)

    def predict(self, X):
        return self.regressors(X) @ self.coef

    def weights(self, X):
        return ols_dual_weights(self.regressors(X), self.Z)

    def to_dict(self):
        return {"kind": "faar", "loadings": self.loadings.tolist(),
                "block_mean": self.block_mean.tolist(), "block_std": self.block_std.tolist(),
                "y_cols": list(map(int, self.y_cols)),
                "block_cols": [list(map(int, c)) for c in self.block_cols],
                "coef": self.coef.tolist(), "Z": self.Z.tolist(),
                "y_train": self.y_train.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(loadings=np.asarray(d["loadings"], dtype=float),
                   block_mean=np.asarray(d["block_mean"], dtype=float),
                   block_std=np.asarray(d["block_std"], dtype=float),
                   y_cols=list(d["y_cols"]), block_cols=[list(c) for c in d["block_cols"]],
                   coef=np.asarray(d["coef"], dtype=float), Z=np.asarray(d["Z"], dtype=float),
                   y_train=np.asarray(d["y_train"], dtype=float))


def principal_components(Xs, r):
    """First ``r`` loadings of a standardized block via SVD.

    Each loading vector is signed so that its largest-magnitude entry is
    positive.
    """
    _, _, Vt = np.linalg.svd(Xs, full_matrices=False)
    V = Vt[:r].T.copy()
    for k in range(V.shape[1]):
        if V[np.argmax(np.abs(V[:, k])), k] < 0:
            V[:, k] *= -1
    return V


def faar_fit(ds: TimeSeriesDataset, r=4, y_lags=4, f_lags=2) -> FaarModel:
    """OLS of y on an intercept, ``y_lags`` own lags and ``f_lags`` lags of
    ``r`` principal-component factors.

    Factors come from the most recent lag block of every variable (the panel
    at the forecast origin); older factor lags apply the same loadings to
    the older lag blocks.
    """
    if not ds.target:
        raise DataError("dataset has no target name; FAAR needs the target's own lags")
    if ds.lags < max(y_lags, f_lags):
        raise DataError(f"dataset has {ds.lags} lags, FAAR needs {max(y_lags, f_lags)}")
    variables = ds.variables()
    lag_ids = list(ds.lag_range())
    blocks = [[ds.feature_names.index(f"{v}_lag{k}") for v in variables]
              for k in lag_ids[:f_lags]]
    if r > len(variables):
        raise DataError(f"{r} factors requested from {len(variables)} variables")
    n_reg = 1 + y_lags + r * f_lags
    if ds.N <= n_reg:
        raise DataError(f"{ds.N} rows cannot support {n_reg} FAAR regressors")
    base = ds.X[:, blocks[0]]
    mean = base.mean(axis=0)
    std = base.std(axis=0, ddof=1)
    std = np.where(std > 0, std, 1.0)
    loadings = principal_components((base - mean) / std, r)
    model = FaarModel(loadings=loadings, block_mean=mean, block_std=std,
                      y_cols=ds.columns_for(ds.target, lag_ids[:y_lags]), block_cols=blocks,
                      coef=np.zeros(n_reg), Z=np.empty((0, n_reg)), y_train=ds.y.copy())
    Z = model.regressors(ds.X)
    model.Z = Z
    model.coef = np.linalg.pinv(Z) @ ds.y
    return model


def ar_fit(ds: TimeSeriesDataset, p=4) -> FaarModel:
    """AR(p) with intercept by OLS: the factor model with no factors."""
    return faar_fit(ds, r=0, y_lags=p, f_lags=1)


# --------------------------------------------------------------------------
# tuning
# --------------------------------------------------------------------------

def ridge_path_predictions(X_in, y_in, X_out, lams):
    """Out-of-sample ridge predictions for every lambda from one SVD (lam = 0
    gives the minimum-norm least-squares fit)."""
    U, s, Vt = np.linalg.svd(X_in, full_matrices=False)
    uty = U.T @ y_in
    XV = X_out @ Vt.T
    out = np.empty((len(lams), X_out.shape[0]))
    tol = s.max() * max(X_in.shape) * np.finfo(float).eps if s.size else 0.0
    for k, lam in enumerate(lams):
        if lam == 0:
            filt = np.where(s > tol, 1.0 / np.where(s > tol, s, 1.0), 0.0)
        else:
            filt = s / (s * s + lam)
        out[k] = XV @ (filt * uty)
    return out


def cross_validate_lambda(ds, lam_grid=None, n_bags=20, bag_rate=0.8, block_len=8, seed=0):
    """Penalty minimizing the mean out-of-bag squared error over block bags.

    Ties go to the earliest grid entry.
    """
    X, y = (ds.X, ds.y) if isinstance(ds, TimeSeriesDataset) else ds
    grid = np.asarray(DEFAULT_LAMBDA_GRID if lam_grid is None else lam_grid, dtype=float)
    if grid.size == 0:
        raise ValueError("empty lambda grid")
    if grid.size == 1:
        return float(grid[0])
    if block_len > len(y):
        raise ValueError(f"block_len {block_len} exceeds the {len(y)} rows")

    def score(in_bag, oob):
        pred = ridge_path_predictions(X[in_bag], y[in_bag], X[oob], grid)
        return ((pred - y[oob]) ** 2).mean(axis=1)

    losses = oob_grid_search(len(y), n_bags, bag_rate, block_len, score, seed)
    return float(grid[int(np.argmin(losses))])

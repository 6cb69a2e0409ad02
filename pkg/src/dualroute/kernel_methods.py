"""Kernels, Gram matrices and kernel ridge regression in dual form."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from . import _kernels
from .resampling import oob_grid_search

FAMILIES = ("linear", "polynomial", "gaussian", "laplacian")


class SingularSystemError(np.linalg.LinAlgError):
    """(K + lambda I) cannot be solved (lambda = 0 with a singular K)."""


@dataclass(frozen=True)
class KernelSpec:
    family: str = "linear"
    bandwidth: float | None = None
    degree: int = 2
    offset: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ValueError("bandwidth must be > 0")
        if self.degree < 1:
            raise ValueError("degree must be >= 1")

    def resolved(self, X) -> "KernelSpec":
        """Fill an unset bandwidth with the median pairwise distance of X."""
        if self.family in ("gaussian", "laplacian") and self.bandwidth is None:
            return KernelSpec(self.family, median_distance(X), self.degree, self.offset)
        return self

    def to_dict(self):
        return {"family": self.family, "bandwidth": self.bandwidth,
                "degree": self.degree, "offset": self.offset}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def median_distance(X):
    X = np.asarray(X, dtype=float)
    d2 = _kernels.sq_dists(X, X)
    iu = np.triu_indices(X.shape[0], k=1)
    dist = np.sqrt(d2[iu])
    dist = dist[dist > 0]
    return float(np.median(dist)) if dist.size else 1.0


def _apply_kernel(A, B, spec: KernelSpec):
    if spec.family == "linear":
        return A @ B.T
    if spec.family == "polynomial":
        return (spec.offset + A @ B.T) ** spec.degree
    if spec.bandwidth is None:
        raise ValueError("bandwidth unset; call KernelSpec.resolved(X) first")
    d2 = _kernels.sq_dists(A, B)
    if spec.family == "gaussian":
        return np.exp(-d2 / (2.0 * spec.bandwidth ** 2))
    return np.exp(-np.sqrt(d2) / spec.bandwidth)


def gram(X, spec: KernelSpec):
    """N x N kernel matrix, symmetrized exactly."""
    X = np.asarray(X, dtype=float)
    if not np.isfinite(X).all():
        raise ValueError("X has non-finite entries")
    K = _apply_kernel(X, X, spec)
    return 0.5 * (K + K.T)


def cross_gram(X_test, X_train, spec: KernelSpec):
    """J x N matrix whose row j is the proximity of test point j to each
    training row."""
    X_test = np.atleast_2d(np.asarray(X_test, dtype=float))
    X_train = np.asarray(X_train, dtype=float)
    if X_test.shape[1] != X_train.shape[1]:
        raise ValueError(f"dimension mismatch: {X_test.shape[1]} vs {X_train.shape[1]} columns")
    return _apply_kernel(X_test, X_train, spec)


# --------------------------------------------------------------------------
# regularized solves
# --------------------------------------------------------------------------

def _regularized_solve(K, B, lam):
    """Solve (K + lam I) Z = B for symmetric PSD K."""
    K = np.asarray(K, dtype=float)
    n = K.shape[0]
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    A = K + lam * np.eye(n)
    try:
        c = linalg.cho_factor(A, lower=True, check_finite=False)
        Z = linalg.cho_solve(c, B, check_finite=False)
        if lam == 0 and np.linalg.cond(A) > 1.0 / np.finfo(float).eps:
            raise SingularSystemError("K is numerically singular at lambda = 0")
        return Z
    except linalg.LinAlgError:
        if lam == 0:
            raise SingularSystemError("K is not invertible at lambda = 0") from None
    jitter = 1e-10 * np.trace(K) / n
    try:
        c = linalg.cho_factor(A + jitter * np.eye(n), lower=True, check_finite=False)
        return linalg.cho_solve(c, B, check_finite=False)
    except linalg.LinAlgError:
        pass
    vals, vecs = linalg.eigh(A)
    vals = np.maximum(vals, jitter)
    return vecs @ ((vecs.T @ B) / (vals[:, None] if np.ndim(B) == 2 else vals))


@dataclass(frozen=True)
class DualCoefficients:
    alpha: np.ndarray
    lam: float
    residual: float

    def to_dict(self):
        return {"alpha": self.alpha.tolist(), "lambda": self.lam, "residual": self.residual}


def krr_fit(K, y, lam) -> DualCoefficients:
    """alpha = (K + lam I)^-1 y."""
    y = np.asarray(y, dtype=float)
    alpha = _regularized_solve(K, y, lam)
    residual = float(np.linalg.norm(K @ alpha + lam * alpha - y))
    return DualCoefficients(alpha=alpha, lam=float(lam), residual=residual)


def krr_weights(K_j, K, lam):
    """Data-portfolio weights w_j = K_j (K + lam I)^-1.

    ``K_j`` may be a single N-vector or a J x N stack; output has the same
    shape.
    """
    K_j = np.asarray(K_j, dtype=float)
    W = _regularized_solve(K, np.atleast_2d(K_j).T, lam).T
    return W[0] if K_j.ndim == 1 else W


def cosine_decomposition(X_1, X_2, lam=0.0):
    """Angle form of the one-training-point weight.

    Returns ``(cos_gamma, norm_ratio, w_2)`` with ``w_2 = cos_gamma *
    norm_ratio``.  For ``lam > 0`` the training vector's squared norm is
    inflated by ``tau = 1 + lam / <X_1, X_1>`` in both the angle and the
    ratio, which gives ``w_2 = <X_2, X_1> / (<X_1, X_1> + lam)``.
    """
    X_1 = np.asarray(X_1, dtype=float).ravel()
    X_2 = np.asarray(X_2, dtype=float).ravel()
    s11 = float(X_1 @ X_1)
    if s11 == 0:
        raise ValueError("training vector has zero norm")
    tau = 1.0 + lam / s11
    n1 = np.sqrt(tau * s11)
    n2 = float(np.linalg.norm(X_2))
    if n2 == 0:
        return 0.0, 0.0, 0.0
    cos_gamma = float(X_1 @ X_2) / (n1 * n2)
    ratio = n2 / n1
    return cos_gamma, ratio, cos_gamma * ratio


# --------------------------------------------------------------------------
# model object
# --------------------------------------------------------------------------

@dataclass
class KernelRidge:
    """Fitted kernel ridge regression holding what prediction and weights
    need."""

    X_train: np.ndarray
    y_train: np.ndarray
    spec: KernelSpec
    lam: float
    coef: DualCoefficients | None = None

    @classmethod
    def fit(cls, X, y, spec: KernelSpec, lam):
        X = np.asarray(X, dtype=float)
        spec = spec.resolved(X)
        K = gram(X, spec)
        return cls(X_train=X, y_train=np.asarray(y, dtype=float), spec=spec, lam=float(lam),
                   coef=krr_fit(K, y, lam))

    def predict(self, X_test):
        return cross_gram(X_test, self.X_train, self.spec) @ self.coef.alpha

    def weights(self, X_test):
        K = gram(self.X_train, self.spec)
        return krr_weights(cross_gram(X_test, self.X_train, self.spec), K, self.lam)

    def to_dict(self):
        return {"kind": "krr", "X_train": self.X_train.tolist(), "y_train": self.y_train.tolist(),
                "spec": self.spec.to_dict(), "lambda": self.lam,
                "alpha": self.coef.alpha.tolist()}

    @classmethod
    def from_dict(cls, d):
        X = np.asarray(d["X_train"], dtype=float)
        y = np.asarray(d["y_train"], dtype=float)
        spec = KernelSpec.from_dict(d["spec"])
        coef = DualCoefficients(np.asarray(d["alpha"], dtype=float), float(d["lambda"]), 0.0)
        return cls(X_train=X, y_train=y, spec=spec, lam=float(d["lambda"]), coef=coef)


def export_gram_csv(K, path):
    np.savetxt(path, np.asarray(K), delimiter=",", fmt="%.17g")


def spectral_path(K, K_test, y, lams):
    """Predictions K_test (K + lam I)^-1 y for every lam in one eigensolve.

    Rows of the output follow ``lams``.  Grid points whose system is
    numerically singular come back as NaN.
    """
    vals, vecs = linalg.eigh(np.asarray(K, dtype=float))
    proj = vecs.T @ y
    left = K_test @ vecs
    out = np.empty((len(lams), K_test.shape[0]))
    scale = max(abs(vals).max(), 1.0)
    for k, lam in enumerate(lams):
        denom = vals + lam
        if denom.min() <= 1e-12 * scale:
            if lam == 0:
                inv = np.where(vals > 1e-10 * scale, 1.0 / np.where(vals > 0, vals, 1.0), 0.0)
                out[k] = left @ (inv * proj)
                continue
            warnings.warn(f"singular system at lambda={lam:g}", RuntimeWarning, stacklevel=2)
            out[k] = np.nan
            continue
        out[k] = left @ (proj / denom)
    return out


DEFAULT_KRR_LAMBDA_GRID = np.logspace(-4, 2, 25)


def cross_validate_krr(X, y, families=("gaussian", "laplacian"), bandwidth_scales=(0.5, 1.0, 2.0),
                       lam_grid=None, n_bags=100, bag_rate=0.8, block_len=8, seed=0):
    """Kernel family, bandwidth and penalty minimizing the mean out-of-bag
    squared error over block bags.

    Bandwidths are multiples of the median pairwise distance of ``X``.
    Returns (KernelSpec, lambda); ties go to the earliest candidate.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    grid = np.asarray(DEFAULT_KRR_LAMBDA_GRID if lam_grid is None else lam_grid, dtype=float)
    if grid.size == 0:
        raise ValueError("empty lambda grid")
    med = median_distance(X)
    specs = [KernelSpec(f, bandwidth=med * sc) if f in ("gaussian", "laplacian")
             else KernelSpec(f) for f in families
             for sc in (bandwidth_scales if f in ("gaussian", "laplacian") else (1.0,))]
    grams = [gram(X, spec) for spec in specs]

    def score(in_bag, oob):
        out = []
        for K in grams:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                pred = spectral_path(K[np.ix_(in_bag, in_bag)], K[np.ix_(oob, in_bag)],
                                     y[in_bag], grid)
            out.append(((pred - y[oob]) ** 2).mean(axis=1))
        return np.concatenate(out)

    losses = oob_grid_search(len(y), n_bags, bag_rate, block_len, score, seed)
    k = int(np.argmin(losses))
    return specs[k // grid.size], float(grid[k % grid.size])

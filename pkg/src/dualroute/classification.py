"""Recession-probability models that decompose their log-odds (or, for
forests, their probability) over training observations."""
from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .kernel_methods import KernelSpec, cross_gram, gram
from .neural import NeuralModel, sigmoid
from .trees import ForestModel, rf_weights

log = logging.getLogger(__name__)

DEFAULT_CLASS_REL_LAMBDA_GRID = np.logspace(-6, 1, 15)


class ConvergenceWarning(UserWarning):
    pass


def _check_labels(y01):
    y01 = np.asarray(y01, dtype=float)
    if not np.isin(y01, (0.0, 1.0)).all():
        raise ValueError("labels must be 0 or 1")
    if y01.min() == y01.max():
        raise ValueError("labels contain a single class")
    return y01


def _logloss(z, y):
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


@dataclass
class DualLogisticModel:
    """Kernel logistic regression in dual form: logit P = K alpha + b."""

    alpha: np.ndarray
    intercept: float
    lam: float
    spec: KernelSpec | None = None
    X_train: np.ndarray | None = None
    trace: list = field(default_factory=list)
    grad_norm: float = np.nan
    converged: bool = False
    n_iter: int = 0

    def logodds(self, K_j):
        return np.asarray(K_j, dtype=float) @ self.alpha + self.intercept

    def proba(self, K_j):
        return sigmoid(self.logodds(K_j))

    def kernel_rows(self, X_j):
        if self.X_train is None or self.spec is None:
            raise ValueError("model was fitted from a Gram matrix; pass kernel rows instead")
        return cross_gram(np.atleast_2d(X_j), self.X_train, self.spec)

    def predict_proba(self, X_j):
        return self.proba(self.kernel_rows(X_j))

    def to_dict(self):
        return {"kind": "dual_logistic", "alpha": self.alpha.tolist(),
                "intercept": self.intercept, "lambda": self.lam,
                "spec": None if self.spec is None else self.spec.to_dict(),
                "X_train": None if self.X_train is None else self.X_train.tolist(),
                "grad_norm": self.grad_norm, "converged": self.converged, "n_iter": self.n_iter}

    @classmethod
    def from_dict(cls, d):
        return cls(alpha=np.asarray(d["alpha"], dtype=float), intercept=float(d["intercept"]),
                   lam=float(d["lambda"]),
                   spec=None if d.get("spec") is None else KernelSpec.from_dict(d["spec"]),
                   X_train=None if d.get("X_train") is None
                   else np.asarray(d["X_train"], dtype=float),
                   grad_norm=float(d.get("grad_norm", np.nan)),
                   converged=bool(d.get("converged", False)), n_iter=int(d.get("n_iter", 0)))


def dual_logistic_fit(K, y01, lam, max_iter=5000, lr=0.01, tol=1e-7, spec=None, X_train=None,
                      warn=True) -> DualLogisticModel:
    """Minimize mean log-loss of sigmoid(K alpha + b) + (lam/2) alpha'K alpha.

    Adam runs on the function-space gradient ((p - y)/N + lam alpha, mean(p - y)),
    which is the Euclidean gradient with the leading K factored out: it has
    the same zeros whenever K is nonsingular, and when K is singular it picks
    the representer solution alpha = (y - p)/(N lam).  Convergence is judged
    on the norm of that gradient.  On non-convergence the best iterate is
    returned with a warning.
    """
    K = np.asarray(K, dtype=float)
    y = _check_labels(y01)
    N = len(y)
    if K.shape != (N, N):
        raise ValueError(f"Gram matrix of shape {K.shape} for {N} labels")
    if lam < 0:
        raise ValueError("lambda must be >= 0")

    def objective(a, b):
        z = K @ a + b
        return _logloss(z, y) + 0.5 * lam * float(a @ K @ a), z

    alpha = np.zeros(N)
    rate = float(np.clip(y.mean(), 1e-12, 1 - 1e-12))
    b = float(np.log(rate / (1.0 - rate)))
    m = np.zeros(N + 1)
    v = np.zeros(N + 1)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    f, z = objective(alpha, b)
    best = (f, alpha.copy(), b)
    trace = [f]
    gnorm = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        r = (sigmoid(z) - y) / N
        g = np.concatenate([r + lam * alpha, [r.sum()]])
        gnorm = float(np.linalg.norm(g))
        if gnorm < tol:
            it -= 1
            break
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        upd = lr * (m / (1 - beta1 ** it)) / (np.sqrt(v / (1 - beta2 ** it)) + eps)
        alpha = alpha - upd[:N]
        b = b - upd[N]
        f, z = objective(alpha, b)
        trace.append(f)
        if f < best[0]:
            best = (f, alpha.copy(), b)
    converged = gnorm < tol
    if not converged:
        _, alpha, b = best
        z = K @ alpha + b
        r = (sigmoid(z) - y) / N
        gnorm = float(np.linalg.norm(np.concatenate([r + lam * alpha, [r.sum()]])))
        converged = gnorm < tol
        if not converged and warn:
            warnings.warn(f"dual logistic fit stopped after {max_iter} iterations with gradient "
                          f"norm {gnorm:.3g} (tol {tol:g})", ConvergenceWarning, stacklevel=2)
    return DualLogisticModel(alpha=alpha, intercept=float(b), lam=float(lam), spec=spec,
                             X_train=X_train, trace=trace, grad_norm=gnorm,
                             converged=converged, n_iter=it)


def kernel_logistic_fit(X, y01, spec: KernelSpec, lam, **kw) -> DualLogisticModel:
    X = np.asarray(X, dtype=float)
    spec = spec.resolved(X)
    return dual_logistic_fit(gram(X, spec), y01, lam, spec=spec, X_train=X, **kw)


# --------------------------------------------------------------------------
# contributions
# --------------------------------------------------------------------------

@dataclass
class ClassContributions:
    """Log-odds contributions for one test point.

    ``cumulative`` is P(y_j = 1 | first i observations) = sigmoid(b + partial
    sums); unlike the log-odds sum it depends on the training order.
    """

    c_logodds: np.ndarray
    baseline: float
    order: np.ndarray | None = None

    @property
    def logodds(self):
        return self.baseline + float(self.c_logodds.sum())

    @property
    def probability(self):
        return float(sigmoid(np.array([self.logodds]))[0])

    @property
    def cumulative(self):
        return sigmoid(self.baseline + np.cumsum(self.c_logodds))

    @property
    def marginal(self):
        """sigmoid(partial sum through i) - sigmoid(partial sum through i - 1)."""
        path = np.concatenate([sigmoid(np.array([self.baseline])), self.cumulative])
        return np.diff(path)

    def to_csv(self, path, dates=None):
        idx = np.arange(len(self.c_logodds)) if self.order is None else self.order
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "date", "c_logodds", "cumulative_p"])
            for k, (c, p) in enumerate(zip(self.c_logodds, self.cumulative)):
                d = "" if dates is None else str(dates[idx[k]])[:10]
                w.writerow([int(idx[k]), d, repr(float(c)), repr(float(p))])


def logodds_contributions(model: DualLogisticModel, K_j, order=None):
    """c_ji = K_ji alpha_i for each row of ``K_j``; ``order`` permutes the
    training index before the cumulative path is formed."""
    K_j = np.asarray(K_j, dtype=float)
    single = K_j.ndim == 1
    rows = np.atleast_2d(K_j)
    out = []
    for k in rows:
        c = k * model.alpha
        perm = None
        if order is not None:
            perm = np.asarray(order)
            c = c[perm]
        out.append(ClassContributions(c_logodds=c, baseline=model.intercept, order=perm))
    return out[0] if single else out


def rf_class_weights(forest: ForestModel, X_j):
    """Leaf-vote weights of a forest grown on 0/1 labels and the implied
    probability w_j . y."""
    y = forest.y_train
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("forest was not grown on 0/1 labels")
    W = rf_weights(forest, X_j)
    return W, W @ y


# --------------------------------------------------------------------------
# neural classifier through an auxiliary kernel logistic fit
# --------------------------------------------------------------------------

@dataclass
class NNClassReport:
    lambdas: list
    member_accuracy: list
    accuracy: float
    threshold: float = 0.95
    convention: str = "1 - mean |P_net - P_aux| on the test window"

    @property
    def warning(self):
        return not self.accuracy >= self.threshold

    def to_dict(self):
        return {"lambdas": self.lambdas, "member_accuracy": self.member_accuracy,
                "accuracy": self.accuracy, "threshold": self.threshold,
                "warning": self.warning, "convention": self.convention}


def _prob_agreement(p, q):
    return 1.0 - float(np.mean(np.abs(np.asarray(p) - np.asarray(q))))


def nn_class_contributions(model: NeuralModel, X_train, y01, X_test, lam_grid=None,
                           max_iter=5000, lr=0.01, tol=1e-7, threshold=0.95):
    """Contributions for a neural classifier from auxiliary dual logistic fits.

    Per member, a linear-kernel dual logistic model on its penultimate
    features is fitted over a lambda grid (relative to trace(K)/n) and the
    lambda whose test probabilities agree best with the member's is kept.
    Member contributions are embedded in the full training index (zero on
    rows the member did not train on) and averaged, as are the intercepts, so
    the ensemble log-odds (the mean member logit) decomposes exactly.

    Returns (list of ClassContributions, one per test point; report).
    """
    if model.task != "classification":
        raise ValueError("model is not a classifier")
    X_train = np.asarray(X_train, dtype=float)
    X_test = np.atleast_2d(np.asarray(X_test, dtype=float))
    y = np.asarray(y01, dtype=float)
    grid = np.asarray(DEFAULT_CLASS_REL_LAMBDA_GRID if lam_grid is None else lam_grid, dtype=float)
    if grid.size == 0 or (grid <= 0).any():
        raise ValueError("lambda grid must be non-empty and positive")
    N, J = len(y), X_test.shape[0]
    C = np.zeros((J, N))
    base = 0.0
    lams, accs, aux_logit = [], [], np.zeros(J)
    for mem in model.members:
        rows = mem.train_rows
        psi = mem.penultimate(X_train[rows])
        psi_t = mem.penultimate(X_test)
        K = psi @ psi.T
        K_t = psi_t @ psi.T
        scale = np.trace(K) / len(rows)
        p_net = sigmoid(mem.output(X_test))
        best = None
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            for lam in grid * (scale if scale > 0 else 1.0):
                fit = dual_logistic_fit(K, y[rows], lam, max_iter=max_iter, lr=lr, tol=tol)
                acc = _prob_agreement(p_net, fit.proba(K_t))
                if best is None or acc > best[0]:
                    best = (acc, fit)
        acc, fit = best
        C[:, rows] += K_t * fit.alpha
        base += fit.intercept
        aux_logit += fit.logodds(K_t)
        lams.append(float(fit.lam))
        accs.append(acc)
    B = model.B
    C /= B
    base /= B
    aux_logit /= B
    accuracy = _prob_agreement(model.predict_proba(X_test), sigmoid(aux_logit))
    report = NNClassReport(lambdas=lams, member_accuracy=accs, accuracy=accuracy,
                           threshold=threshold)
    if report.warning:
        log.warning("classifier replication accuracy %.4f below %.2f", accuracy, threshold)
    return [ClassContributions(c_logodds=C[j], baseline=base) for j in range(J)], report


def yield_curve_model(spread, y01, lam, **kw) -> DualLogisticModel:
    """Single-feature dual logistic model on the term spread (linear kernel)."""
    s = np.asarray(spread, dtype=float)
    if s.ndim == 2:
        if s.shape[1] != 1:
            raise ValueError("the yield-curve model takes a single feature")
        s = s[:, 0]
    X = s[:, None]
    return dual_logistic_fit(np.outer(s, s), y01, lam, spec=KernelSpec("linear"), X_train=X, **kw)

"""Feed-forward networks with a linear head, and their dual weights through an
auxiliary ridge regression on the last hidden layer."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .kernel_methods import krr_weights, spectral_path
from .resampling import spawn_seeds

log = logging.getLogger(__name__)

DEFAULT_REL_LAMBDA_GRID = np.logspace(-8, 2, 40)


class TrainingDivergedError(RuntimeError):
    pass


def relu(z):
    return np.maximum(z, 0.0)


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class Member:
    """One trained network.  ``layers`` are (W, b) pairs of the hidden stack;
    the head is linear without bias for regression (logit head with bias for
    classification)."""

    layers: list
    head: np.ndarray
    head_bias: float
    train_rows: np.ndarray
    val_rows: np.ndarray
    epochs: int = 0

    def penultimate(self, X):
        h = np.asarray(X, dtype=float)
        for W, b in self.layers:
            h = relu(h @ W + b)
        return h

    def output(self, X):
        return self.penultimate(X) @ self.head + self.head_bias

    def to_dict(self):
        return {"layers": [[W.tolist(), b.tolist()] for W, b in self.layers],
                "head": self.head.tolist(), "head_bias": self.head_bias,
                "train_rows": self.train_rows.tolist(), "val_rows": self.val_rows.tolist(),
                "epochs": self.epochs}

    @classmethod
    def from_dict(cls, d):
        return cls(layers=[(np.asarray(W, dtype=float), np.asarray(b, dtype=float))
                           for W, b in d["layers"]],
                   head=np.asarray(d["head"], dtype=float), head_bias=float(d["head_bias"]),
                   train_rows=np.asarray(d["train_rows"], dtype=np.int64),
                   val_rows=np.asarray(d["val_rows"], dtype=np.int64),
                   epochs=int(d.get("epochs", 0)))


@dataclass
class NeuralModel:
    members: list
    task: str = "regression"
    params: dict = field(default_factory=dict)

    @property
    def B(self):
        return len(self.members)

    def predict(self, X):
        """Ensemble mean output (log-odds for classification)."""
        return np.mean([m.output(X) for m in self.members], axis=0)

    def predict_proba(self, X):
        if self.task != "classification":
            raise ValueError("predict_proba needs a classification network")
        return sigmoid(self.predict(X))

    def to_dict(self):
        return {"kind": "nn", "task": self.task, "params": self.params,
                "members": [m.to_dict() for m in self.members]}

    @classmethod
    def from_dict(cls, d):
        return cls(members=[Member.from_dict(m) for m in d["members"]], task=d["task"],
                   params=dict(d["params"]))


class _Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _init_params(P, width, depth, rng, head_init="random"):
    params = []
    fan_in = P
    for _ in range(depth):
        params.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, width)))
        params.append(np.zeros(width))
        fan_in = width
    head = rng.normal(0.0, np.sqrt(1.0 / fan_in), size=fan_in)
    params.append(np.zeros(fan_in) if head_init == "zero" else head)
    params.append(np.zeros(1))
    return params


def _loss(out, y, task):
    if task == "regression":
        return float(np.mean((out - y) ** 2))
    # log-loss from logits, stable
    return float(np.mean(np.logaddexp(0.0, out) - y * out))


def _forward_backward(params, Xb, yb, depth, dropout, rng, task):
    acts, masks = [Xb], []
    h = Xb
    for layer in range(depth):
        W, b = params[2 * layer], params[2 * layer + 1]
        z = h @ W + b
        h = np.maximum(z, 0.0)
        if dropout > 0:
            keep = 1.0 - dropout
            mask = (rng.random(h.shape) < keep) / keep
            h = h * mask
        else:
            mask = None
        masks.append(mask)
        acts.append(h)
    head, bias = params[-2], params[-1]
    out = h @ head + (bias[0] if task == "classification" else 0.0)
    n = len(yb)
    if task == "regression":
        dout = 2.0 * (out - yb) / n
    else:
        dout = (sigmoid(out) - yb) / n
    grads = [None] * len(params)
    grads[-2] = h.T @ dout
    grads[-1] = np.array([dout.sum()]) if task == "classification" else np.zeros(1)
    dh = np.outer(dout, head)
    for layer in reversed(range(depth)):
        if masks[layer] is not None:
            dh = dh * masks[layer]
        dz = dh * (acts[layer + 1] > 0)
        grads[2 * layer] = acts[layer].T @ dz
        grads[2 * layer + 1] = dz.sum(axis=0)
        if layer:
            dh = dz @ params[2 * layer].T
    return grads


def _eval(params, X, depth, task):
    h = X
    for layer in range(depth):
        h = np.maximum(h @ params[2 * layer] + params[2 * layer + 1], 0.0)
    return h @ params[-2] + (params[-1][0] if task == "classification" else 0.0)


def _train_member(X, y, rows_train, rows_val, width, depth, epochs, lr, dropout, batch, tol,
                  patience, rng, task, restore_best=True, head_init="zero"):
    params = _init_params(X.shape[1], width, depth, rng, head_init)
    opt = _Adam(params, lr)
    best_loss, best_params, best_epoch, stale = np.inf, [p.copy() for p in params], 0, 0
    Xv, yv = X[rows_val], y[rows_val]
    for epoch in range(1, epochs + 1):
        order = rng.permutation(rows_train)
        for start in range(0, len(order), batch):
            idx = order[start:start + batch]
            grads = _forward_backward(params, X[idx], y[idx], depth, dropout, rng, task)
            opt.step(grads)
        if len(rows_val):
            val = _loss(_eval(params, Xv, depth, task), yv, task)
        else:
            val = _loss(_eval(params, X[rows_train], depth, task), y[rows_train], task)
        if not np.isfinite(val) or not all(np.isfinite(p).all() for p in params):
            raise TrainingDivergedError(f"non-finite loss at epoch {epoch}")
        if val < best_loss * (1.0 - tol):
            best_loss, best_params, best_epoch, stale = val, [p.copy() for p in params], epoch, 0
        else:
            stale += 1
            if stale >= patience:
                break
    if not restore_best:
        best_params, best_epoch = params, epoch
    layers = [(best_params[2 * k], best_params[2 * k + 1]) for k in range(depth)]
    return Member(layers=layers, head=best_params[-2],
                  head_bias=float(best_params[-1][0]) if task == "classification" else 0.0,
                  train_rows=np.sort(rows_train), val_rows=np.sort(rows_val), epochs=best_epoch)


def nn_fit(X, y, width=400, depth=3, epochs=100, lr=0.001, dropout=0.2, batch=32, B=30,
           early_stop_frac=0.15, tol=0.01, patience=5, seed=0, task="regression",
           restore_best=True, head_init="zero"):
    """Train a bootstrap ensemble of ``B`` ReLU networks with Adam.

    Each member holds out a random ``early_stop_frac`` of rows for early
    stopping: training stops once the held-out loss has not improved by a
    relative ``tol`` for ``patience`` epochs, and the best epoch's parameters
    are kept (``restore_best=False`` keeps the last epoch instead).  Held-out
    rows never enter that member's gradient steps.

    Hidden layers get He-normal initial weights.  The output layer starts at
    zero by default, so every update it receives is a combination of
    training-row features; a random starting head would leave a component
    that no weighting of training targets can express, and early stopping
    does not wash it out.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    N = len(y)
    if N < batch:
        raise ValueError(f"{N} rows is fewer than one batch of {batch}")
    if task not in ("regression", "classification"):
        raise ValueError(f"unknown task {task!r}")
    members = []
    for s in spawn_seeds(seed, B):
        for attempt in range(2):
            rng = np.random.default_rng(s + attempt)
            n_val = int(round(early_stop_frac * N))
            perm = rng.permutation(N)
            rows_val, rows_train = perm[:n_val], perm[n_val:]
            try:
                members.append(_train_member(X, y, rows_train, rows_val, width, depth, epochs,
                                             lr, dropout, batch, tol, patience, rng, task,
                                             restore_best, head_init))
                break
            except TrainingDivergedError:
                if attempt:
                    raise
                log.warning("member diverged; reseeding once")
    params = dict(width=width, depth=depth, epochs=epochs, lr=lr, dropout=dropout, batch=batch,
                  B=B, early_stop_frac=early_stop_frac, tol=tol, patience=patience, seed=seed,
                  restore_best=restore_best, head_init=head_init)
    return NeuralModel(members=members, task=task, params=params)


def extract_penultimate(model, X, member=0):
    """Last-hidden-layer activations (inference mode: no dropout)."""
    m = model.members[member] if isinstance(model, NeuralModel) else model
    return m.penultimate(X)


def refit_head(model: NeuralModel, X, y):
    """Replace every regression head by the exact least-squares fit on the
    member's own training rows (minimum-norm when underdetermined)."""
    for m in model.members:
        psi = m.penultimate(X[m.train_rows])
        m.head = np.linalg.lstsq(psi, y[m.train_rows], rcond=None)[0]
    return model


# --------------------------------------------------------------------------
# dual weights
# --------------------------------------------------------------------------

@dataclass
class ReplicationReport:
    lambdas: list
    member_accuracy: list
    accuracy: float
    threshold: float = 0.99
    scalings: list = field(default_factory=list)
    convention: str = "R2 of ridge-replicated vs network predictions on the test window"

    @property
    def warning(self):
        return not self.accuracy >= self.threshold

    def to_dict(self):
        return {"lambdas": self.lambdas, "member_accuracy": self.member_accuracy,
                "accuracy": self.accuracy, "threshold": self.threshold,
                "warning": self.warning, "scalings": self.scalings,
                "convention": self.convention}


def replication_accuracy(target, replica):
    """1 - ||target - replica||^2 / ||target - mean(target)||^2."""
    target = np.asarray(target, dtype=float)
    replica = np.asarray(replica, dtype=float)
    denom = float(((target - target.mean()) ** 2).sum())
    num = float(((target - replica) ** 2).sum())
    if denom == 0:
        return 1.0 if num == 0 else 0.0
    return 1.0 - num / denom


def _feature_scale(psi, scaling):
    if scaling == "raw":
        return np.ones(psi.shape[1])
    d = np.sqrt((psi ** 2).mean(axis=0))
    return np.where(d > 0, d, 1.0)


def _member_ridge(member, X_train, y_train, X_test, rel_grid, scaling="auto"):
    """Best auxiliary ridge for one member: (lambda, scaling, weights, target).

    ``scaling`` "raw" uses the penultimate features as they are; "norm"
    divides each feature by its root mean square on the training rows, which
    turns the quadratic penalty that dropout places on the head into a plain
    ridge penalty; "auto" keeps whichever replicates the member better.
    """
    rows = member.train_rows
    psi_raw = member.penultimate(X_train[rows])
    psi_t_raw = member.penultimate(X_test)
    target = psi_t_raw @ member.head
    modes = ("raw", "norm") if scaling == "auto" else (scaling,)
    candidates = []
    for mode in modes:
        d = _feature_scale(psi_raw, mode)
        psi, psi_t = psi_raw / d, psi_t_raw / d
        K = psi @ psi.T
        K_t = psi_t @ psi.T
        scale = np.trace(K) / len(rows)
        lams = np.asarray(rel_grid, dtype=float) * (scale if scale > 0 else 1.0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            path = spectral_path(K, K_t, y_train[rows], lams)
        sse = ((path - target) ** 2).sum(axis=1)
        for k in range(len(lams)):
            if np.isfinite(sse[k]):
                candidates.append((sse[k], len(candidates), lams[k], mode, K, K_t))
    for _, _, lam, mode, K, K_t in sorted(candidates, key=lambda c: (c[0], c[1])):
        try:
            w = krr_weights(K_t, K, lam)
        except np.linalg.LinAlgError:
            continue
        return float(lam), mode, w, target
    raise np.linalg.LinAlgError("every lambda in the grid gave a singular system")


def nn_dual_weights(model: NeuralModel, X_train, y_train, X_test, lam_grid=None,
                    threshold=0.99, scaling="auto"):
    """Ensemble data-portfolio weights of a regression network.

    For each member, lambda is chosen on the grid (relative to
    trace(PsiPsi')/n) to make the auxiliary ridge on the member's own
    penultimate features reproduce the member's test-window predictions as
    closely as possible.  Member weights are embedded in the full training
    index (zero on rows the member never trained on) and averaged.

    Returns ``(W, report)`` with ``W`` of shape J x N.
    """
    if model.task != "regression":
        raise ValueError("use classification.nn_class_contributions for classifiers")
    X_train = np.asarray(X_train, dtype=float)
    y_train = np.asarray(y_train, dtype=float)
    X_test = np.atleast_2d(np.asarray(X_test, dtype=float))
    grid = DEFAULT_REL_LAMBDA_GRID if lam_grid is None else np.asarray(lam_grid, dtype=float)
    if grid.size == 0 or (grid <= 0).any():
        raise ValueError("lambda grid must be non-empty and positive")
    N, J = len(y_train), X_test.shape[0]
    W = np.zeros((J, N))
    lams, modes, accs = [], [], []
    for m in model.members:
        lam, mode, w, target = _member_ridge(m, X_train, y_train, X_test, grid, scaling)
        W[:, m.train_rows] += w
        lams.append(lam)
        modes.append(mode)
        accs.append(replication_accuracy(target, w @ y_train[m.train_rows]))
    W /= model.B
    acc = replication_accuracy(model.predict(X_test), W @ y_train)
    report = ReplicationReport(lambdas=lams, member_accuracy=accs, accuracy=acc,
                               threshold=threshold, scalings=modes)
    if report.warning:
        log.warning("network replication accuracy %.4f below %.2f", acc, threshold)
    return W, report

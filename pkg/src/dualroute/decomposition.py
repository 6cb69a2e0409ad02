"""Decomposition containers, portfolio statistics of the weights and the
time-series views used to plot them."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import pandas as pd

# efficiency tolerance per model family; None means "judged by replication"
TOLERANCES = {"ridge": 1e-10, "ols": 1e-10, "faar": 1e-10, "ar": 1e-10, "krr": 1e-10,
              "rf": 1e-12, "gbt": 1e-8, "nn": None, "logistic": 1e-8}


class EfficiencyError(AssertionError):
    pass


def _date_str(d):
    return pd.Timestamp(d).strftime("%Y-%m-%d")


def _f(x):
    return repr(float(x))


@dataclass
class DualDecomposition:
    """Weights and contributions of one prediction.

    prediction = baseline + sum(contributions); the baseline is 0 for every
    regression family and the intercept for log-odds decompositions.
    """

    test_date: object
    weights: np.ndarray
    y_train: np.ndarray
    prediction: float
    train_dates: object
    model: str = ""
    baseline: float = 0.0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.y_train = np.asarray(self.y_train, dtype=float)
        if self.weights.shape != self.y_train.shape:
            raise ValueError("weights and training targets differ in length")
        if len(self.train_dates) != len(self.weights):
            raise ValueError("training dates and weights differ in length")

    @property
    def contributions(self):
        return self.weights * self.y_train

    @property
    def N(self):
        return len(self.weights)

    def efficiency_gap(self):
        return abs(self.baseline + float(self.contributions.sum()) - self.prediction)

    def check_efficiency(self, tol=None):
        if tol is None:
            tol = TOLERANCES.get(self.model.split(":")[0])
        if tol is None:
            return True
        gap = self.efficiency_gap()
        if not gap <= tol:
            raise EfficiencyError(f"{self.model} at {_date_str(self.test_date)}: contributions "
                                  f"miss the prediction by {gap:.3g} (tolerance {tol:g})")
        return True

    def to_dict(self, stats=None):
        d = {"model": self.model, "test_date": _date_str(self.test_date),
             "prediction": float(self.prediction), "baseline": float(self.baseline),
             "train_dates": [_date_str(t) for t in self.train_dates],
             "weights": self.weights.tolist(), "y_train": self.y_train.tolist(),
             "contributions": self.contributions.tolist()}
        if stats is not None:
            d["stats"] = stats
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(test_date=pd.Timestamp(d["test_date"]), weights=d["weights"],
                   y_train=d["y_train"], prediction=float(d["prediction"]),
                   train_dates=pd.DatetimeIndex(d["train_dates"]), model=d.get("model", ""),
                   baseline=float(d.get("baseline", 0.0)))


@dataclass
class WeightPanel:
    """J x N weights over an ordered test window sharing one training sample."""

    W: np.ndarray
    test_dates: object
    train_dates: object
    y_train: np.ndarray
    predictions: np.ndarray | None = None
    model: str = ""

    def __post_init__(self):
        self.W = np.atleast_2d(np.asarray(self.W, dtype=float))
        self.y_train = np.asarray(self.y_train, dtype=float)
        J, N = self.W.shape
        if len(self.test_dates) != J or len(self.train_dates) != N or len(self.y_train) != N:
            raise ValueError("panel dimensions disagree with its date axes")
        td = pd.DatetimeIndex(self.test_dates)
        if not td.is_monotonic_increasing:
            raise ValueError("test dates must be ordered")
        if self.predictions is None:
            self.predictions = self.W @ self.y_train
        self.predictions = np.asarray(self.predictions, dtype=float)

    @property
    def J(self):
        return self.W.shape[0]

    @property
    def N(self):
        return self.W.shape[1]

    def row(self, j) -> DualDecomposition:
        return DualDecomposition(test_date=self.test_dates[j], weights=self.W[j],
                                 y_train=self.y_train, prediction=float(self.predictions[j]),
                                 train_dates=self.train_dates, model=self.model)

    def __iter__(self):
        return (self.row(j) for j in range(self.J))

    @classmethod
    def from_decompositions(cls, decomps):
        decomps = list(decomps)
        if not decomps:
            raise ValueError("no decompositions")
        first = decomps[0]
        for d in decomps[1:]:
            if not np.array_equal(d.y_train, first.y_train):
                raise ValueError("decompositions use different training samples")
        return cls(W=np.vstack([d.weights for d in decomps]),
                   test_dates=pd.DatetimeIndex([d.test_date for d in decomps]),
                   train_dates=first.train_dates, y_train=first.y_train,
                   predictions=np.array([d.prediction for d in decomps]), model=first.model)

    def to_long_csv(self, path):
        write_long_csv(path, list(self))


# --------------------------------------------------------------------------
# toolbox
# --------------------------------------------------------------------------

def _top_count(Q, N):
    # exact floor of Q*N/100 for decimal Q (0.29 * 100 is 28.999... in floats)
    return math.floor(Fraction(Q).limit_denominator(10 ** 9) * N / 100)


def forecast_concentration(w, Q=5):
    """Share of total absolute weight held by the top floor(Q N / 100)
    weights; ties at the boundary go to the earlier training row."""
    w = np.asarray(w, dtype=float)
    if not 1 <= Q <= 100:
        raise ValueError("Q must lie in [1, 100]")
    a = np.abs(w)
    total = a.sum()
    if total == 0:
        raise ValueError("degenerate weight vector")
    k = _top_count(Q, len(w))
    if k == 0:
        return 0.0
    order = np.argsort(-a, kind="stable")
    return float(a[order[:k]].sum() / total)


def forecast_short_position(w):
    w = np.asarray(w, dtype=float)
    return float(w[w < 0].sum())


def forecast_leverage(w):
    return float(np.sum(np.asarray(w, dtype=float)))


def _panel_matrix(panel):
    W = panel.W if isinstance(panel, WeightPanel) else np.atleast_2d(np.asarray(panel, float))
    if W.shape[0] < 2:
        raise ValueError("turnover needs at least two test dates")
    return W


def forecast_turnover(panel):
    """sum over j >= 2 and i of |w_ji - w_(j-1)i|."""
    W = _panel_matrix(panel)
    return float(np.abs(np.diff(W, axis=0)).sum())


def forecast_turnover_normalized(panel):
    """Turnover after scaling every row to unit gross exposure sum |w|, so
    models that lever up or down are compared on one footing.  Net leverage
    sum w is not used as the scale: it can sit near zero for ridge-type
    weights.  All-zero rows are left as they are."""
    W = _panel_matrix(panel)
    gross = np.abs(W).sum(axis=1, keepdims=True)
    scaled = W / np.where(gross > 0, gross, 1.0)
    return float(np.abs(np.diff(scaled, axis=0)).sum())


@dataclass
class HistoricalImportance:
    per_row: np.ndarray
    labels: list
    totals: np.ndarray
    bounds: list = field(default_factory=list)

    def to_dict(self):
        return {"per_row": self.per_row.tolist(),
                "buckets": [{"label": lab, "start": _date_str(a), "end": _date_str(b),
                             "total": float(t)}
                            for lab, (a, b), t in zip(self.labels, self.bounds, self.totals)]}


def year_buckets(train_dates, years=5):
    """Consecutive [start, end) intervals of ``years`` years covering the
    training dates, aligned on multiples of ``years``."""
    td = pd.DatetimeIndex(train_dates)
    first = (td.min().year // years) * years
    last = td.max().year
    out = []
    y = first
    while y <= last:
        out.append((pd.Timestamp(year=y, month=1, day=1),
                    pd.Timestamp(year=y + years, month=1, day=1)))
        y += years
    return out


def overall_historical_importance(panel: WeightPanel, buckets=None, years=5):
    """OHI(i) = sum_j |w_ji|, totalled within half-open date buckets."""
    per_row = np.abs(panel.W).sum(axis=0)
    td = pd.DatetimeIndex(panel.train_dates)
    if buckets is None:
        buckets = year_buckets(td, years)
    bounds = [(pd.Timestamp(a), pd.Timestamp(b)) for a, b in buckets]
    for k, (a, b) in enumerate(bounds):
        if not a < b:
            raise ValueError(f"empty bucket {_date_str(a)} to {_date_str(b)}")
        for a2, b2 in bounds[k + 1:]:
            if a < b2 and a2 < b:
                raise ValueError(f"buckets overlap: {_date_str(a)}-{_date_str(b)} and "
                                 f"{_date_str(a2)}-{_date_str(b2)}")
    member = np.zeros((len(bounds), len(td)), dtype=bool)
    for k, (a, b) in enumerate(bounds):
        member[k] = (td >= a) & (td < b)
    uncovered = ~member.any(axis=0)
    if uncovered.any():
        raise ValueError(f"training date {_date_str(td[np.argmax(uncovered)])} falls in no bucket")
    totals = member.astype(float) @ per_row
    labels = [f"{a.year}-{b.year - 1}" if b.month == 1 and b.day == 1 else
              f"{_date_str(a)}/{_date_str(b)}" for a, b in bounds]
    return HistoricalImportance(per_row=per_row, labels=labels, totals=totals, bounds=bounds)


@dataclass
class ForecastStats:
    """Per test date concentration/short/leverage, plus panel turnover."""

    test_dates: object
    concentration: np.ndarray
    short_position: np.ndarray
    leverage: np.ndarray
    turnover: float
    turnover_normalized: float
    Q: float = 5
    model: str = ""
    ohi: HistoricalImportance | None = None

    def rows(self):
        for j, d in enumerate(self.test_dates):
            yield {"model": self.model, "test_date": _date_str(d),
                   "concentration": float(self.concentration[j]),
                   "short_position": float(self.short_position[j]),
                   "leverage": float(self.leverage[j])}

    def to_dict(self):
        d = {"model": self.model, "Q": self.Q, "rows": list(self.rows()),
             "turnover": self.turnover, "turnover_normalized": self.turnover_normalized}
        if self.ohi is not None:
            d["ohi"] = self.ohi.to_dict()
        return d


def forecast_stats(panel: WeightPanel, Q=5, buckets=None, years=5) -> ForecastStats:
    turn = forecast_turnover(panel) if panel.J >= 2 else float("nan")
    turn_n = forecast_turnover_normalized(panel) if panel.J >= 2 else float("nan")
    return ForecastStats(
        test_dates=panel.test_dates,
        concentration=np.array([forecast_concentration(w, Q) for w in panel.W]),
        short_position=np.array([forecast_short_position(w) for w in panel.W]),
        leverage=np.array([forecast_leverage(w) for w in panel.W]),
        turnover=turn, turnover_normalized=turn_n, Q=Q, model=panel.model,
        ohi=overall_historical_importance(panel, buckets, years))


# --------------------------------------------------------------------------
# views
# --------------------------------------------------------------------------

def cumulative_contribution_view(decomp, baseline=None):
    """s_i = baseline + sum_{k <= i} (c_k - baseline / N).

    The path starts from the unconditional mean (of the training targets by
    default) and, once every observation has been added, lands on the
    prediction.  Subtracting baseline / N per step plots deviations from the
    equal-weight portfolio instead of a mechanical trend.
    """
    if isinstance(decomp, DualDecomposition):
        c = decomp.contributions
        if baseline is None:
            baseline = float(decomp.y_train.mean())
        offset = decomp.baseline
    else:
        c = np.asarray(decomp, dtype=float)
        baseline = 0.0 if baseline is None else baseline
        offset = 0.0
    N = len(c)
    return offset + baseline + np.cumsum(c - baseline / N)


def moving_average_view(series, window=4, scale="none"):
    """Trailing moving average (NaN until the first full window); with
    ``scale="mean_abs"`` the result is divided by the mean absolute value of
    the input."""
    x = np.asarray(series, dtype=float)
    if window < 1:
        raise ValueError("window must be >= 1")
    if window > len(x):
        raise ValueError(f"window {window} exceeds series length {len(x)}")
    out = np.full(len(x), np.nan)
    c = np.concatenate([[0.0], np.cumsum(x)])
    out[window - 1:] = (c[window:] - c[:-window]) / window
    if window == 1:
        out = x.copy()
    if scale == "mean_abs":
        m = np.abs(x).mean()
        if m > 0:
            out = out / m
    elif scale != "none":
        raise ValueError(f"unknown scale {scale!r}")
    return out


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------

def write_json(path, decomps, stats=None):
    payload = {"schema": "dualroute.decomposition/1",
               "decompositions": [d.to_dict() for d in decomps]}
    if stats is not None:
        payload["stats"] = stats.to_dict()
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)


def read_json(path):
    with open(path) as fh:
        payload = json.load(fh)
    return [DualDecomposition.from_dict(d) for d in payload["decompositions"]]


def write_long_csv(path, decomps):
    """One line per (test date, training date): weight and contribution."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "test_date", "train_date", "weight", "y", "contribution"])
        for d in decomps:
            td = _date_str(d.test_date)
            for t, wi, yi, ci in zip(d.train_dates, d.weights, d.y_train, d.contributions):
                w.writerow([d.model, td, _date_str(t), _f(wi), _f(yi), _f(ci)])

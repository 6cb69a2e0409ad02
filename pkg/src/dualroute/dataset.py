"""FRED-style panel ingestion, stationarity transforms and supervised design.

Layout follows the FRED-MD/QD CSV files: a header row whose first cell names
the date column, one row of integer transformation codes (``tcode``), then
one row per period.
"""
from __future__ import annotations

import io
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

TCODES = (1, 2, 3, 4, 5, 6, 7)
# leading observations consumed by each code
TCODE_LEAD = {1: 0, 2: 1, 3: 2, 4: 0, 5: 1, 6: 2, 7: 2}


class DataError(ValueError):
    """Malformed or unusable input data."""


@dataclass(frozen=True)
class RawPanel:
    dates: pd.DatetimeIndex
    series: pd.DataFrame
    tcodes: dict

    def __post_init__(self):
        if len(self.series) != len(self.dates):
            raise DataError("series and date index differ in length")
        for name in self.series.columns:
            code = self.tcodes.get(name)
            if code not in TCODES:
                raise DataError(f"unknown transformation code {code!r} for {name}")

    @property
    def names(self):
        return list(self.series.columns)

    def transformed(self) -> pd.DataFrame:
        out = {
            name: apply_tcode(self.series[name].to_numpy(dtype=float), self.tcodes[name])
            for name in self.series.columns
        }
        return pd.DataFrame(out, index=self.dates)

    def to_csv(self, path, tcode_label="Transform:"):
        """Write the panel back in FRED layout (header, tcode row, data)."""
        buf = io.StringIO()
        names = self.names
        buf.write(",".join(["sasdate"] + names) + "\n")
        buf.write(",".join([tcode_label] + [str(self.tcodes[n]) for n in names]) + "\n")
        values = self.series.to_numpy(dtype=float)
        for date, row in zip(self.dates, values):
            cells = ["" if np.isnan(v) else repr(float(v)) for v in row]
            buf.write(",".join([f"{date.month}/{date.day}/{date.year}"] + cells) + "\n")
        Path(path).write_text(buf.getvalue())


@dataclass(frozen=True)
class StandardizationStats:
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    y_std: float
    kept: list
    dropped: list = field(default_factory=list)
    ddof: int = 1

    def transform_X(self, X):
        return (np.asarray(X)[:, self._kept_idx] - self.x_mean) / self.x_std

    def transform_y(self, y):
        return (np.asarray(y) - self.y_mean) / self.y_std

    def inverse_y(self, y_std_units):
        return np.asarray(y_std_units) * self.y_std + self.y_mean

    def inverse_X(self, Z):
        return np.asarray(Z) * self.x_std + self.x_mean

    @property
    def _kept_idx(self):
        return np.asarray(self.kept, dtype=np.int64)

    def to_dict(self):
        return {
            "x_mean": self.x_mean.tolist(),
            "x_std": self.x_std.tolist(),
            "y_mean": self.y_mean,
            "y_std": self.y_std,
            "kept": list(map(int, self.kept)),
            "dropped": list(self.dropped),
            "ddof": self.ddof,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            x_mean=np.asarray(d["x_mean"], dtype=float),
            x_std=np.asarray(d["x_std"], dtype=float),
            y_mean=float(d["y_mean"]),
            y_std=float(d["y_std"]),
            kept=list(d["kept"]),
            dropped=list(d["dropped"]),
            ddof=int(d.get("ddof", 1)),
        )


@dataclass(frozen=True)
class TimeSeriesDataset:
    """Aligned supervised design: row t of ``X`` is known at ``dates[t]`` and
    ``y[t]`` is the target ``horizon`` periods later."""

    dates: pd.DatetimeIndex
    X: np.ndarray
    y: np.ndarray
    feature_names: list
    horizon: int
    frequency: str = "quarterly"
    target: str = ""
    lags: int = 1
    target_dates: pd.DatetimeIndex | None = None
    first_lag: int = 0

    def __post_init__(self):
        if self.X.ndim != 2 or self.X.shape[0] != self.y.shape[0]:
            raise DataError("X and y are not aligned")
        if self.X.shape[1] != len(self.feature_names):
            raise DataError("feature_names does not match X")
        if not (np.isfinite(self.X).all() and np.isfinite(self.y).all()):
            raise DataError("dataset contains missing values")

    @property
    def N(self):
        return self.X.shape[0]

    @property
    def P(self):
        return self.X.shape[1]

    def rows(self, idx) -> "TimeSeriesDataset":
        idx = np.asarray(idx)
        return TimeSeriesDataset(
            dates=self.dates[idx],
            X=self.X[idx],
            y=self.y[idx],
            feature_names=list(self.feature_names),
            horizon=self.horizon,
            frequency=self.frequency,
            target=self.target,
            lags=self.lags,
            target_dates=None if self.target_dates is None else self.target_dates[idx],
            first_lag=self.first_lag,
        )

    def split(self, train_end) -> tuple["TimeSeriesDataset", "TimeSeriesDataset"]:
        """Split at ``train_end`` (inclusive) on the forecast-origin dates.

        Training rows whose target is realized after ``train_end`` are
        dropped too, so the training sample never peeks past the split.
        """
        train_end = pd.Timestamp(train_end)
        origin_ok = self.dates <= train_end
        tdates = self.target_dates if self.target_dates is not None else self.dates
        train = np.flatnonzero(origin_ok & (tdates <= train_end))
        test = np.flatnonzero(~origin_ok)
        if train.size < 2:
            raise DataError(f"fewer than 2 training rows end by {train_end.date()}")
        return self.rows(train), self.rows(test)

    def select(self, names) -> "TimeSeriesDataset":
        """Dataset restricted to the named feature columns, in that order."""
        missing = [n for n in names if n not in self.feature_names]
        if missing:
            raise DataError(f"features not in dataset: {missing}")
        idx = [self.feature_names.index(n) for n in names]
        return replace(self, X=self.X[:, idx], feature_names=list(names))

    def lag_range(self):
        return range(self.first_lag, self.first_lag + self.lags)

    def columns_for(self, variable, lags=None):
        """Column indices of ``variable``'s lag features, most recent first."""
        lags = self.lag_range() if lags is None else lags
        out = []
        for k in lags:
            name = f"{variable}_lag{k}"
            if name not in self.feature_names:
                raise DataError(f"feature {name} not in dataset")
            out.append(self.feature_names.index(name))
        return out

    def variables(self):
        seen = []
        for name in self.feature_names:
            if "_lag" in name:
                base = name.rsplit("_lag", 1)[0]
                if base not in seen:
                    seen.append(base)
        return seen

    def to_dict(self):
        return {
            "dates": [d.strftime("%Y-%m-%d") for d in self.dates],
            "target_dates": None
            if self.target_dates is None
            else [d.strftime("%Y-%m-%d") for d in self.target_dates],
            "feature_names": list(self.feature_names),
            "X": self.X.tolist(),
            "y": self.y.tolist(),
            "horizon": self.horizon,
            "frequency": self.frequency,
            "target": self.target,
            "lags": self.lags,
            "first_lag": self.first_lag,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            dates=pd.DatetimeIndex(pd.to_datetime(d["dates"])),
            X=np.asarray(d["X"], dtype=float).reshape(len(d["dates"]), len(d["feature_names"])),
            y=np.asarray(d["y"], dtype=float),
            feature_names=list(d["feature_names"]),
            horizon=int(d["horizon"]),
            frequency=d.get("frequency", "quarterly"),
            target=d.get("target", ""),
            lags=int(d.get("lags", 1)),
            first_lag=int(d.get("first_lag", 0)),
            target_dates=None
            if d.get("target_dates") is None
            else pd.DatetimeIndex(pd.to_datetime(d["target_dates"])),
        )

    def to_json(self, path):
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def from_json(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


# --------------------------------------------------------------------------
# ingestion
# --------------------------------------------------------------------------

def load_fred_csv(path_or_url, tcode_row=1) -> RawPanel:
    """Read a FRED-MD/QD style CSV.

    ``tcode_row`` is the 0-based line index of the transformation-code row
    (line 0 is the header), 1 for the FRED-MD layout.  Any other rows between
    the header and the first date row (e.g. FRED-QD's factor row) are skipped.
    """
    try:
        frame = pd.read_csv(path_or_url, header=0, dtype=str, skip_blank_lines=True,
                            keep_default_na=False)
    except pd.errors.ParserError as exc:
        raise DataError(f"ragged or unparsable CSV: {exc}") from exc
    frame = frame.loc[~(frame.apply(lambda r: all(c.strip() == "" for c in r), axis=1))]
    if frame.shape[1] < 2:
        raise DataError("expected a date column and at least one series")
    if frame.isna().any().any():
        raise DataError("ragged rows")
    pos = tcode_row - 1
    if pos < 0 or pos >= len(frame):
        raise DataError(f"tcode row {tcode_row} outside the file")
    names = [c.strip() for c in frame.columns[1:]]
    tcodes = {}
    for name, cell in zip(names, frame.iloc[pos, 1:]):
        try:
            value = float(cell)
        except ValueError:
            raise DataError(f"non-integer tcode {cell!r} for {name}") from None
        if not value.is_integer():
            raise DataError(f"non-integer tcode {cell!r} for {name}")
        if int(value) not in TCODES:
            raise DataError(f"unknown transformation code {int(value)} for {name}")
        tcodes[name] = int(value)

    body = frame.iloc[pos + 1:]
    raw_dates = body.iloc[:, 0].str.strip()
    dates = pd.to_datetime(raw_dates, errors="coerce", format="mixed")
    if dates.isna().any():
        bad = raw_dates[dates.isna()].iloc[0]
        raise DataError(f"malformed date {bad!r}")
    values = body.iloc[:, 1:].apply(_parse_column)
    values.columns = names
    values.index = pd.DatetimeIndex(dates.to_numpy())
    return RawPanel(dates=pd.DatetimeIndex(dates.to_numpy()), series=values.astype(float),
                    tcodes=tcodes)


def _parse_column(col):
    # float() round-trips repr output exactly; pandas' fast parser may not
    out = np.empty(len(col))
    for k, cell in enumerate(col.str.strip()):
        try:
            out[k] = float(cell) if cell else np.nan
        except ValueError:
            out[k] = np.nan
    return pd.Series(out, index=col.index)


# --------------------------------------------------------------------------
# transformations
# --------------------------------------------------------------------------

def apply_tcode(series, code):
    """FRED transformation ``code`` applied to a raw series.

    1 level, 2 first difference, 3 second difference, 4 log, 5 log first
    difference, 6 log second difference, 7 first difference of the percent
    change.  Output has the input's length; entries consumed by differencing
    are NaN.
    """
    x = np.asarray(series, dtype=float)
    if code not in TCODES:
        raise DataError(f"unknown transformation code {code!r}")
    if code in (4, 5, 6):
        finite = x[np.isfinite(x)]
        if (finite <= 0).any():
            raise DataError(f"non-positive value under log transformation code {code}")
        with np.errstate(invalid="ignore"):
            x = np.log(x)
    if code in (1, 4):
        return x.copy()
    if code in (2, 5):
        return _diff(x)
    if code in (3, 6):
        return _diff(_diff(x))
    with np.errstate(invalid="ignore", divide="ignore"):
        growth = np.full_like(x, np.nan)
        growth[1:] = x[1:] / x[:-1] - 1.0
    return _diff(growth)


def _diff(x):
    out = np.full_like(x, np.nan)
    out[1:] = x[1:] - x[:-1]
    return out


def trailing_mean(x, m):
    """Mean of the last ``m`` values at each t; NaN for the first m-1 entries
    and wherever the window touches a missing value."""
    x = np.asarray(x, dtype=float)
    out = np.full_like(x, np.nan)
    if m > len(x):
        return out
    win = np.lib.stride_tricks.sliding_window_view(x, m)
    out[m - 1:] = win.mean(axis=1)
    return out


def _check_interior(name, x):
    ok = np.isfinite(x)
    if not ok.any():
        raise DataError(f"series {name} has no observations")
    first = np.argmax(ok)
    last = len(ok) - 1 - np.argmax(ok[::-1])
    if not ok[first:last + 1].all():
        raise DataError(f"series {name} has interior missing values")


def build_supervised(panel: RawPanel, target, h=1, lags=4, marx_orders=(), variables=None,
                     frequency="quarterly", first_lag=0) -> TimeSeriesDataset:
    """Lag/MARX design matrix predicting ``target`` ``h`` periods ahead.

    Row t holds, for every variable, ``lags`` lags of the transformed series
    starting at ``first_lag`` (the default 0 gives the values dated t, t-1,
    ...; 1 starts at t-1) and its trailing moving averages of each order
    in ``marx_orders``; ``y[t]`` is the transformed target at t+h.  Rows with
    any missing entry are dropped.
    """
    if lags < 1:
        raise DataError("lags must be >= 1")
    if first_lag < 0:
        raise DataError("first_lag must be >= 0")
    if h < 1:
        raise DataError("horizon must be >= 1")
    if target not in panel.series.columns:
        raise DataError(f"target {target!r} not in panel")
    tf = panel.transformed()
    variables = list(tf.columns) if variables is None else list(variables)
    if target not in variables:
        variables = [target] + variables
    T = len(tf)
    cols, names = [], []
    for name in variables:
        x = tf[name].to_numpy()
        _check_interior(name, x)
        for k in range(first_lag, first_lag + lags):
            shifted = np.full(T, np.nan)
            shifted[k:] = x[:T - k]
            cols.append(shifted)
            names.append(f"{name}_lag{k}")
        for m in marx_orders:
            cols.append(trailing_mean(x, int(m)))
            names.append(f"{name}_ma{int(m)}")
    X = np.column_stack(cols)
    tgt = tf[target].to_numpy()
    y = np.full(T, np.nan)
    y[:T - h] = tgt[h:]
    target_dates = np.full(T, np.datetime64("NaT"), dtype="datetime64[ns]")
    target_dates[:T - h] = tf.index.to_numpy()[h:]
    ok = np.isfinite(X).all(axis=1) & np.isfinite(y)
    idx = np.flatnonzero(ok)
    if idx.size < 2:
        raise DataError(f"only {idx.size} usable rows after alignment")
    return TimeSeriesDataset(
        dates=tf.index[idx],
        X=X[idx],
        y=y[idx],
        feature_names=names,
        horizon=h,
        frequency=frequency,
        target=target,
        lags=lags,
        target_dates=pd.DatetimeIndex(target_dates[idx]),
        first_lag=first_lag,
    )


def design_for_origins(panel: RawPanel, ds: TimeSeriesDataset, marx_orders=()):
    """Feature rows for every date with complete features, target or not.

    Used to forecast past the last realized target.
    """
    tf = panel.transformed()
    T = len(tf)
    cols = []
    for name in ds.feature_names:
        base, _, tail = name.rpartition("_")
        x = tf[base].to_numpy()
        if tail.startswith("lag"):
            k = int(tail[3:])
            shifted = np.full(T, np.nan)
            shifted[k:] = x[:T - k]
            cols.append(shifted)
        else:
            cols.append(trailing_mean(x, int(tail[2:])))
    X = np.column_stack(cols)
    ok = np.isfinite(X).all(axis=1)
    return tf.index[ok], X[ok]


# --------------------------------------------------------------------------
# standardization
# --------------------------------------------------------------------------

def standardize(ds: TimeSeriesDataset, ddof=1, zero_tol=1e-12):
    """Standardize X columns and y on ``ds``'s own rows (the training span).

    Zero-variance columns are dropped and listed in the returned stats.
    """
    if ds.N < 2:
        raise DataError("need at least 2 rows to standardize")
    mean = ds.X.mean(axis=0)
    std = ds.X.std(axis=0, ddof=ddof)
    keep = std > zero_tol * np.maximum(1.0, np.abs(mean))
    if not keep.any():
        raise DataError("all feature columns have zero variance")
    y_mean = float(ds.y.mean())
    y_std = float(ds.y.std(ddof=ddof))
    if not y_std > 0:
        raise DataError("target has zero variance")
    kept = np.flatnonzero(keep)
    stats = StandardizationStats(
        x_mean=mean[keep],
        x_std=std[keep],
        y_mean=y_mean,
        y_std=y_std,
        kept=kept.tolist(),
        dropped=[ds.feature_names[i] for i in np.flatnonzero(~keep)],
        ddof=ddof,
    )
    return apply_standardization(ds, stats), stats


def apply_standardization(ds: TimeSeriesDataset, stats: StandardizationStats):
    return TimeSeriesDataset(
        dates=ds.dates,
        X=stats.transform_X(ds.X),
        y=stats.transform_y(ds.y),
        feature_names=[ds.feature_names[i] for i in stats.kept],
        horizon=ds.horizon,
        frequency=ds.frequency,
        target=ds.target,
        lags=ds.lags,
        target_dates=ds.target_dates,
        first_lag=ds.first_lag,
    )

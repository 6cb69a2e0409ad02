"""Run configuration read from TOML.

Schema (every key optional unless marked required)::

    seed = 0                      # root seed; every model derives its own
    output_dir = "out"

    [data]
    source = "synthetic"          # or path to a FRED-layout CSV
    tcode_row = 1                 # 0-based file line holding the codes
    frequency = "quarterly"       # or "monthly"
    n_periods = 200               # synthetic panels only
    synthetic_seed = 0

    [target]
    name = "GDP"                  # required
    horizons = [1]
    recession = "REC"             # indicator column used to shade figures

    [features]
    lags = 4
    first_lag = 0                 # 1: lags t-1..t-lags instead of t..t-lags+1
    marx = [2, 4, 8]              # moving-average orders (nonlinear models)
    variables = []                # empty: every column

    [split]
    train_end = "2000-12-01"      # required; last forecast origin in training
    test_end = ""                 # empty: through the end of the data
    decompose = ["2008-12-01"]    # test dates to decompose and plot

    [report]
    Q = 5
    bucket_years = 5
    ma_window = 4

    [models.ridge]                # one table per model; see MODEL_DEFAULTS
    lambda = "cv"
"""
from __future__ import annotations

import copy
import sys
from dataclasses import dataclass, field

import pandas as pd

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

MODEL_DEFAULTS = {
    "faar": {"r": 4, "y_lags": 4, "f_lags": 2},
    "ridge": {"lambda": "cv", "n_bags": 20, "bag_rate": 0.8, "block_len": 8},
    "krr": {"family": "cv", "bandwidth": None, "lambda": "cv", "n_bags": 100,
            "bag_rate": 0.8, "block_len": 8, "families": ["gaussian", "laplacian"],
            "bandwidth_scales": [0.5, 1.0, 2.0]},
    "rf": {"B": 500, "subsample": 0.75, "block_len": 8, "mtry": 1 / 3, "min_node": 5},
    "gbt": {"S": 100, "nu": "cv", "max_depth": "cv", "subsample": "cv", "colsample": "cv",
            "min_node": 2, "n_bags": 5, "bag_rate": 0.8, "block_len": 8},
    "nn": {"width": 400, "depth": 3, "epochs": 100, "lr": 0.001, "dropout": 0.2, "batch": 32,
           "B": 30, "early_stop_frac": 0.15, "tol": 0.01, "patience": 5, "threshold": 0.99},
}
MODEL_ORDER = tuple(MODEL_DEFAULTS)
LINEAR_MODELS = ("faar", "ridge")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    target: str
    train_end: pd.Timestamp
    source: str = "synthetic"
    tcode_row: int = 1
    frequency: str = "quarterly"
    n_periods: int = 200
    synthetic_seed: int = 0
    horizons: list = field(default_factory=lambda: [1])
    recession: str | None = None
    lags: int = 4
    first_lag: int = 0
    marx: list = field(default_factory=lambda: [2, 4, 8])
    variables: list | None = None
    test_end: pd.Timestamp | None = None
    decompose: list = field(default_factory=list)
    models: dict = field(default_factory=dict)
    Q: float = 5
    bucket_years: int = 5
    ma_window: int = 4
    seed: int = 0
    output_dir: str = "out"

    @classmethod
    def from_dict(cls, d):
        d = copy.deepcopy(d)
        known = {"seed", "output_dir", "data", "target", "features", "split", "report", "models"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
        data, tgt = d.get("data", {}), d.get("target", {})
        feats, split, rep = d.get("features", {}), d.get("split", {}), d.get("report", {})
        if "name" not in tgt:
            raise ConfigError("[target] name is required")
        if "train_end" not in split:
            raise ConfigError("[split] train_end is required")
        models = {}
        for tag, params in d.get("models", {}).items():
            if tag not in MODEL_DEFAULTS:
                raise ConfigError(f"unknown model tag {tag!r}; known: {', '.join(MODEL_ORDER)}")
            bad = set(params) - set(MODEL_DEFAULTS[tag])
            if bad:
                raise ConfigError(f"unknown {tag} settings: {sorted(bad)}")
            models[tag] = {**MODEL_DEFAULTS[tag], **params}
        if not models:
            raise ConfigError("no models configured")
        if int(feats.get("lags", 4)) < 1 or int(feats.get("first_lag", 0)) < 0:
            raise ConfigError("[features] needs lags >= 1 and first_lag >= 0")
        horizons = [int(h) for h in tgt.get("horizons", [1])]
        if not horizons or min(horizons) < 1:
            raise ConfigError("horizons must be positive integers")
        freq = data.get("frequency", "quarterly")
        if freq not in ("quarterly", "monthly"):
            raise ConfigError(f"unknown frequency {freq!r}")
        try:
            train_end = pd.Timestamp(split["train_end"])
            test_end = pd.Timestamp(split["test_end"]) if split.get("test_end") else None
            decompose = [pd.Timestamp(x) for x in split.get("decompose", [])]
        except ValueError as exc:
            raise ConfigError(f"bad date in [split]: {exc}") from None
        return cls(
            target=tgt["name"], train_end=train_end,
            source=str(data.get("source", "synthetic")), tcode_row=int(data.get("tcode_row", 1)),
            frequency=freq, n_periods=int(data.get("n_periods", 200)),
            synthetic_seed=int(data.get("synthetic_seed", 0)), horizons=horizons,
            recession=tgt.get("recession") or None, lags=int(feats.get("lags", 4)),
            first_lag=int(feats.get("first_lag", 0)),
            marx=[int(m) for m in feats.get("marx", [2, 4, 8])],
            variables=list(feats["variables"]) if feats.get("variables") else None,
            test_end=test_end, decompose=decompose, models=models,
            Q=float(rep.get("Q", 5)), bucket_years=int(rep.get("bucket_years", 5)),
            ma_window=int(rep.get("ma_window", 4)), seed=int(d.get("seed", 0)),
            output_dir=str(d.get("output_dir", "out")))

    def ordered_models(self):
        return [t for t in MODEL_ORDER if t in self.models]


def load_config(path) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return RunConfig.from_dict(raw)

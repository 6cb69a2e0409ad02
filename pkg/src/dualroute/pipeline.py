"""End-to-end runs: ingest, design, fit, decompose, stats and report.

Every stage reads what earlier stages wrote under the output directory, so
the CLI can run them one at a time or all at once.  All numbers go to CSV
with round-trip float formatting and all model seeds derive from the root
seed, which makes repeated runs byte-identical.
"""
from __future__ import annotations

import csv
import json
import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import svg
from .config import LINEAR_MODELS, MODEL_ORDER, ConfigError, RunConfig
from .dataset import (RawPanel, StandardizationStats, TimeSeriesDataset, apply_standardization,
                      build_supervised, load_fred_csv, standardize)
from .decomposition import (DualDecomposition, WeightPanel, cumulative_contribution_view,
                            forecast_stats, moving_average_view, write_json)
from .kernel_methods import KernelRidge, KernelSpec, cross_validate_krr, median_distance
from .linear_models import (FaarModel, RidgeModel, ar_fit, cross_validate_lambda, faar_fit,
                            ridge_fit, ridge_weights)
from .neural import NeuralModel, nn_dual_weights, nn_fit
from .synthetic import make_panel
from .trees import (DEFAULT_GBT_GRID, ForestModel, GbtModel, cross_validate_gbt,
                    gbt_axil_weights, gbt_fit, rf_fit, rf_weights)

log = logging.getLogger(__name__)

EXIT_OK, EXIT_ERROR, EXIT_WARN = 0, 2, 3


class StageError(RuntimeError):
    def __init__(self, stage, exc):
        super().__init__(f"stage '{stage}' failed: {exc}")
        self.stage = stage
        self.cause = exc


@contextmanager
def stage(name):
    try:
        yield
    except StageError:
        raise
    except Exception as exc:  # noqa: BLE001 - every failure is reported with its stage
        raise StageError(name, exc) from exc


def derive_seed(root, *keys):
    return int(np.random.SeedSequence([int(root), *map(int, keys)]).generate_state(1)[0])


def _f(x):
    return repr(float(x))


def _d(t):
    return pd.Timestamp(t).strftime("%Y-%m-%d")


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _read_json(path):
    with open(path) as fh:
        return json.load(fh)


# --------------------------------------------------------------------------
# ingest and design
# --------------------------------------------------------------------------

def load_panel(cfg: RunConfig) -> RawPanel:
    if cfg.source == "synthetic":
        return make_panel(n_periods=cfg.n_periods, seed=cfg.synthetic_seed,
                          frequency=cfg.frequency)
    return load_fred_csv(cfg.source, tcode_row=cfg.tcode_row)


@dataclass
class Design:
    horizon: int
    train: TimeSeriesDataset
    test: TimeSeriesDataset
    stats: StandardizationStats
    linear_features: list

    def for_model(self, tag, part="train"):
        ds = self.train if part == "train" else self.test
        return ds.select(self.linear_features) if tag in LINEAR_MODELS + ("ar",) else ds

    def to_dict(self):
        return {"horizon": self.horizon, "train": self.train.to_dict(),
                "test": self.test.to_dict(), "stats": self.stats.to_dict(),
                "linear_features": self.linear_features}

    @classmethod
    def from_dict(cls, d):
        return cls(horizon=int(d["horizon"]), train=TimeSeriesDataset.from_dict(d["train"]),
                   test=TimeSeriesDataset.from_dict(d["test"]),
                   stats=StandardizationStats.from_dict(d["stats"]),
                   linear_features=list(d["linear_features"]))


def build_design(panel: RawPanel, cfg: RunConfig, h: int) -> Design:
    ds = build_supervised(panel, cfg.target, h=h, lags=cfg.lags, marx_orders=cfg.marx,
                          variables=cfg.variables, frequency=cfg.frequency,
                          first_lag=cfg.first_lag)
    first, last = ds.dates[0], ds.dates[-1]
    if not first <= cfg.train_end < last:
        raise ConfigError(f"train_end {_d(cfg.train_end)} is outside the forecast origins "
                          f"{_d(first)} to {_d(last)} (h={h})")
    train, test = ds.split(cfg.train_end)
    if cfg.test_end is not None:
        test = test.rows(np.flatnonzero(test.target_dates <= cfg.test_end))
    if test.N == 0:
        raise ConfigError(f"empty test window for h={h}")
    tdates = set(test.target_dates)
    for d in cfg.decompose:
        if d not in tdates:
            raise ConfigError(f"decompose date {_d(d)} is outside the test window "
                              f"{_d(test.target_dates[0])} to {_d(test.target_dates[-1])} "
                              f"(h={h})")
    train_s, stats = standardize(train)
    test_s = apply_standardization(test, stats)
    linear = [n for n in train_s.feature_names if "_lag" in n]
    return Design(horizon=h, train=train_s, test=test_s, stats=stats, linear_features=linear)


# --------------------------------------------------------------------------
# models
# --------------------------------------------------------------------------

MODEL_CLASSES = {"faar": FaarModel, "ar": FaarModel, "ridge": RidgeModel, "krr": KernelRidge,
                 "rf": ForestModel, "gbt": GbtModel, "nn": NeuralModel}


def fit_model(tag, params, ds: TimeSeriesDataset, seed):
    """Fit one configured model; returns (model, info dict of tuned values)."""
    X, y = ds.X, ds.y
    p = params
    if tag == "faar":
        return faar_fit(ds, r=p["r"], y_lags=p["y_lags"], f_lags=p["f_lags"]), {}
    if tag == "ar":
        return ar_fit(ds, p=p.get("p", 4)), {}
    if tag == "ridge":
        lam = p["lambda"]
        if lam == "cv":
            lam = cross_validate_lambda((X, y), n_bags=p["n_bags"], bag_rate=p["bag_rate"],
                                        block_len=p["block_len"], seed=seed)
        return ridge_fit(X, y, float(lam), ds.feature_names), {"lambda": float(lam)}
    if tag == "krr":
        if p["family"] == "cv" or p["lambda"] == "cv":
            families = p["families"] if p["family"] == "cv" else [p["family"]]
            scales = (p["bandwidth_scales"] if p["bandwidth"] is None
                      else [p["bandwidth"] / median_distance(X)])
            spec, lam = cross_validate_krr(
                X, y, families=families, bandwidth_scales=scales,
                lam_grid=None if p["lambda"] == "cv" else [float(p["lambda"])],
                n_bags=p["n_bags"], bag_rate=p["bag_rate"], block_len=p["block_len"], seed=seed)
        else:
            spec, lam = KernelSpec(p["family"], p["bandwidth"]), float(p["lambda"])
        model = KernelRidge.fit(X, y, spec, lam)
        return model, {"lambda": lam, "kernel": model.spec.to_dict()}
    if tag == "rf":
        return rf_fit(X, y, B=p["B"], subsample=p["subsample"], block_len=p["block_len"],
                      mtry=p["mtry"], min_node=p["min_node"], seed=seed), {}
    if tag == "gbt":
        keys = ("nu", "max_depth", "subsample", "colsample")
        grid = {k: tuple(DEFAULT_GBT_GRID[k]) if p[k] == "cv" else (p[k],) for k in keys}
        chosen = cross_validate_gbt(X, y, grid=grid, S=p["S"], n_bags=p["n_bags"],
                                    bag_rate=p["bag_rate"], block_len=p["block_len"], seed=seed,
                                    min_node=p["min_node"])
        model = gbt_fit(X, y, S=p["S"], seed=seed, min_node=p["min_node"],
                        block_len=p["block_len"], **chosen)
        return model, {k: chosen[k] for k in keys}
    if tag == "nn":
        kw = {k: p[k] for k in ("width", "depth", "epochs", "lr", "dropout", "batch", "B",
                                "early_stop_frac", "tol", "patience")}
        return nn_fit(X, y, seed=seed, **kw), {}
    raise ConfigError(f"unknown model tag {tag!r}")


def model_weights(tag, model, design: Design, params):
    """(W: J x N over the test window, predictions, info)."""
    X_test = design.for_model(tag, "test").X
    train = design.for_model(tag, "train")
    info = {}
    if tag in ("faar", "ar"):
        W = model.weights(X_test)
    elif tag == "ridge":
        W = ridge_weights(X_test, model)
    elif tag == "krr":
        W = model.weights(X_test)
    elif tag == "rf":
        W = rf_weights(model, X_test)
    elif tag == "gbt":
        W = gbt_axil_weights(model, X_test)
    elif tag == "nn":
        W, rep = nn_dual_weights(model, train.X, train.y, X_test,
                                 threshold=params.get("threshold", 0.99))
        info["replication"] = rep.to_dict()
    else:
        raise ConfigError(f"unknown model tag {tag!r}")
    return np.atleast_2d(W), model.predict(X_test), info


# --------------------------------------------------------------------------
# stages
# --------------------------------------------------------------------------

def _hdir(out, h):
    d = Path(out) / f"h{h}"
    d.mkdir(parents=True, exist_ok=True)
    return d


def stage_transform(cfg: RunConfig, out):
    with stage("ingest"):
        panel = load_panel(cfg)
        tf = panel.transformed()
        Path(out).mkdir(parents=True, exist_ok=True)
        rows = [[_d(t)] + ["" if not np.isfinite(v) else _f(v) for v in row]
                for t, row in zip(tf.index, tf.to_numpy())]
        _write_csv(Path(out) / "transformed.csv", ["date"] + list(tf.columns), rows)
    return panel


def stage_fit(cfg: RunConfig, out, panel=None):
    if panel is None:
        panel = stage_transform(cfg, out)
    fitted = {}
    for h in cfg.horizons:
        hd = _hdir(out, h)
        with stage(f"design h={h}"):
            design = build_design(panel, cfg, h)
            _write_json(hd / "design.json", design.to_dict())
        (hd / "models").mkdir(exist_ok=True)
        tags = ["ar"] + cfg.ordered_models()
        for tag in tags:
            with stage(f"fit {tag} h={h}"):
                params = {"p": min(4, cfg.lags)} if tag == "ar" else cfg.models[tag]
                key = MODEL_ORDER.index(tag) + 1 if tag != "ar" else 0
                seed = derive_seed(cfg.seed, key, h)
                model, info = fit_model(tag, params, design.for_model(tag), seed)
                _write_json(hd / "models" / f"{tag}.json",
                            {"tag": tag, "seed": seed, "info": info, "model": model.to_dict()})
                fitted[(h, tag)] = (model, info)
                log.info("fitted %s for h=%d %s", tag, h, info)
    return fitted


def _load_design(hd):
    return Design.from_dict(_read_json(hd / "design.json"))


def _load_model(hd, tag):
    snap = _read_json(hd / "models" / f"{tag}.json")
    return MODEL_CLASSES[tag].from_dict(snap["model"]), snap


def _train_axis(design):
    return design.train.target_dates


def stage_decompose(cfg: RunConfig, out):
    warnings_ = []
    for h in cfg.horizons:
        hd = _hdir(out, h)
        with stage(f"decompose h={h}"):
            design = _load_design(hd)
        test_dates = design.test.target_dates
        preds = {}
        selected = []
        replication = {}
        for tag in ["ar"] + cfg.ordered_models():
            with stage(f"decompose {tag} h={h}"):
                model, snap = _load_model(hd, tag)
                params = cfg.models.get(tag, {})
                W, pred, info = model_weights(tag, model, design, params)
                panel = WeightPanel(W=W, test_dates=test_dates, train_dates=_train_axis(design),
                                    y_train=design.train.y, predictions=pred, model=tag)
                for dec in panel:
                    dec.check_efficiency()
                preds[tag] = pred
                if tag == "ar":
                    continue
                panel.to_long_csv(hd / f"weights_{tag}.csv")
                for d in cfg.decompose:
                    selected.append(panel.row(int(np.flatnonzero(test_dates == d)[0])))
                if "replication" in info:
                    replication[tag] = info["replication"]
                    if info["replication"]["warning"]:
                        warnings_.append(f"h={h} {tag}: replication accuracy "
                                         f"{info['replication']['accuracy']:.4f} below "
                                         f"{info['replication']['threshold']}")
        with stage(f"decompose h={h}"):
            header = ["test_date", "origin_date", "actual"] + list(preds)
            rows = [[_d(t), _d(o), _f(a)] + [_f(preds[k][j]) for k in preds]
                    for j, (t, o, a) in enumerate(zip(test_dates, design.test.dates,
                                                      design.test.y))]
            _write_csv(hd / "predictions.csv", header, rows)
            write_json(hd / "decompositions.json", selected)
            if replication:
                _write_json(hd / "replication.json", replication)
    _write_json(Path(out) / "warnings.json", warnings_)
    return warnings_


def read_weight_panel(path, model=""):
    """Rebuild a WeightPanel from a long weights CSV."""
    df = pd.read_csv(path, float_precision="round_trip", dtype={"model": str})
    test_dates = pd.DatetimeIndex(pd.unique(df["test_date"]))
    N = len(df) // len(test_dates)
    W = df["weight"].to_numpy().reshape(len(test_dates), N)
    first = df.iloc[:N]
    return WeightPanel(W=W, test_dates=test_dates,
                       train_dates=pd.DatetimeIndex(first["train_date"]),
                       y_train=first["y"].to_numpy(), model=model or str(df["model"].iloc[0]))


def stage_stats(cfg: RunConfig, out):
    for h in cfg.horizons:
        hd = _hdir(out, h)
        rows, turn, ohi = [], [], []
        for tag in cfg.ordered_models():
            with stage(f"stats {tag} h={h}"):
                panel = read_weight_panel(hd / f"weights_{tag}.csv", tag)
                st = forecast_stats(panel, Q=cfg.Q, years=cfg.bucket_years)
                rows += [[r["model"], r["test_date"], _f(r["concentration"]),
                          _f(r["short_position"]), _f(r["leverage"])] for r in st.rows()]
                turn.append([tag, _f(st.turnover), _f(st.turnover_normalized)])
                for lab, (a, b), t in zip(st.ohi.labels, st.ohi.bounds, st.ohi.totals):
                    ohi.append([tag, lab, _d(a), _d(b), _f(t)])
        _write_csv(hd / "stats.csv",
                   ["model", "test_date", f"concentration_q{cfg.Q:g}", "short_position",
                    "leverage"], rows)
        _write_csv(hd / "turnover.csv", ["model", "turnover", "turnover_normalized"], turn)
        _write_csv(hd / "ohi.csv", ["model", "bucket", "start", "end", "total"], ohi)


# --------------------------------------------------------------------------
# report
# --------------------------------------------------------------------------

def benchmark_rmse(predictions, actuals, baseline):
    """RMSE of each model divided by the baseline's RMSE on the same window.

    ``predictions`` maps model name to predictions aligned with ``actuals``.
    """
    actuals = np.asarray(actuals, dtype=float)
    baseline = np.asarray(baseline, dtype=float)
    if actuals.size == 0:
        raise ValueError("empty evaluation window")
    if baseline.shape != actuals.shape:
        raise ValueError("baseline and actuals are not aligned")
    ref = float(np.sqrt(np.mean((baseline - actuals) ** 2)))
    out = {}
    for name, pred in predictions.items():
        pred = np.asarray(pred, dtype=float)
        if pred.shape != actuals.shape:
            raise ValueError(f"{name}: predictions and actuals are not aligned")
        rmse = float(np.sqrt(np.mean((pred - actuals) ** 2)))
        out[name] = {"rmse": rmse, "baseline_rmse": ref,
                     "ratio": rmse / ref if ref > 0 else (0.0 if rmse == 0 else np.inf)}
    return out


def _bands(panel: RawPanel, cfg: RunConfig, dates):
    if not cfg.recession or cfg.recession not in panel.series.columns:
        return []
    rec = panel.series[cfg.recession].reindex(pd.DatetimeIndex(dates)).fillna(0).to_numpy()
    bands, start = [], None
    for i, v in enumerate(rec):
        if v > 0.5 and start is None:
            start = i
        if v <= 0.5 and start is not None:
            bands.append((start, i - 1))
            start = None
    if start is not None:
        bands.append((start, len(rec) - 1))
    return bands


def stage_report(cfg: RunConfig, out, panel=None):
    panel = load_panel(cfg) if panel is None else panel
    files = []
    rmse_rows = []
    for h in cfg.horizons:
        hd = _hdir(out, h)
        figs = hd / "figures"
        figs.mkdir(exist_ok=True)
        with stage(f"report h={h}"):
            pr = pd.read_csv(hd / "predictions.csv", float_precision="round_trip")
            table = benchmark_rmse({t: pr[t].to_numpy() for t in cfg.ordered_models()},
                                   pr["actual"].to_numpy(), pr["ar"].to_numpy())
            for t, r in table.items():
                rmse_rows.append([h, t, _f(r["rmse"]), _f(r["baseline_rmse"]), _f(r["ratio"])])
            panels = {t: read_weight_panel(hd / f"weights_{t}.csv", t)
                      for t in cfg.ordered_models()}
        any_panel = next(iter(panels.values()))
        train_dates = any_panel.train_dates
        labels = [_d(t) for t in train_dates]
        bands = _bands(panel, cfg, train_dates)
        for d in cfg.decompose:
            with stage(f"report figures h={h}"):
                tag_d = _d(d)
                paths, ma = {}, {}
                dots = []
                for t, p in panels.items():
                    j = int(np.flatnonzero(p.test_dates == d)[0])
                    dec = p.row(j)
                    paths[t] = cumulative_contribution_view(dec)
                    ma[t] = moving_average_view(dec.weights, cfg.ma_window, scale="mean_abs")
                    dots.append((len(labels) - 1, float(dec.prediction), t))
                base = f"cumulative_{tag_d}"
                _write_csv(figs / f"{base}.csv", ["train_date"] + list(paths),
                           [[lab] + [_f(paths[t][i]) for t in paths]
                            for i, lab in enumerate(labels)])
                svg.line_chart(figs / f"{base}.svg", labels, paths,
                               title=f"Cumulative contributions, {cfg.target} h={h}, {tag_d}",
                               bands=bands, dots=dots, ylabel="standardized units")
                base = f"ma_weights_{tag_d}"
                _write_csv(figs / f"{base}.csv", ["train_date"] + list(ma),
                           [[lab] + [_f(ma[t][i]) for t in ma] for i, lab in enumerate(labels)])
                svg.line_chart(figs / f"{base}.svg", labels, ma,
                               title=f"Weights, {cfg.ma_window}-period average / mean |w|, "
                                     f"{tag_d}", bands=bands)
                files += [figs / f"cumulative_{tag_d}.svg", figs / f"ma_weights_{tag_d}.svg"]
        for t, p in panels.items():
            with stage(f"report figures h={h}"):
                st = forecast_stats(p, Q=cfg.Q, years=cfg.bucket_years).ohi
                _write_csv(figs / f"ohi_{t}.csv", ["bucket", "total"],
                           [[lab, _f(v)] for lab, v in zip(st.labels, st.totals)])
                svg.bar_chart(figs / f"ohi_{t}.svg", st.labels, st.totals,
                              title=f"Overall historical importance, {t}, h={h}")
                files.append(figs / f"ohi_{t}.svg")
    _write_csv(Path(out) / "rmse.csv", ["horizon", "model", "rmse", "ar4_rmse", "ratio"],
               rmse_rows)
    return files


@dataclass
class ReportBundle:
    output_dir: Path
    horizons: list
    models: list
    warnings: list = field(default_factory=list)
    figures: list = field(default_factory=list)

    @property
    def exit_code(self):
        return EXIT_WARN if self.warnings else EXIT_OK


def run(cfg: RunConfig, out=None, seed=None) -> ReportBundle:
    if seed is not None:
        cfg.seed = int(seed)
    out = Path(out or cfg.output_dir)
    panel = stage_transform(cfg, out)
    stage_fit(cfg, out, panel)
    warns = stage_decompose(cfg, out)
    stage_stats(cfg, out)
    figures = stage_report(cfg, out, panel)
    for w in warns:
        log.warning(w)
    return ReportBundle(output_dir=out, horizons=list(cfg.horizons),
                        models=cfg.ordered_models(), warnings=warns, figures=figures)

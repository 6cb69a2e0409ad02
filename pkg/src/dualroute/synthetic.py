"""Deterministic synthetic macro panel in FRED layout, for demos and tests.

Two persistent latent factors drive a handful of series stored in levels
with FRED transformation codes.  Output growth responds nonlinearly to the
factors, a recession indicator marks spells of negative growth, and a term
spread inverts a few quarters ahead of them.
"""
import numpy as np
import pandas as pd

from .dataset import RawPanel


def make_panel(n_periods=200, seed=0, start="1960-03-01", frequency="quarterly"):
    rng = np.random.default_rng(seed)
    T = n_periods + 20  # burn-in
    f = np.zeros((T, 2))
    for t in range(1, T):
        f[t, 0] = 0.8 * f[t - 1, 0] + rng.normal(0, 0.6)
        f[t, 1] = 0.5 * f[t - 1, 1] + 0.3 * f[t - 1, 0] + rng.normal(0, 0.8)
    f = f[20:]
    lag = np.vstack([f[:1], f[:-1]])
    growth = (0.6 + 0.5 * lag[:, 0] - 0.35 * np.maximum(lag[:, 1], 0.0)
              + 0.25 * lag[:, 0] * lag[:, 1] + rng.normal(0, 0.5, n_periods))
    infl = 2.0 + 0.6 * f[:, 1] + 0.3 * np.tanh(lag[:, 0]) + rng.normal(0, 0.4, n_periods)
    unrate = 5.5 + np.cumsum(-0.15 * growth + 0.1 + rng.normal(0, 0.1, n_periods))
    gdp = 100.0 * np.exp(np.cumsum(growth / 100.0))
    cpi = 50.0 * np.exp(np.cumsum(infl / 400.0))
    lead = np.concatenate([f[2:, 0], f[-1:, 0].repeat(2)])
    spread = 1.2 + 0.9 * lead + rng.normal(0, 0.3, n_periods)
    rate = 4.0 + np.cumsum(0.2 * f[:, 1] + rng.normal(0, 0.2, n_periods))
    ip = 60.0 * np.exp(np.cumsum((0.8 * growth + rng.normal(0, 0.6, n_periods)) / 100.0))
    stock = 100.0 * np.exp(np.cumsum((0.5 * f[:, 0] + rng.normal(0, 2.0, n_periods)) / 100.0))
    conf = 90.0 + 5.0 * f[:, 0] + rng.normal(0, 2.0, n_periods)
    rec = np.zeros(n_periods)
    neg = growth < 0
    rec[1:] = (neg[1:] & neg[:-1]) | (neg[1:] & (growth[1:] < -0.5))

    freq = "QS-MAR" if frequency == "quarterly" else "MS"
    dates = pd.date_range(start=start, periods=n_periods, freq=freq)
    series = pd.DataFrame({
        "GDP": gdp, "CPI": cpi, "UNRATE": unrate, "SPREAD": spread, "FEDFUNDS": rate,
        "INDPRO": ip, "SP500": stock, "CONF": conf, "REC": rec,
    }, index=dates)
    tcodes = {"GDP": 5, "CPI": 5, "UNRATE": 2, "SPREAD": 1, "FEDFUNDS": 2, "INDPRO": 5,
              "SP500": 5, "CONF": 1, "REC": 1}
    return RawPanel(dates=dates, series=series, tcodes=tcodes)


def write_panel_csv(path, n_periods=200, seed=0, frequency="quarterly"):
    panel = make_panel(n_periods=n_periods, seed=seed, frequency=frequency)
    panel.to_csv(path)
    return panel

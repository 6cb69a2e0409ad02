import json
import subprocess
import sys

import numpy as np
import pandas as pd
import pytest

from conftest import write_light_config
from dualroute import cli, pipeline, svg
from dualroute.config import ConfigError, RunConfig, load_config


def _run(*args):
    return cli.main([str(a) for a in args])


@pytest.fixture(scope="module")
def finished_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    cfg = write_light_config(root / "run.toml", root / "out")
    code = _run("run", "--config", cfg)
    return root / "out", code


class TestConfig:
    base = {"target": {"name": "GDP"}, "split": {"train_end": "1990-01-01"},
            "models": {"ridge": {}}}

    def test_defaults_filled(self):
        cfg = RunConfig.from_dict(self.base)
        assert cfg.models["ridge"]["lambda"] == "cv"
        assert cfg.first_lag == 0 and cfg.lags == 4

    @pytest.mark.parametrize("patch, message", [
        ({"bogus": 1}, "unknown top-level"),
        ({"models": {"svm": {}}}, "unknown model tag"),
        ({"models": {"ridge": {"alpha": 1}}}, "unknown ridge settings"),
        ({"models": {}}, "no models"),
        ({"target": {"name": "GDP", "horizons": [0]}}, "horizons"),
        ({"split": {"train_end": "not a date"}}, "bad date"),
        ({"target": {}}, "name is required"),
        ({"features": {"first_lag": -1}}, "first_lag"),
    ])
    def test_rejections(self, patch, message):
        with pytest.raises(ConfigError, match=message):
            RunConfig.from_dict({**self.base, **patch})

    def test_bundled_config_parses(self):
        cfg = load_config("configs/synthetic.toml")
        assert cfg.ordered_models() == ["faar", "ridge", "krr", "rf", "gbt", "nn"]

    def test_seed_derivation_is_stable(self):
        assert pipeline.derive_seed(0, 4, 1) == pipeline.derive_seed(0, 4, 1)
        assert pipeline.derive_seed(0, 4, 1) != pipeline.derive_seed(1, 4, 1)


class TestRun:
    def test_exit_and_outputs(self, finished_run):
        out, code = finished_run
        assert code in (pipeline.EXIT_OK, pipeline.EXIT_WARN)
        hd = out / "h1"
        for name in ["predictions.csv", "stats.csv", "turnover.csv", "ohi.csv",
                     "decompositions.json", "weights_ridge.csv", "weights_nn.csv"]:
            assert (hd / name).exists(), name
        assert (out / "rmse.csv").exists() and (out / "transformed.csv").exists()
        warns = json.loads((out / "warnings.json").read_text())
        assert (code == pipeline.EXIT_WARN) == bool(warns)

    def test_efficiency_in_outputs(self, finished_run):
        out, _ = finished_run
        pr = pd.read_csv(out / "h1" / "predictions.csv", float_precision="round_trip")
        for tag, tol in [("ridge", 1e-10), ("faar", 1e-10), ("krr", 1e-10), ("rf", 1e-12),
                         ("gbt", 1e-8)]:
            panel = pipeline.read_weight_panel(out / "h1" / f"weights_{tag}.csv", tag)
            gap = np.abs(panel.W @ panel.y_train - pr[tag].to_numpy())
            assert gap.max() <= tol * max(1.0, np.abs(panel.y_train).max()), tag

    def test_rmse_table(self, finished_run):
        out, _ = finished_run
        table = pd.read_csv(out / "rmse.csv")
        assert set(table["model"]) == {"faar", "ridge", "krr", "rf", "gbt", "nn"}
        np.testing.assert_allclose(table["ratio"], table["rmse"] / table["ar4_rmse"])

    def test_figures_match_csv(self, finished_run):
        out, _ = finished_run
        figs = out / "h1" / "figures"
        for base in ["cumulative_1985-12-01", "ma_weights_1985-12-01"]:
            series = svg.read_series(figs / f"{base}.svg")
            table = pd.read_csv(figs / f"{base}.csv", float_precision="round_trip")
            for name, values in series.items():
                got = np.array(values)
                want = table[name].to_numpy()
                np.testing.assert_array_equal(np.isnan(got), np.isnan(want))
                np.testing.assert_array_equal(got[~np.isnan(got)], want[~np.isnan(want)])
        bars = svg.read_series(figs / "ohi_rf.svg")["bars"]
        table = pd.read_csv(figs / "ohi_rf.csv", float_precision="round_trip")
        assert bars == table["total"].tolist()

    def test_cumulative_path_ends_at_prediction(self, finished_run):
        out, _ = finished_run
        pr = pd.read_csv(out / "h1" / "predictions.csv", float_precision="round_trip")
        row = pr[pr["test_date"] == "1985-12-01"]
        table = pd.read_csv(out / "h1" / "figures" / "cumulative_1985-12-01.csv",
                            float_precision="round_trip")
        assert len(row) == 1
        for tag in ["ridge", "krr", "rf"]:
            assert table[tag].iloc[-1] == pytest.approx(row[tag].iloc[0], abs=1e-10)


class TestStagesAndErrors:
    def test_stagewise_equals_run(self, tmp_path, finished_run):
        out, _ = finished_run
        cfg = write_light_config(tmp_path / "run.toml", tmp_path / "staged")
        for cmd in ["transform", "fit", "decompose", "stats", "report"]:
            assert _run(cmd, "-c", cfg) in (0, 3)
        for name in ["h1/predictions.csv", "h1/weights_gbt.csv", "h1/stats.csv", "rmse.csv"]:
            assert (tmp_path / "staged" / name).read_bytes() == (out / name).read_bytes()

    def test_decompose_date_outside_window(self, tmp_path, capsys):
        cfg = write_light_config(tmp_path / "run.toml", tmp_path / "o",
                                 decompose='["1970-03-01"]')
        assert _run("fit", "-c", cfg) == pipeline.EXIT_ERROR
        err = capsys.readouterr().err
        assert "1970-03-01" in err

    def test_missing_earlier_stage(self, tmp_path, capsys):
        cfg = write_light_config(tmp_path / "run.toml", tmp_path / "empty")
        assert _run("stats", "-c", cfg) == pipeline.EXIT_ERROR
        assert "error" in capsys.readouterr().err

    def test_bad_config(self, tmp_path, capsys):
        p = tmp_path / "bad.toml"
        p.write_text("seed = [")
        assert _run("run", "-c", p) == pipeline.EXIT_ERROR
        assert "config" in capsys.readouterr().err

    def test_bad_csv_names_stage(self, tmp_path, capsys):
        src = tmp_path / "bad.csv"
        src.write_text("sasdate,GDP\nTransform:,9\n3/1/2000,1\n")
        cfg = write_light_config(tmp_path / "run.toml", tmp_path / "o", source=src)
        assert _run("transform", "-c", cfg) == pipeline.EXIT_ERROR
        err = capsys.readouterr().err
        assert "transform" in err and "unknown transformation code 9" in err

    def test_synth_then_csv_source(self, tmp_path):
        csv_path = tmp_path / "panel.csv"
        assert _run("synth", "--out", csv_path, "--periods", 120) == 0
        cfg = write_light_config(tmp_path / "run.toml", tmp_path / "o", source=csv_path)
        assert _run("transform", "-c", cfg) == 0
        a = pd.read_csv(tmp_path / "o" / "transformed.csv")
        assert "GDP" in a.columns and len(a) == 120

    def test_module_entry_point(self):
        proc = subprocess.run([sys.executable, "-m", "dualroute", "--help"],
                              capture_output=True, text=True)
        assert proc.returncode == 0 and "synth" in proc.stdout

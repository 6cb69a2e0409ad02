import numpy as np
import pytest

from dualroute import _accel
from dualroute.synthetic import make_panel


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def panel():
    return make_panel(n_periods=120, seed=3)


@pytest.fixture(params=["numba", "numpy"])
def backend(request, monkeypatch):
    if request.param == "numba" and not _accel.NUMBA_AVAILABLE:
        pytest.skip("numba not installed")
    monkeypatch.setattr(_accel, "USE_NUMBA", request.param == "numba")
    return request.param


def nonlinear_data(n, p, seed=0, noise=0.3):
    r = np.random.default_rng(seed)
    X = r.normal(size=(n, p))
    y = np.sin(X[:, 0]) + X[:, 1 % p] * X[:, 2 % p] + noise * r.normal(size=n)
    return X, y


LIGHT_CONFIG = """
seed = 0
output_dir = "{out}"

[data]
source = "{source}"
n_periods = 120
synthetic_seed = 0

[target]
name = "GDP"
horizons = {horizons}
recession = "REC"

[features]
lags = 2
marx = [2]

[split]
train_end = "1979-12-01"
decompose = {decompose}

[report]
Q = 5
bucket_years = 5
ma_window = 4

[models.faar]
r = 2
y_lags = 2
f_lags = 1

[models.ridge]
lambda = "cv"
n_bags = 5

[models.krr]
family = "gaussian"
lambda = 0.5

[models.rf]
B = 20

[models.gbt]
S = 20
nu = 0.1
max_depth = 2
subsample = 1.0
colsample = 1.0

[models.nn]
width = 16
depth = 2
epochs = 20
B = 2
lr = 0.01
threshold = 0.9
"""


def write_light_config(path, out, source="synthetic", horizons="[1]",
                       decompose='["1985-12-01"]', extra=""):
    path.write_text(LIGHT_CONFIG.format(out=out, source=source, horizons=horizons,
                                        decompose=decompose) + extra)
    return path


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, in file order."""
    rows = []
    for key in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(key, []):
            if "test_acceptance.py" not in rep.nodeid or rep.when not in ("call", "setup"):
                continue
            if rep.when == "setup" and rep.passed:
                continue
            props = dict(rep.user_properties)
            label = props.get("criterion", rep.nodeid.split("::")[-1])
            detail = props.get("detail", "")
            rows.append((props.get("order", 99), "PASS" if rep.passed else "FAIL", label,
                         detail))
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for _, status, label, detail in sorted(rows):
        terminalreporter.write_line(f"{status}  {label}" + (f"  [{detail}]" if detail else ""))

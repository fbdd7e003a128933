import numpy as np
import pytest

from thermoreg.dataset import load_dataset
from thermoreg.synthetic import write_synthetic_csv
from thermoreg.transform import FeatureMatrix


@pytest.fixture(scope="session")
def synthetic_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "flir_synthetic.csv"
    write_synthetic_csv(path, seed=0)
    return path


@pytest.fixture(scope="session")
def synthetic_ds(synthetic_csv):
    return load_dataset(synthetic_csv)


def random_matrix(n=40, d=3, seed=0, noise=0.1, names=None):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    w = rng.normal(size=d)
    y = X @ w + 1.5 + noise * rng.normal(size=n)
    return FeatureMatrix(X, tuple(names or (f"x{i}" for i in range(d))), y)


# One line per acceptance criterion, printed after the run.
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])

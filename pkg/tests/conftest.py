import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from qkad.data import FEATURE_COLUMNS  # noqa: E402


def random_state(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return v / np.linalg.norm(v)


def write_kaggle_like(path, n_nominal=150, n_fraud=20, seed=0, drop=()):
    """Synthetic file with the credit-card schema: Time, V1..V28, Amount, Class."""
    rng = np.random.default_rng(seed)
    mix = rng.normal(size=(28, 28)) / 6 + np.eye(28)
    nominal = rng.normal(size=(n_nominal, 28)) @ mix
    fraud = rng.normal(loc=2.5, scale=1.5, size=(n_fraud, 28)) @ mix
    X = np.vstack([nominal, fraud])
    y = np.r_[np.zeros(n_nominal, int), np.ones(n_fraud, int)]
    perm = rng.permutation(len(y))
    X, y = X[perm], y[perm]
    cols = ["Time", *FEATURE_COLUMNS, "Amount", "Class"]
    keep = [c for c in cols if c not in drop]
    with open(path, "w") as fh:
        fh.write(",".join(f'"{c}"' for c in keep) + "\n")
        for i in range(len(y)):
            row = {"Time": float(i), "Amount": float(rng.uniform(1, 500)), "Class": f'"{y[i]}"'}
            row.update({c: repr(float(X[i, k])) for k, c in enumerate(FEATURE_COLUMNS)})
            fh.write(",".join(str(row[c]) for c in keep) + "\n")
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def kaggle_csv(tmp_path):
    return write_kaggle_like(tmp_path / "creditcard.csv")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        status, title = results[number]
        terminalreporter.write_line(f"criterion {number}: {status}  {title}")

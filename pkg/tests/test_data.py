import json
import os
from pathlib import Path

import numpy as np
import pytest

from conftest import write_kaggle_like
from qkad.data import (
    FEATURE_COLUMNS,
    Dataset,
    SchemaError,
    apply_eta,
    apply_pca,
    apply_scaler,
    fit_pca,
    fit_scaler,
    load_csv,
    load_dataset,
    replay,
    save_dataset,
    subsample,
)

KAGGLE = Path(os.environ.get("QKAD_CREDITCARD_CSV", "data/creditcard.csv"))


def scaled(X):
    d = Dataset(np.asarray(X, float))
    return apply_scaler(d, fit_scaler(d))


class TestLoadCsv:
    def test_three_rows(self, tmp_path):
        d = load_csv(write_kaggle_like(tmp_path / "c.csv", n_nominal=2, n_fraud=1))
        assert d.features.shape == (3, 28)
        assert d.feature_names == FEATURE_COLUMNS
        assert "Time" not in d.feature_names and "Amount" not in d.feature_names
        assert sorted(d.labels.tolist()) == [0, 0, 1]

    def test_values_preserved(self, tmp_path):
        path = tmp_path / "c.csv"
        header = ["Time", *FEATURE_COLUMNS, "Amount", "Class"]
        row = ["7", *[str(0.5 * i) for i in range(28)], "99.5", "1"]
        path.write_text(",".join(header) + "\n" + ",".join(row) + "\n")
        d = load_csv(path)
        np.testing.assert_array_equal(d.features[0], 0.5 * np.arange(28))
        assert d.labels.tolist() == [1]

    def test_missing_column(self, tmp_path):
        with pytest.raises(SchemaError, match="V7"):
            load_csv(write_kaggle_like(tmp_path / "c.csv", 5, 1, drop=("V7",)))

    def test_bad_cell_reports_line(self, tmp_path):
        path = write_kaggle_like(tmp_path / "c.csv", 4, 1)
        lines = path.read_text().splitlines()
        cells = lines[3].split(",")
        cells[5] = "oops"
        lines[3] = ",".join(cells)
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ValueError, match="line 4"):
            load_csv(path)

    def test_fixture_counts(self, kaggle_csv):
        d = load_csv(kaggle_csv)
        assert d.n_rows == 170 and int(d.labels.sum()) == 20
        assert d.provenance[0]["op"] == "load_csv"

    @pytest.mark.skipif(not KAGGLE.exists(), reason="Kaggle credit-card file not present")
    def test_full_kaggle_counts(self):
        d = load_csv(KAGGLE)
        assert d.n_rows == 284_807
        assert int(d.labels.sum()) == 492


class TestSubsample:
    def test_counts(self, tmp_path):
        d = load_csv(write_kaggle_like(tmp_path / "c.csv", 600, 40))
        s = subsample(d, 500, 25, seed=1)
        assert s.n_rows == 525 and int(s.labels.sum()) == 25

    def test_nominal_only(self, kaggle_csv):
        s = subsample(load_csv(kaggle_csv), 30, 0, seed=0)
        assert s.n_rows == 30 and not s.labels.any()

    def test_deterministic(self, kaggle_csv):
        d = load_csv(kaggle_csv)
        a, b = subsample(d, 50, 10, seed=9), subsample(d, 50, 10, seed=9)
        assert a.row_ids == b.row_ids
        np.testing.assert_array_equal(a.features, b.features)
        assert subsample(d, 50, 10, seed=10).row_ids != a.row_ids

    def test_provenance(self, kaggle_csv):
        s = subsample(load_csv(kaggle_csv), 50, 10, seed=3)
        assert s.provenance[-1] == {"op": "subsample", "n_nominal": 50, "n_fraud": 10, "seed": 3}

    def test_insufficient(self, kaggle_csv):
        with pytest.raises(ValueError, match="only 20"):
            subsample(load_csv(kaggle_csv), 10, 21, seed=0)


class TestScaler:
    def test_two_points(self):
        np.testing.assert_array_equal(scaled([[0.0], [2.0]]).features[:, 0], [-1.0, 1.0])

    def test_moments(self, rng):
        d = scaled(rng.normal(3, 5, size=(40, 4)))
        assert np.all(np.abs(d.features.mean(axis=0)) <= 1e-12)
        np.testing.assert_allclose(d.features.var(axis=0), 1.0, atol=1e-9)

    def test_not_refit_on_test(self, rng):
        train = Dataset(rng.normal(size=(30, 3)))
        test = Dataset(rng.normal(1.0, size=(30, 3)))
        out = apply_scaler(test, fit_scaler(train))
        assert np.all(np.abs(out.features.mean(axis=0)) > 1e-3)

    def test_constant_feature(self):
        d = Dataset(np.array([[1.0, 2.0], [1.0, 3.0]]), feature_names=["a", "b"])
        with pytest.raises(ValueError, match="a"):
            fit_scaler(d)

    def test_too_few_rows(self):
        with pytest.raises(ValueError):
            fit_scaler(Dataset(np.ones((1, 2))))


class TestPca:
    def test_line(self):
        t = np.linspace(-1, 1, 9)
        p = fit_pca(scaled(np.c_[t, t]), 2, strict=False)
        np.testing.assert_allclose(p.components[:, 0], np.array([1, 1]) / np.sqrt(2), atol=1e-12)
        assert p.explained_variance[1] == pytest.approx(0.0, abs=1e-12)

    def test_rank_error(self):
        t = np.linspace(-1, 1, 9)
        with pytest.raises(ValueError, match="at most 1"):
            fit_pca(scaled(np.c_[t, t]), 2)

    def test_full_reconstruction(self, rng):
        d = scaled(rng.normal(size=(30, 5)))
        p = fit_pca(d, 5)
        Xc = d.features - d.features.mean(axis=0)
        np.testing.assert_allclose(Xc @ p.components @ p.components.T, Xc, atol=1e-8)

    def test_svd_oracle(self, rng):
        d = scaled(rng.normal(size=(50, 10)) @ rng.normal(size=(10, 10)))
        p = fit_pca(d, 4)
        proj = apply_pca(d, p).features
        cov = proj.T @ proj / 50
        np.testing.assert_allclose(cov - np.diag(np.diag(cov)), 0.0, atol=1e-8)
        Xc = d.features - d.features.mean(axis=0)
        _, s, vt = np.linalg.svd(Xc, full_matrices=False)
        np.testing.assert_allclose(p.explained_variance, s[:4] ** 2 / 50, atol=1e-8)
        for k in range(4):
            assert abs(abs(vt[k] @ p.components[:, k]) - 1) <= 1e-8

    def test_invariants(self, rng):
        p = fit_pca(scaled(rng.normal(size=(40, 6))), 3)
        np.testing.assert_allclose(p.components.T @ p.components, np.eye(3), atol=1e-8)
        assert np.all(np.diff(p.explained_variance) <= 0)
        for k in range(3):
            col = p.components[:, k]
            assert col[np.argmax(np.abs(col))] > 0

    def test_requires_scaling(self, rng):
        with pytest.raises(ValueError, match="scale"):
            fit_pca(Dataset(rng.normal(size=(10, 3))), 2)

    def test_component_range(self, rng):
        with pytest.raises(ValueError):
            fit_pca(scaled(rng.normal(size=(4, 6))), 4)


class TestEta:
    def test_identity(self, rng):
        d = Dataset(rng.normal(size=(3, 2)))
        np.testing.assert_array_equal(apply_eta(d, 1.0).features, d.features)

    def test_value(self):
        assert apply_eta(Dataset(np.array([[3.0]])), 0.1).features[0, 0] == pytest.approx(0.3, rel=1e-15)

    def test_twice(self):
        d = apply_eta(apply_eta(Dataset(np.array([[3.0]])), 0.1), 0.1)
        assert d.features[0, 0] == pytest.approx(0.03, rel=1e-14)
        assert [r["op"] for r in d.provenance] == ["eta", "eta"]

    @pytest.mark.parametrize("eta", [0.0, -1.0, float("inf")])
    def test_invalid(self, eta):
        with pytest.raises(ValueError):
            apply_eta(Dataset(np.ones((1, 1))), eta)


def pipeline(raw, seed=4):
    s = subsample(raw, 60, 10, seed=seed)
    s = apply_scaler(s, fit_scaler(s))
    s = apply_pca(s, fit_pca(s, 3))
    return apply_eta(s, 0.1)


class TestProvenance:
    def test_one_record_per_transform(self, kaggle_csv):
        d = pipeline(load_csv(kaggle_csv))
        assert [r["op"] for r in d.provenance] == ["load_csv", "subsample", "scale", "pca", "eta"]

    def test_replay(self, kaggle_csv):
        raw = load_csv(kaggle_csv)
        d = pipeline(raw)
        np.testing.assert_array_equal(replay(raw, d.provenance).features, d.features)

    def test_deterministic(self, kaggle_csv):
        raw = load_csv(kaggle_csv)
        assert pipeline(raw).features.tobytes() == pipeline(raw).features.tobytes()

    def test_save_load(self, kaggle_csv, tmp_path):
        d = pipeline(load_csv(kaggle_csv))
        save_dataset(d, tmp_path / "d.csv")
        back = load_dataset(tmp_path / "d.csv")
        np.testing.assert_array_equal(back.features, d.features)
        np.testing.assert_array_equal(back.labels, d.labels)
        assert back.row_ids == d.row_ids and back.feature_names == ["PC1", "PC2", "PC3"]
        assert back.provenance == json.loads(json.dumps(d.provenance))


def test_dataset_rejects_nan():
    with pytest.raises(ValueError):
        Dataset(np.array([[np.nan]]))

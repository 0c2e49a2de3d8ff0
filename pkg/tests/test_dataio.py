import csv

import numpy as np
import pytest

from chaindesign.dataio import (
    ConfigError,
    analyze_real,
    bundled_gut_csv,
    ingest_csv,
    make_synthetic_gut,
    read_config,
    real_data_priors,
)
from chaindesign.model import mle
from chaindesign.simlab import ExperimentConfig, ToyConfig


def _write(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


def _selection_table(tmp_path, hits):
    """178 samples; taxon ``t`` sits at 0.6% in the first ``hits`` samples, else 0.1%."""
    rows = []
    for i in range(178):
        t = 60 if i < hits else 10
        rows.append([f"s{i}", f"{i % 7}.5", 10000 - t - 30, t, 10, 10, 10])
    return _write(tmp_path / "sel.csv", ["sample_id", "x", "big", "t", "r1", "r2", "r3"], rows)


class TestIngest:
    def test_focal_rule_selected(self, tmp_path):
        ing = ingest_csv(_selection_table(tmp_path, 60))
        assert ing.focal == ("big", "t") and ing.reference == ("r1", "r2", "r3")
        assert ing.predictors == ("x",)

    def test_focal_rule_reference(self, tmp_path):
        ing = ingest_csv(_selection_table(tmp_path, 40))
        assert "t" in ing.reference and ing.focal == ("big",)

    def test_row_order_independent(self, tmp_path):
        a = ingest_csv(_selection_table(tmp_path, 60))
        header, *rows = list(csv.reader(open(tmp_path / "sel.csv")))
        _write(tmp_path / "rev.csv", header, rows[::-1])
        b = ingest_csv(tmp_path / "rev.csv")
        assert a.focal == b.focal and a.reference == b.reference
        np.testing.assert_allclose(a.dataset.Y[::-1], b.dataset.Y)

    def test_log_ratio(self, tmp_path):
        path = _write(tmp_path / "two.csv", ["sample_id", "a", "b"], [["s1", 90, 10]])
        ing = ingest_csv(path, taxa=["a", "b"], predictors=[], min_samples=0, min_relative_abundance=0.5,
                         center=False)
        np.testing.assert_allclose(ing.dataset.Y, [[np.log(9)]])
        assert ing.dataset.p == 0

    def test_pseudo_count(self, tmp_path):
        path = _write(tmp_path / "z.csv", ["sample_id", "a", "b", "c"], [["s1", 0, 5, 5], ["s2", 60, 20, 20]])
        ing = ingest_csv(path, taxa=["a", "b", "c"], predictors=[], min_samples=0,
                         min_relative_abundance=0.5, center=False)
        assert ing.focal == ("a",)
        np.testing.assert_allclose(ing.dataset.Y[:, 0], [np.log(0.5 / 10), np.log(60 / 40)])

    def test_categorical(self, tmp_path):
        rows = [[f"s{i}", lvl, 60, 40] for i, lvl in enumerate(["b", "a", "c", "a"])]
        path = _write(tmp_path / "c.csv", ["sample_id", "grp", "a", "b"], rows)
        ing = ingest_csv(path, taxa=["a", "b"], min_samples=0, min_relative_abundance=0.5, center=False)
        assert ing.predictors == ("grp=b", "grp=c")
        np.testing.assert_array_equal(ing.dataset.X, [[1, 0], [0, 0], [0, 1], [0, 0]])

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("sample_id,a,b\ns1,1,2\ns2,3\n")
        with pytest.raises(ValueError, match="line 3"):
            ingest_csv(path, taxa=["a", "b"], predictors=[])

    def test_non_numeric(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("sample_id,a,b\ns1,1,2\ns2,3,x\n")
        with pytest.raises(ValueError, match="line 3"):
            ingest_csv(path, taxa=["a", "b"], predictors=[])

    def test_negative(self, tmp_path):
        path = tmp_path / "neg.csv"
        path.write_text("sample_id,a,b\ns1,1,2\ns2,-3,1\n")
        with pytest.raises(ValueError, match="line 3: negative"):
            ingest_csv(path, taxa=["a", "b"], predictors=[])

    def test_missing_column(self, tmp_path):
        path = _write(tmp_path / "m.csv", ["sample_id", "a"], [["s1", 1]])
        with pytest.raises(ValueError, match="missing column"):
            ingest_csv(path, taxa=["a", "zz"], predictors=[])

    def test_bundled(self):
        ing = ingest_csv(bundled_gut_csv())
        assert ing.dataset.n == 178
        assert ing.focal[:2] == ("Bacteroides", "Clostridium")
        assert ing.dataset.k == 10 and ing.dataset.p == 8
        np.testing.assert_allclose(ing.dataset.Y.mean(axis=0), 0, atol=1e-12)

    def test_bundled_is_regenerable(self):
        header, rows = make_synthetic_gut()
        with open(bundled_gut_csv(), newline="") as fh:
            stored = list(csv.reader(fh))
        assert stored[0] == header and stored[1:] == rows


@pytest.fixture(scope="module")
def data():
    return ingest_csv(bundled_gut_csv()).dataset


class TestAnalyzeReal:
    def test_cells(self, data):
        priors = real_data_priors(mle(data), lambda_scales=(0.1,))
        out = analyze_real(data, priors, (0, 1), 500, 3)
        assert [(r.prior, r.arm) for r in out] == [
            ("mgig", "design"), ("mgig", "null"), ("wishart", "design"), ("wishart", "null")
        ]
        for r in out:
            assert r.rho.shape == (500,) and np.all(np.abs(r.rho) < 1)

    def test_mgig_experiment_narrows(self, data):
        priors = real_data_priors(mle(data), families=("mgig",), lambda_scales=(0.1,))
        out = {r.arm: r for r in analyze_real(data, priors, (0, 1), 20_000, 1)}

        def iqr(r):
            order = np.argsort(r.rho)
            cw = np.cumsum(r.weights[order]) / r.weights.sum()
            return np.interp(0.75, cw, r.rho[order]) - np.interp(0.25, cw, r.rho[order])

        assert iqr(out["design"]) < iqr(out["null"])

    def test_bad_pair(self, data):
        priors = real_data_priors(mle(data), lambda_scales=(1.0,))
        with pytest.raises(IndexError):
            analyze_real(data, priors, (0, data.k), 10, 0)

    def test_deterministic(self, data):
        priors = real_data_priors(mle(data), lambda_scales=(1.0,))
        a = analyze_real(data, priors, (0, 1), 50, 9)
        b = analyze_real(data, priors, (0, 1), 50, 9)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.rho, y.rho)


class TestConfig:
    def test_roundtrip(self, tmp_path):
        path = tmp_path / "c.ini"
        path.write_text("[experiment]\nk = 3\np = 2\nsample_sizes = 20, 40\npriors = mgig-certain\nbias = yes\n")
        cfg = read_config(path, "experiment", ExperimentConfig)
        assert cfg.k == 3 and cfg.sample_sizes == (20, 40) and cfg.priors == ("mgig-certain",) and cfg.bias

    def test_toy_floats(self, tmp_path):
        path = tmp_path / "t.ini"
        path.write_text("[toy]\neffect = 2.5\nruns = 3\n")
        cfg = read_config(path, "toy", ToyConfig)
        assert cfg.effect == 2.5 and cfg.runs == 3

    @pytest.mark.parametrize("text, match", [
        ("[experiment]\nbogus = 1\n", "unknown config key"),
        ("[other]\nk = 1\n", "unknown config section"),
        ("[experiment]\nk = three\n", "bad value"),
        ("[experiment]\nreplicates = 0\n", "replicates"),
    ])
    def test_errors(self, tmp_path, text, match):
        path = tmp_path / "e.ini"
        path.write_text(text)
        with pytest.raises(ConfigError, match=match):
            read_config(path, "experiment", ExperimentConfig)

import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from chaindesign.cli import main

SMALL_CFG = """[experiment]
model_id = 1
k = 3
p = 2
sample_sizes = 20, 40
replicates = 2
priors = wishart-certain, mgig-certain
mc_count = 200
"""


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_toy_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["toy", "--seed", "7", "--draws", "100", "--out", str(a)]) == 0
    assert main(["--seed", "7", "toy", "--draws", "100", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    rows = _rows(a)
    assert rows[0] == ["prior", "lambda_level", "experiment", "run", "draw_index", "weight", "value"]
    assert len(rows) == 1 + 8 * 100
    assert json.loads((tmp_path / "a.meta.json").read_text())["config"]["seed"] == 7


@pytest.mark.parametrize("command", ["simulate-kl", "simulate-stein"])
def test_simulate(tmp_path, command):
    cfg = tmp_path / "small.cfg"
    cfg.write_text(SMALL_CFG)
    out, summary = tmp_path / "out.csv", tmp_path / "summary.csv"
    assert main([command, "--config", str(cfg), "--out", str(out), "--summary", str(summary)]) == 0
    rows = _rows(out)
    assert rows[0] == ["model_id", "prior", "lambda_level", "design", "n", "replicate", "metric", "value"]
    assert len(rows) == 1 + 2 * 2 * 2 * 2
    assert all(np.isfinite(float(r[-1])) for r in rows[1:])
    assert _rows(summary)[0][-3:] == ["mean", "q025", "q975"]
    meta = json.loads(out.with_suffix(".meta.json").read_text())
    assert "conventions" in meta and meta["config"]["k"] == 3

    again = tmp_path / "again.csv"
    assert main([command, "--config", str(cfg), "--threads", "3", "--out", str(again)]) == 0
    assert again.read_bytes() == out.read_bytes()


def test_fit_bundled(tmp_path):
    out = tmp_path / "fit.csv"
    argv = ["fit", "--pair", "Bacteroides,Clostridium", "--prior", "mgig", "--lambda-scale", "0.1",
            "--draws", "200", "--seed", "1", "--out", str(out)]
    assert main(argv) == 0
    rows = _rows(out)
    assert rows[0] == ["prior", "lambda_scale", "arm", "draw_index", "weight", "value"]
    assert {r[2] for r in rows[1:]} == {"design", "null"}
    assert len(rows) == 1 + 2 * 200
    meta = json.loads(out.with_suffix(".meta.json").read_text())
    assert meta["k"] == 10 and meta["n"] == 178


def test_fit_unknown_taxon(capsys):
    assert main(["fit", "--pair", "Bacteroides,Nonexistum", "--draws", "10"]) == 1
    assert "not focal" in capsys.readouterr().err


@pytest.mark.filterwarnings("ignore::chaindesign.priors.LogConcavityWarning")
def test_design_eval(tmp_path):
    design = tmp_path / "x.csv"
    np.savetxt(design, np.tile(3 * np.eye(3), (4, 1)), delimiter=",")
    out = tmp_path / "eval.csv"
    assert main(["design-eval", "--design", str(design), "--prior", "mgig", "--out", str(out)]) == 0
    vals = dict(_rows(out)[1:])
    assert vals["depends_on_design"] == "1"
    assert float(vals["bound_minus_gain_min_eig"]) >= -1e-10
    assert main(["design-eval", "--design", str(design), "--prior", "wishart", "--out", str(out)]) == 0
    assert dict(_rows(out)[1:])["depends_on_design"] == "0"


def test_sample_mgig(tmp_path):
    np.savetxt(tmp_path / "psi.csv", np.eye(2), delimiter=",")
    np.savetxt(tmp_path / "phi.csv", 2 * np.eye(2), delimiter=",")
    out = tmp_path / "draws.csv"
    argv = ["sample-mgig", "--lambda", "3", "--psi-file", str(tmp_path / "psi.csv"),
            "--phi-file", str(tmp_path / "phi.csv"), "--count", "50", "--seed", "4", "--out", str(out)]
    assert main(argv) == 0
    rows = _rows(out)
    assert rows[0] == ["draw_index", "weight", "row", "col", "value"]
    assert len(rows) == 1 + 50 * 3
    w = np.array([float(r[1]) for r in rows[1:]])
    assert np.all((w > 0) & (w <= 1))
    first = out.read_bytes()
    assert main(argv) == 0
    assert out.read_bytes() == first


def test_sample_mgig_bad_lambda(tmp_path, capsys):
    np.savetxt(tmp_path / "m.csv", np.eye(3), delimiter=",")
    argv = ["sample-mgig", "--lambda", "0.5", "--psi-file", str(tmp_path / "m.csv"),
            "--phi-file", str(tmp_path / "m.csv")]
    assert main(argv) == 1
    assert "increase lambda" in capsys.readouterr().err


def test_config_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("[experiment]\nfoo = 1\n")
    assert main(["simulate-kl", "--config", str(cfg)]) == 1
    assert "unknown config key" in capsys.readouterr().err


def test_missing_file(capsys):
    assert main(["simulate-kl", "--config", "/nonexistent/x.cfg"]) == 1


@pytest.mark.parametrize("argv", [["nope"], ["toy", "--bogus"], [], ["sample-mgig"]])
def test_usage_errors(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "chaindesign.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "chaindesign" in res.stdout

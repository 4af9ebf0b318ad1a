import json

import numpy as np
import pandas as pd
import pytest

from synthtx.cli.app import main
from synthtx.config import RunConfig


def read_report(path):
    lines = path.read_text(encoding="utf-8").splitlines()
    return dict(line.split("=", 1) for line in lines)


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "config.json"
    config = {
        "seed": 3,
        "simulation": {
            "sizes": [80],
            "replicates": 1,
            "methods": ["uniform", "pool"],
            "workers": 1,
        },
    }
    path.write_text(json.dumps(config), encoding="utf-8")
    return path


@pytest.fixture
def simulated(tmp_path, config_path):
    out_dir = tmp_path / "sim"
    assert main(["simulate", "--config", str(config_path), "--out-dir", str(out_dir)]) == 0
    return out_dir


def test_simulate_writes_dataset_and_truth(simulated):
    truth = read_report(simulated / "truth.txt")

    frame = pd.read_csv(simulated / "dataset.csv")
    assert list(frame.columns) == ["pop", "arm", "y", "x1"]
    assert len(frame) == 80 * 7
    assert set(json.loads(truth["params"])) == {"a", "b", "c", "d", "e", "f", "g", "noise_sd"}
    assert truth["seed"] == "3"


def test_estimate_is_reproducible(tmp_path, simulated):
    out_dir = tmp_path / "est"
    args = ["estimate", "--input", str(simulated / "dataset.csv"), "--out-dir", str(out_dir)]

    assert main(args) == 0
    first = (out_dir / "report.txt").read_bytes()
    assert main(args) == 0
    assert (out_dir / "report.txt").read_bytes() == first

    report = read_report(out_dir / "report.txt")
    assert report["method"] == "sieve"
    assert float(report["ci_lo"]) <= float(report["theta_hat"]) <= float(report["ci_hi"])
    assert RunConfig.from_dict(json.loads(report["config"])).input == str(simulated / "dataset.csv")


def test_estimate_from_report(tmp_path, simulated):
    out_dir = tmp_path / "est"
    path = out_dir / "report.txt"
    args = ["estimate", "--input", str(simulated / "dataset.csv"), "--out-dir", str(out_dir)]
    main([*args, "--method", "pool"])
    first = path.read_bytes()

    assert main(["estimate", "--from-report", str(path)]) == 0
    assert path.read_bytes() == first
    assert read_report(path)["method"] == "pool"


def test_pointwise_report_has_no_interval(tmp_path, simulated):
    out_dir = tmp_path / "est"
    args = ["estimate", "--input", str(simulated / "dataset.csv"), "--out-dir", str(out_dir)]

    assert main([*args, "--method", "point_constrained"]) == 0
    report = read_report(out_dir / "report.txt")
    assert report["variance"] == "NA"
    assert report["ci_lo"] == "NA"


def test_estimate_failure_writes_error_report(tmp_path):
    out_dir = tmp_path / "est"

    args = ["estimate", "--input", str(tmp_path / "missing.csv"), "--out-dir", str(out_dir)]
    assert main(args) == 1
    report = read_report(out_dir / "report.txt")
    assert report["error"] == "FileNotFoundError"
    assert "config" in report


def test_curves(tmp_path, simulated):
    out_dir = tmp_path / "curves"
    args = ["curves", "--input", str(simulated / "dataset.csv"), "--out-dir", str(out_dir)]

    assert main([*args, "--grid", "-1", "3", "11"]) == 0
    weights = pd.read_csv(out_dir / "weights.csv")
    cmmd = pd.read_csv(out_dir / "cmmd.csv")

    assert len(weights) == 33
    assert set(weights.method) == {"sieve", "point", "uniform"}
    assert list(cmmd.columns) == ["x", "d_sieve", "d_point", "d_uniform"]
    assert len(cmmd) == 11
    assert np.all(cmmd.d_point <= cmmd.d_uniform + 1e-8)


@pytest.mark.parametrize("grid", [["a", "3", "11"], ["3", "-1", "11"], ["-1", "3", "1"]])
def test_malformed_grid_exits_with_two(tmp_path, simulated, grid):
    args = ["curves", "--input", str(simulated / "dataset.csv"), "--out-dir", str(tmp_path)]
    assert main([*args, "--grid", *grid]) == 2


def test_validate(tmp_path, simulated, capsys):
    args = ["validate", "--input", str(simulated / "dataset.csv"), "--out-dir", str(tmp_path)]
    assert main(args) == 0
    assert capsys.readouterr().out.startswith("valid:")

    bad = tmp_path / "bad.csv"
    bad.write_text("pop,arm,y,x1\n0,1,1.0,0.0\n", encoding="utf-8")
    assert main(["validate", "--input", str(bad), "--out-dir", str(tmp_path)]) == 1
    assert "line 2" in capsys.readouterr().out


def test_malformed_csv_exits_with_one(tmp_path, capsys):
    bad = tmp_path / "ragged.csv"
    bad.write_text("pop,arm,y,x1\n0,0,1.0,0.1\n1,1,2.0,0.5,9\n", encoding="utf-8")
    args = ["--input", str(bad), "--out-dir", str(tmp_path / "out")]

    assert main(["validate", *args]) == 1
    assert "line 3" in capsys.readouterr().out
    assert main(["estimate", *args]) == 1
    assert read_report(tmp_path / "out" / "report.txt")["error"] == "DatasetError"


def test_monte_carlo_command(tmp_path, config_path):
    out_dir = tmp_path / "mc"

    assert main(["mc", "--config", str(config_path), "--out-dir", str(out_dir)]) == 0
    table = pd.read_csv(out_dir / "mre_table.csv")
    assert set(table.method) == {"uniform", "pool"}
    assert (out_dir / "replicates.csv").exists()


def test_bad_config_exits_with_two(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"bandwidth": 1.0}), encoding="utf-8")

    assert main(["estimate", "--config", str(path)]) == 2

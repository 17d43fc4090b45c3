import subprocess
import sys

import pytest

from qrisk.cli import main


def _body(text):
    return [ln for ln in text.splitlines() if not ln.startswith("#")]


@pytest.fixture
def data_file(tmp_path):
    path = tmp_path / "d.csv"
    assert main(["simulate", "--dgp", "1", "--n", "200", "--p", "8", "--seed", "4", "--out", str(path)]) == 0
    return path


def test_simulate_format(capsys):
    assert main(["simulate", "--dgp", "1", "--n", "5", "--p", "4", "--seed", "1"]) == 0
    out = capsys.readouterr().out
    body = _body(out)
    assert body[0] == "y,z1,z2,z3,z4"
    assert len(body) == 6
    assert "# seed = 1" in out


def test_seed_is_mandatory(capsys, data_file):
    assert main(["simulate", "--dgp", "1", "--n", "5"]) == 1
    assert main(["cv", "--data", str(data_file), "--tau", "0.5"]) == 1
    assert main(["oracle", "--dgp", "1", "--tau", "0.5", "--n", "50"]) == 1
    assert "--seed" in capsys.readouterr().err


def test_fit_without_data_is_usage_error(capsys):
    assert main(["fit"]) == 1
    err = capsys.readouterr().err
    assert "usage:" in err and "--data" in err


def test_unknown_flag_rejected(capsys):
    assert main(["simulate", "--dgp", "1", "--n", "5", "--seed", "1", "--bogus"]) == 1
    assert "usage:" in capsys.readouterr().err


def test_fit_row(capsys, data_file):
    assert main(["fit", "--data", str(data_file), "--tau", "0.5", "--cols", "1,2,3,4", "--intercept"]) == 0
    head, row = _body(capsys.readouterr().out)
    cols = head.split(",")
    assert cols[:5] == ["tau", "model", "objective", "duality_gap", "iterations"]
    assert cols[5:] == ["theta_intercept", "theta_z1", "theta_z2", "theta_z3", "theta_z4"]
    vals = row.split(",")
    assert len(vals) == len(cols)
    assert len(vals[2].replace("-", "").replace(".", "").split("e")[0].lstrip("0")) <= 17


def test_risk_row_and_bandwidth_override(capsys, data_file):
    assert main(["risk", "--data", str(data_file), "--tau", "0.5", "--cols", "1,2"]) == 0
    head, row = _body(capsys.readouterr().out)
    assert head == "tau,model,h,in_sample,b_hat,pr_debiased,d0_min_eig"
    t, m, h, ins, b, pr, eig = row.split(",")
    assert float(pr) == pytest.approx(float(ins) + float(b))
    assert main(["risk", "--data", str(data_file), "--tau", "0.5", "--cols", "1,2", "--bandwidth", "1.5"]) == 0
    assert _body(capsys.readouterr().out)[1].split(",")[2] == "1.5"


def test_numerical_failure_exit_code(capsys, data_file, tmp_path):
    # median of an even sample: the fit sits inside [10, 20], so no residual is within h = 1
    flat = tmp_path / "flat.csv"
    flat.write_text("y,z1\n0,0\n10,0\n20,0\n30,0\n")
    code = main(["risk", "--data", str(flat), "--tau", "0.5", "--bandwidth", "1"])
    assert code == 2
    assert "singular density sandwich: widen bandwidth or shrink model" in capsys.readouterr().err
    code = main(["fit", "--data", str(data_file), "--tau", "0.5", "--cols", "1,2,3", "--max-iter", "1"])
    assert code == 2


def test_cv_and_oracle_rows(capsys, data_file):
    assert main(["cv", "--data", str(data_file), "--tau", "0.5", "--cols", "1,2", "--k", "5", "--seed", "2"]) == 0
    head, row = _body(capsys.readouterr().out)
    assert head.split(",")[2:4] == ["k", "cv_risk"] and row.split(",")[2] == "5"
    assert main(["oracle", "--dgp", "1", "--tau", "0.5", "--cols", "1,2,3,4", "--n", "60", "--reps", "4",
                 "--seed", "7", "--eval-samples", "10", "--p", "6"]) == 0
    head, row = _body(capsys.readouterr().out)
    assert {"pr", "pr_se", "optimism", "optimism_se"} <= set(head.split(","))


def test_experiment_twice_identical(tmp_path):
    cfg = tmp_path / "c.txt"
    cfg.write_text("n = 60\np = 8\nreps = 3\ncollection = 1,2; 3\nestimators = trace, cv(3)\nseed = 5\n")
    outs = []
    for i, workers in enumerate(["1", "1", "2"]):
        out = tmp_path / f"o{i}.csv"
        assert main(["experiment", "--config", str(cfg), "--workers", workers, "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1] == outs[2]


def test_experiment_needs_seed(tmp_path, capsys):
    cfg = tmp_path / "c.txt"
    cfg.write_text("reps = 1\ncollection = 1\n")
    assert main(["experiment", "--config", str(cfg)]) == 1
    assert "seed" in capsys.readouterr().err


def test_experiment_failure_writes_partial_csv(tmp_path, capsys):
    cfg = tmp_path / "c.txt"
    cfg.write_text("n = 3\np = 5\nreps = 1\ncollection = 1,2,3,4,5\nseed = 1\n")
    out = tmp_path / "o.csv"
    assert main(["experiment", "--config", str(cfg), "--out", str(out)]) == 2
    text = out.read_text()
    assert "# FAILED: replication 0" in text


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "qrisk.cli", "simulate", "--dgp", "3", "--n", "3", "--p", "4",
                           "--seed", "2"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert _body(proc.stdout)[0] == "y,z1,z2,z3,z4"

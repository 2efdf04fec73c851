import json
import subprocess
import sys

import numpy as np
import pytest

from ttgp.cli import run
from ttgp.gp import load_model
from ttgp.harness import sample_gp_function, sample_omega
from ttgp.observations import ObservationSet, rescale_indices, save_observations
from ttgp.serialize import load_tt


@pytest.fixture
def obs_file(tmp_path):
    modes = (6, 6, 6)
    idx, _ = sample_omega(modes, 80, 0, seed=0)
    f = sample_gp_function("rbf", 1.0, 3, seed=0)
    save_observations(ObservationSet(modes, idx, f(rescale_indices(idx, modes))), tmp_path / "obs.csv")
    return tmp_path / "obs.csv"


def error_doc(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def read_all(paths):
    return [p.read_bytes() for p in paths]


def test_init_then_eval_matches_gp_mean(tmp_path, obs_file, capsys):
    out = tmp_path / "y0.tt"
    assert run(["init", "--obs", str(obs_file), "--out", str(out), "--gp-out", str(tmp_path / "gp.json"),
                "--gp-starts", "1"]) == 0
    report = json.loads((tmp_path / "y0.tt.report.json").read_text())
    assert report["config"]["seed"] == 0 and report["command"] == "init"
    capsys.readouterr()
    assert run(["eval", "--tt", str(out), "--index", "2,3,4", "--index", "6,1,1"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "i_1,i_2,i_3,value"
    got = np.array([float(line.split(",")[-1]) for line in lines[1:]])
    model = load_model(tmp_path / "gp.json")
    want = model.predict_mean(rescale_indices(np.array([[2, 3, 4], [6, 1, 1]]), (6, 6, 6)))
    tt = load_tt(out)
    from ttgp.tt import tt_norm
    assert np.abs(got - want).max() <= 1e-6 * tt_norm(tt)


def test_complete_zero_iters_is_identity(tmp_path, obs_file):
    src = tmp_path / "start.tt"
    assert run(["complete", "--obs", str(obs_file), "--init", "random", "--rank", "2", "--iters", "3",
                "--out", str(src)]) == 0
    dst = tmp_path / "same.tt"
    assert run(["complete", "--obs", str(obs_file), "--init", "file", "--tt", str(src), "--iters", "0",
                "--out", str(dst)]) == 0
    assert src.read_bytes() == dst.read_bytes()


def test_complete_is_deterministic(tmp_path, obs_file):
    out = tmp_path / "c.tt"
    argv = ["complete", "--obs", str(obs_file), "--init", "gp", "--iters", "5", "--out", str(out),
            "--gp-starts", "1"]
    files = [out, tmp_path / "c.tt.trace.csv", tmp_path / "c.tt.report.json"]
    assert run(argv) == 0
    first = read_all(files)
    assert run(argv) == 0
    assert read_all(files) == first


def test_sgd_trace(tmp_path, obs_file):
    out = tmp_path / "s.tt"
    assert run(["complete", "--obs", str(obs_file), "--init", "random", "--method", "sgd", "--iters", "4",
                "--out", str(out), "--timing"]) == 0
    lines = (tmp_path / "s.tt.trace.csv").read_text().splitlines()
    assert lines[0] == "iter,objective,seconds" and len(lines) == 6
    assert lines[-1].split(",")[2] != ""


def test_cross_builtin(tmp_path, capsys):
    out = tmp_path / "sum.tt"
    assert run(["cross", "--function", "sum", "--modes", "5,5,5,5", "--r0", "1", "--out", str(out)]) == 0
    assert load_tt(out).ranks == (1, 2, 2, 2, 1)
    report = json.loads((tmp_path / "sum.tt.report.json").read_text())
    assert report["adapted"] is True


def test_cross_from_gp(tmp_path, obs_file):
    assert run(["init", "--obs", str(obs_file), "--out", str(tmp_path / "a.tt"),
                "--gp-out", str(tmp_path / "gp.json"), "--gp-starts", "1"]) == 0
    assert run(["cross", "--gp", str(tmp_path / "gp.json"), "--modes", "6,6,6", "--rank", "3",
                "--out", str(tmp_path / "b.tt")]) == 0


def test_experiment(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"d": 3, "n": 5, "N": 40, "N_test": 20, "n_iters": 3, "gp_starts": 1,
                               "seeds": [0, 1]}))
    report = tmp_path / "r.csv"
    assert run(["experiment", "--config", str(cfg), "--report", str(report)]) == 0
    first = report.read_bytes()
    rows = first.decode().splitlines()
    assert len(rows) == 1 + 2 * 2
    assert run(["experiment", "--config", str(cfg), "--report", str(report)]) == 0
    assert report.read_bytes() == first


def test_missing_observations(tmp_path, capsys):
    missing = tmp_path / "nope.csv"
    code = run(["init", "--obs", str(missing), "--out", str(tmp_path / "x.tt")])
    assert code == 3
    doc = error_doc(capsys)
    assert doc["path"] == str(missing) and doc["exit_code"] == 3


def test_unknown_flag(capsys):
    assert run(["eval", "--frobnicate"]) == 2
    assert error_doc(capsys)["error"] == "usage"


def test_corrupt_tt(tmp_path, capsys):
    bad = tmp_path / "bad.tt"
    bad.write_bytes(b"TTv1\x01")
    assert run(["eval", "--tt", str(bad), "--index", "1"]) == 3
    assert "bad.tt" in error_doc(capsys)["message"]


def test_index_out_of_range(tmp_path, capsys):
    out = tmp_path / "sum.tt"
    run(["cross", "--function", "sum", "--modes", "3,3", "--out", str(out)])
    assert run(["eval", "--tt", str(out), "--index", "4,1"]) == 4
    assert error_doc(capsys)["error"] == "DomainError"


def test_eval_from_file(tmp_path):
    out = tmp_path / "p.tt"
    run(["cross", "--function", "prod_sin", "--modes", "4,4", "--out", str(out)])
    (tmp_path / "idx.csv").write_text("i_1,i_2\n1,2\n4,4\n")
    assert run(["eval", "--tt", str(out), "--indices", str(tmp_path / "idx.csv"),
                "--out", str(tmp_path / "v.csv")]) == 0
    assert len((tmp_path / "v.csv").read_text().splitlines()) == 3


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "ttgp.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "exit codes" in res.stdout.lower()

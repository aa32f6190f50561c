import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from sparselift.cli import build_parser, fixture_path, main
from sparselift.experiments import read_results
from sparselift.problem import load_instance


def _run(*args):
    return subprocess.run([sys.executable, "-m", "sparselift", *args], capture_output=True, text=True,
                          timeout=600)


def test_solve_fixture_subprocess():
    proc = _run("solve", "--fixture")
    assert proc.returncode == 0, proc.stderr
    out = json.loads(proc.stdout)
    assert out["rel_error"] <= 0.01
    assert out["converged"]


def test_missing_required_flag_is_usage_error():
    proc = _run("solve")
    assert proc.returncode == 2
    assert "usage:" in proc.stderr
    proc = _run("make-instance", "--L", "8")
    assert proc.returncode == 2 and "usage:" in proc.stderr


def test_bad_values_map_to_usage_error(capsys):
    assert main(["phase-transition", "--trials", "0"]) == 2
    assert "trials" in capsys.readouterr().err
    assert main(["certify", "--fixture", "--P", "2"]) == 2
    assert main(["phase-transition", "--ks", "1,x"]) == 2


def test_runtime_failure_exit_one(tmp_path, capsys):
    assert main(["solve", "--instance", str(tmp_path / "nope.json")]) == 1
    assert "cannot load instance" in capsys.readouterr().err


def test_help_lists_flags(capsys):
    assert main(["cdma", "--help"]) == 0
    text = capsys.readouterr().out
    for flag in ("--seed", "--trials", "--snrs", "--config-file", "--out", "--jobs", "--full"):
        assert flag in text


def test_cdma_same_seed_same_errors(tmp_path):
    cols = []
    for tag in ("a", "b"):
        out = tmp_path / f"{tag}.csv"
        proc = _run("cdma", "--seed", "7", "--snrs", "20,40", "--trials", "2", "--jobs", "1",
                    "--out", str(out))
        assert proc.returncode == 0, proc.stderr
        cols.append([r.rel_error for r in read_results(out)])
    assert cols[0] == cols[1] and len(cols[0]) == 4


def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"kind": "phase_transition", "ks": [1], "ns": [1, 2], "L": 32, "N": 48,
                               "trials": 3, "matrices": ["fourier"]}))
    out = tmp_path / "pt.csv"
    assert main(["phase-transition", "--config-file", str(cfg), "--trials", "1", "--jobs", "1",
                 "--out", str(out)]) == 0
    recs = read_results(out)
    assert {(r.k, r.n) for r in recs} == {(1, 1), (1, 2)}
    assert len(recs) == 2
    side = json.loads((tmp_path / "pt.csv.json").read_text())
    assert side["config"]["trials"] == 1 and side["config"]["L"] == 32
    capsys.readouterr()
    cfg.write_text(json.dumps({"kind": "cdma"}))
    assert main(["phase-transition", "--config-file", str(cfg)]) == 2
    cfg.write_text(json.dumps({"bogus": 1}))
    assert main(["phase-transition", "--config-file", str(cfg)]) == 2


def test_make_instance_solve_certify_round_trip(tmp_path, capsys):
    inst_path = tmp_path / "inst.json"
    assert main(["make-instance", "--L", "32", "--N", "40", "--k", "1", "--n", "2", "--seed", "3",
                 "--out", str(inst_path)]) == 0
    capsys.readouterr()
    digest = hashlib.sha256(inst_path.read_bytes()).hexdigest()
    sol = tmp_path / "sol.json"
    assert main(["solve", "--instance", str(inst_path), "--out", str(sol)]) == 0
    printed = json.loads(capsys.readouterr().out)
    saved = json.loads(sol.read_text())
    assert saved["summary"] == printed and printed["rel_error"] <= 1e-6
    assert main(["certify", "--instance", str(inst_path)]) == 0
    cert = json.loads(capsys.readouterr().out)
    assert cert["passed"] is True and cert["partition_max_deviation"] is None
    assert main(["certify", "--instance", str(inst_path), "--P", "2", "--Q", "16"]) == 0
    assert json.loads(capsys.readouterr().out)["method"] == "golfing"
    assert hashlib.sha256(inst_path.read_bytes()).hexdigest() == digest


def test_certify_rejects_noisy_instance(tmp_path, capsys):
    p = tmp_path / "noisy.json"
    assert main(["make-instance", "--L", "16", "--N", "20", "--k", "1", "--n", "1", "--snr", "20",
                 "--out", str(p)]) == 0
    assert main(["certify", "--instance", str(p)]) == 2


@pytest.mark.parametrize("solver", ["bpdn", "l21", "l1_nuclear"])
def test_other_solvers_on_small_instance(tmp_path, capsys, solver):
    p = tmp_path / "i.json"
    main(["make-instance", "--L", "32", "--N", "40", "--k", "1", "--n", "1", "--seed", "1", "--out", str(p)])
    capsys.readouterr()
    assert main(["solve", "--instance", str(p), "--solver", solver, "--tol", "1e-8"]) == 0
    assert json.loads(capsys.readouterr().out)["rel_error"] <= 1e-4


def test_fixture_is_bundled():
    inst = load_instance(fixture_path())
    assert inst.A.shape == (128, 256) and inst.B.shape == (128, 3) and inst.noiseless
    assert np.count_nonzero(inst.x0) == 3


def test_parser_subcommands():
    names = set(build_parser()._subparsers._group_actions[0].choices)
    assert names == {"make-instance", "solve", "certify", "phase-transition", "minimal-l", "doa", "cdma"}

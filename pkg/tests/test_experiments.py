import dataclasses
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sparselift.experiments import (CSV_FIELDS, ExperimentConfig, ExperimentRecord, cdma_curve, doa_accuracy,
                                    linear_fit, lmin_curves, read_results, run_experiment, run_minimal_l,
                                    run_phase_transition, success_by_cell, trial_seed, write_results)


def _strip(records):
    return [dataclasses.replace(r, wall_ms=0.0) for r in records]


def _rec(**kw):
    base = dict(kind="phase_transition", matrix="fourier", solver="bp", k=1, n=1, L=32, N=64, trial=0,
                seed=1, rel_error=1e-9, success=True, iterations=10, converged=True)
    base.update(kw)
    return ExperimentRecord(**base)


@pytest.mark.parametrize("bad", [
    {"kind": "sweep"}, {"trials": 0}, {"solver": "cvx"}, {"matrices": ()}, {"matrices": ("bernoulli",)},
    {"ks": ()}, {"Ls": (40, 20)}, {"ks": (0,)}, {"lam": 0.0}, {"search": "random"}, {"lmin_rate": 0.0},
    {"jobs": 0},
])
def test_config_rejects_bad_values(bad):
    fields = {"kind": "phase_transition"} | bad
    with pytest.raises(ValueError):
        ExperimentConfig(**fields)


def test_config_defaults_per_kind():
    pt = ExperimentConfig.for_kind("phase_transition")
    assert pt.ks == tuple(range(1, 16, 2)) and pt.trials == 5 and pt.matrices == ("gaussian", "fourier")
    full = ExperimentConfig.for_kind("phase_transition", full=True)
    assert full.ks == tuple(range(1, 16)) and full.trials == 10
    ml = ExperimentConfig.for_kind("minimal_l", full=True)
    assert ml.Ls[0] == 10 and ml.Ls[-1] == 400 and ml.search == "grid" and ml.N == 512
    doa = ExperimentConfig.for_kind("doa")
    assert (doa.L, doa.N, doa.ks, doa.spacing) == (64, 180, (4,), 1.0)
    cd = ExperimentConfig.for_kind("cdma", trials=2)
    assert cd.trials == 2 and cd.solver == "bpdn" and cd.snrs[-1] == 80


def test_config_dict_round_trip():
    cfg = ExperimentConfig.for_kind("cdma", snrs=(10.0, 20.0))
    again = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"kind": "cdma", "snr": 3})


def test_trial_seed_properties():
    a = trial_seed(0, "phase_transition", "fourier", 3, 3, 128, 256, math.inf, 0)
    assert a == trial_seed(0, "phase_transition", "fourier", 3, 3, 128, 256, math.inf, 0)
    assert 0 <= a < 2**63
    seeds = {trial_seed(7, "x", t) for t in range(2000)}
    assert len(seeds) == 2000
    assert trial_seed(1, "x", 0) != trial_seed(0, "x", 0)


@given(st.floats(allow_nan=False), st.floats(0, 1e6, allow_nan=False), st.booleans(),
       st.integers(0, 2**63 - 1), st.text(alphabet="abc=;.,0123456789", max_size=20))
def test_record_row_round_trip(snr, err, ok, seed, detail):
    r = _rec(snr_db=snr, rel_error=err, success=ok, seed=seed, detail=detail, wall_ms=1.25)
    back = ExperimentRecord.from_row(r.row())
    assert back == r
    assert tuple(r.row()) == CSV_FIELDS


def test_header_only_csv(tmp_path):
    path = tmp_path / "empty.csv"
    write_results([], path)
    assert path.read_text().strip() == ",".join(CSV_FIELDS)
    assert read_results(path) == []
    side = json.loads((tmp_path / "empty.csv.json").read_text())
    assert side["config"] is None and "version" in side


def test_read_rejects_foreign_csv(tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_results(path)
    with pytest.raises(OSError):
        read_results(tmp_path / "missing.csv")


def _tiny_pt(**kw):
    fields = dict(ks=(1, 2), ns=(1,), L=32, N=48, trials=2) | kw
    return ExperimentConfig.for_kind("phase_transition", **fields)


def test_phase_transition_tiny_and_deterministic(tmp_path):
    cfg = _tiny_pt(out=str(tmp_path / "pt.csv"))
    recs = run_experiment(cfg)
    assert len(recs) == 2 * 2 * 1 * 2
    assert all(r.success for r in recs if r.k == 1)
    again = run_phase_transition(_tiny_pt())
    assert _strip(again) == _strip(recs)
    loaded = read_results(tmp_path / "pt.csv")
    assert _strip(loaded) == _strip(recs)
    side = json.loads((tmp_path / "pt.csv.json").read_text())
    assert ExperimentConfig.from_dict(side["config"]) == cfg


def test_trial_subset_reproduces_independently():
    full = run_phase_transition(_tiny_pt())
    one = run_phase_transition(_tiny_pt(matrices=("fourier",), ks=(2,)))
    pick = [r for r in full if r.matrix == "fourier" and r.k == 2]
    assert _strip(one) == _strip(pick)


def test_solver_not_part_of_seed():
    a = run_phase_transition(_tiny_pt(ks=(1,)))
    b = run_phase_transition(_tiny_pt(ks=(1,), solver="l21"))
    assert [r.seed for r in a] == [r.seed for r in b]


def test_parallel_matches_serial():
    assert _strip(run_phase_transition(_tiny_pt(jobs=2))) == _strip(run_phase_transition(_tiny_pt()))


def test_minimal_l_bisect_agrees_with_grid():
    kw = dict(ks=(1,), ns=(1, 2), Ls=(8, 16, 24, 32, 48, 64), N=32, trials=3)
    bis = run_minimal_l(ExperimentConfig.for_kind("minimal_l", **kw))
    grid = run_minimal_l(ExperimentConfig.for_kind("minimal_l", search="grid", **kw))
    cb = lmin_curves(bis, 0.9, 3)
    cg = lmin_curves(grid, 0.9, 3)
    assert cb == cg
    assert len({r.L for r in bis}) <= len({r.L for r in grid})


def test_lmin_curves_running_max():
    recs = []
    for (k, n, L, ok) in [(5, 1, 40, False), (5, 1, 60, True), (5, 2, 40, True), (5, 3, 80, True),
                          (5, 4, 400, False)]:
        recs.append(_rec(kind="minimal_l", group="fixed_k", k=k, n=n, L=L, success=ok))
    curves = lmin_curves(recs, 0.9, 1)
    assert curves == {"fixed_k": [(5, 60), (10, 60), (15, 80)]}


def test_linear_fit_exact_line():
    fit = linear_fit([1, 2, 3, 4], [3, 5, 7, 9])
    assert fit["slope"] == pytest.approx(2) and fit["intercept"] == pytest.approx(1)
    assert fit["r2"] == pytest.approx(1)


def test_cdma_curve_and_summaries():
    recs = [_rec(kind="cdma", snr_db=10.0, rel_error=e, trial=i) for i, e in enumerate([0.1, 0.3])]
    recs.append(_rec(kind="cdma", snr_db=20.0, rel_error=0.01, success=False))
    c = cdma_curve(recs)["fourier"]
    assert c[0]["avg_err"] == pytest.approx(0.2)
    assert c[0]["avg_sq_err"] == pytest.approx(0.05)
    assert c[0]["avg_sq_err_db"] == pytest.approx(10 * np.log10(0.05))
    assert c[1]["avg_err_db"] == pytest.approx(-20)
    assert doa_accuracy(recs) == {10.0: 1.0, 20.0: 0.0}
    assert success_by_cell(recs)[("fourier", 1, 1, 32, 10.0)] == 1.0


def test_cdma_and_doa_tiny():
    cd = run_experiment(ExperimentConfig.for_kind("cdma", L=32, N=48, ks=(1,), ns=(2,), snrs=(40.0,),
                                                  trials=2))
    assert len(cd) == 2 and all(r.rel_error < 0.1 for r in cd)
    assert all(r.detail.startswith("eta=") for r in cd)
    doa = run_experiment(ExperimentConfig.for_kind("doa", trials=1, snrs=(25.0,)))
    assert doa[0].success and doa[0].detail == "angles=-10;5;20"


def test_domain_defaults_and_validation():
    assert ExperimentConfig.for_kind("phase_transition").domain == "real"
    assert ExperimentConfig.for_kind("minimal_l").domain == "real"
    assert ExperimentConfig.for_kind("doa").domain == "complex"
    with pytest.raises(ValueError):
        ExperimentConfig(kind="cdma", domain="quaternion")
    # the seed does not depend on the domain, so both runs see the same instances
    a = run_phase_transition(_tiny_pt(domain="complex"))
    b = run_phase_transition(_tiny_pt())
    assert [r.seed for r in a] == [r.seed for r in b]

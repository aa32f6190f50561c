import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import crandn
from oracles import hermitian_defect_eig
from sparselift.certify import (CertificateReport, certify_instance, check_local_isometry, exact_dual_certificate,
                                golfing_certificate, golfing_rounds, on_support_limit, partition_blocks, sgn)
from sparselift.lifting import build_phi, restrict_support, support_columns, vec
from sparselift.problem import Dimensions, gen_dft_B, make_instance
from sparselift.solvers import solve_bp


def _setup(seed, L=128, N=256, k=3, n=3, matrix="fourier"):
    inst = make_instance(Dimensions(L, N, k, n), seed, matrix=matrix)
    return inst, build_phi(inst.A, inst.B)


def test_sgn_convention():
    np.testing.assert_allclose(sgn(np.array([2.0, -3.0, 0.0, 1j * 4])), [1, -1, 0, 1j])
    z = 3 * np.exp(0.4j)
    assert abs(sgn(np.array([z]))[0] - np.exp(0.4j)) < 1e-15


def test_local_isometry_orthonormal_columns():
    Q = np.linalg.qr(np.random.default_rng(0).standard_normal((8, 8)))[0]
    op = build_phi(Q.astype(complex), np.ones((8, 1)))
    assert check_local_isometry(op, [1, 3, 6]) <= 1e-12
    with pytest.raises(ValueError):
        check_local_isometry(op, [])


@given(st.integers(0, 2**31))
def test_local_isometry_matches_eig_oracle(seed):
    r = np.random.default_rng(seed)
    op = build_phi(crandn(r, 10, 6), crandn(r, 10, 2) / 4)
    omega = sorted(r.choice(6, 2, replace=False))
    P = restrict_support(op, omega)
    assert abs(check_local_isometry(op, omega) - hermitian_defect_eig(P.conj().T @ P)) <= 1e-10


def test_local_isometry_fourier_regime():
    good = 0
    for seed in range(100):
        inst, op = _setup(seed)
        good += check_local_isometry(op, inst.support.indices) <= 0.5
    assert good >= 95


def test_partition_dft_strided_exact():
    part = partition_blocks(gen_dft_B(64, 4), 16)
    assert part.P == 4 and part.scheme == "strided"
    assert part.max_deviation <= 1e-10 and part.within_bound
    allrows = np.sort(np.concatenate(part.blocks))
    assert np.array_equal(allrows, np.arange(64))
    assert {len(b) for b in part.blocks} == {16}


def test_partition_contiguous_is_measured_not_assumed():
    part = partition_blocks(gen_dft_B(64, 4), 16, scheme="contiguous")
    assert np.array_equal(part.blocks[1], np.arange(16, 32))
    assert part.max_deviation > 16 / (4 * 64)
    assert not part.within_bound


def test_partition_trivial_cases():
    B1 = gen_dft_B(12, 1)
    for scheme in ("strided", "contiguous"):
        assert partition_blocks(B1, 4, scheme).max_deviation <= 1e-14
    Bq = np.linalg.qr(crandn(np.random.default_rng(1), 9, 3))[0]
    whole = partition_blocks(Bq, 9)
    assert whole.P == 1 and whole.max_deviation <= 1e-12
    with pytest.raises(ValueError):
        partition_blocks(B1, 5)
    with pytest.raises(ValueError):
        partition_blocks(B1, 4, scheme="random")


def test_golfing_rounds_formula():
    assert golfing_rounds(9, 76) == 11
    assert golfing_rounds(1, 0.01) == 1
    P = golfing_rounds(4, 3.0)
    assert 2.0 ** -P * 2 <= on_support_limit(3.0) < 2.0 ** -(P - 1) * 2


def test_exact_certificate_identities():
    inst, op = _setup(3)
    omega = inst.support.indices
    s_full = sgn(inst.X0)
    rep = exact_dual_certificate(op, omega, s_full)
    assert rep.q_on_support_err <= 1e-10
    cols = support_columns(op.k, omega)
    s = vec(s_full)[cols]
    # normal-equations oracle: minimum-norm p with Phi_O^* p = s
    p_ref = np.linalg.lstsq(op.Phi[:, cols].conj().T, s, rcond=None)[0]
    assert abs(rep.p_norm - np.linalg.norm(p_ref)) <= 1e-8
    assert rep.p_norm_ok
    assert rep.W_norm_trace == [pytest.approx(math.sqrt(9))]


@pytest.mark.parametrize("seed", range(10))
def test_exact_certificate_on_support(seed):
    inst, op = _setup(seed, matrix="gaussian" if seed % 2 else "fourier")
    rep = exact_dual_certificate(op, inst.support.indices, sgn(inst.X0))
    assert rep.q_on_support_err <= 1e-10


def test_singular_gram_is_flagged():
    inst, op = _setup(0, L=8, N=12, k=3, n=4)
    rep = exact_dual_certificate(op, inst.support.indices, sgn(inst.X0))
    assert rep.singular and rep.delta >= 1 - 1e-9
    assert not rep.cond2_pass and not rep.passed
    full = certify_instance(op, inst)
    assert full.singular and not full.passed


@given(st.floats(0, 2), st.floats(0, 2), st.floats(0.1, 10), st.booleans())
def test_cond2_flag_matches_fields(on_err, off_inf, gamma, singular):
    rep = CertificateReport(method="least-squares", q_on_support_err=on_err, q_off_support_inf=off_inf,
                            gamma=gamma, singular=singular)
    expect = (not singular) and on_err <= 1 / (4 * math.sqrt(2) * gamma) and off_inf <= 0.5
    assert rep.cond2_pass == expect
    assert rep.to_row()["cond2_pass"] == expect


def test_golfing_trace_and_contraction():
    good = 0
    for seed in range(10):
        inst, op = _setup(seed, k=2, n=2)
        rep = golfing_certificate(op, inst.support.indices, sgn(inst.X0), P=2, Q=64, B=inst.B)
        tr = rep.W_norm_trace
        assert tr[0] == pytest.approx(2.0)
        ratios = np.array(tr[1:]) / np.array(tr[:-1])
        good += bool(np.all(ratios <= 0.9))
        assert rep.partition_max_deviation <= 1e-10
        # every block passes the half-bound check, so the trace cannot grow
        assert np.all(np.diff(tr) <= 1e-12)
    assert good >= 9


def test_golfing_argument_checks():
    inst, op = _setup(0, k=2, n=2)
    s = sgn(inst.X0)
    with pytest.raises(ValueError):
        golfing_certificate(op, inst.support.indices, s, P=3, Q=64, B=inst.B)
    with pytest.raises(ValueError):
        golfing_certificate(op, inst.support.indices, s, P=2, Q=64)
    wrong = partition_blocks(inst.B, 32)
    with pytest.raises(ValueError):
        golfing_certificate(op, inst.support.indices, s, P=2, Q=64, partition=wrong)


def test_certify_instance_report():
    inst, op = _setup(1, k=1, n=2)
    a = certify_instance(op, inst)
    b = certify_instance(op, inst)
    assert a.to_row() == b.to_row()
    assert math.isfinite(a.gamma_bound) and a.gamma <= a.gamma_bound
    assert a.passed
    res = solve_bp(op, inst.y)
    assert np.linalg.norm(res.X_hat - inst.X0) <= 1e-6 * np.linalg.norm(inst.X0)
    g = certify_instance(op, inst, P=2, Q=64)
    assert g.method == "golfing" and len(g.W_norm_trace) == 3
    noisy = make_instance(Dimensions(32, 40, 1, 2), 0, snr_db=20)
    with pytest.raises(ValueError):
        certify_instance(build_phi(noisy.A, noisy.B), noisy)

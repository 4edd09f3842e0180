import json

import numpy as np
import pytest

from divlab import linalg as la
from divlab import qobjects as qo
from divlab.errors import ValidationError

import oracles


def random_cptp(d_in, d_out, seed, rank=2):
    return qo.QuantumMap(tuple(oracles.haar_isometry_channel(d_in, d_out, rank, seed)),
                         trace_preserving=True)


def test_density_operator_validation():
    qo.DensityOperator(np.eye(2) / 2)
    with pytest.raises(ValidationError):
        qo.DensityOperator(np.diag([0.8, 0.3]))
    with pytest.raises(ValidationError):
        qo.DensityOperator(np.diag([1.5, -0.5]))
    sub = qo.DensityOperator(np.diag([0.4, 0.3]), subnormalized=True)
    assert sub.dim == 2


def test_apply_identity_and_replacer():
    rho = la.random_density(3, 1)
    ident = qo.identity_channel(3)
    np.testing.assert_allclose(qo.apply_map(ident, rho), rho, atol=1e-14)

    sig0 = la.random_density(2, 2)
    rep = qo.replacer_channel(sig0, 2)
    rho_ra = la.random_density(6, 3)
    out = qo.apply_map(rep, rho_ra, dims=[3, 2], which=1)
    expect = np.kron(la.partial_trace(rho_ra, [3, 2], [0]), sig0)
    np.testing.assert_allclose(out, expect, atol=1e-12)


def test_gad_full_damping_fixed_point():
    ch = qo.gad_channel(1.0, 0.0)
    rho = la.random_density(2, 4)
    np.testing.assert_allclose(ch(rho), np.diag([1.0, 0.0]), atol=1e-12)


def test_gad_gamma_zero_is_identity():
    for n_par in (0.0, 0.3, 1.0):
        ch = qo.gad_channel(0.0, n_par)
        rho = la.random_density(2, 5)
        np.testing.assert_allclose(ch(rho), rho, atol=1e-12)


def test_gad_is_cptp_everywhere():
    for gamma in (0.0, 0.25, 0.7, 1.0):
        for n_par in (0.0, 0.5, 0.9, 1.0):
            ch = qo.gad_channel(gamma, n_par)
            gram = sum(k.conj().T @ k for k in ch.kraus)
            assert np.abs(gram - np.eye(2)).max() <= 1e-12


def test_gad_rejects_out_of_range():
    with pytest.raises(ValidationError):
        qo.gad_channel(1.2, 0.0)


def test_adjoint_duality_and_unitality():
    for trial in range(10):
        ch = random_cptp(3, 2, seed=trial)
        np.testing.assert_allclose(qo.adjoint_apply(ch, np.eye(2)), np.eye(3), atol=1e-10)
        x = la.random_hermitian(2, seed=20 + trial)
        rho = la.random_density(3, seed=40 + trial)
        lhs = np.trace(x @ ch(rho))
        rhs = np.trace(qo.adjoint_apply(ch, x) @ rho)
        assert abs(lhs - rhs) <= 1e-10


def test_choi_roundtrip_and_examples():
    ident = qo.identity_channel(2)
    c = qo.choi(ident)
    vec = np.zeros(4)
    vec[0] = vec[3] = 1.0
    np.testing.assert_allclose(c, np.outer(vec, vec), atol=1e-14)

    sig0 = la.random_density(2, 6)
    rep = qo.replacer_channel(sig0, 2)
    np.testing.assert_allclose(qo.choi(rep), np.kron(np.eye(2), sig0), atol=1e-12)

    for trial in range(8):
        ch = random_cptp(2, 3, seed=trial, rank=3)
        c = qo.choi(ch)
        back = qo.kraus_from_choi(c, 2, 3)
        assert np.abs(qo.choi(back) - c).max() <= 1e-8


def test_kraus_from_choi_rejects_non_cp():
    c = np.diag([1.0, -0.5, 0.2, 0.1])
    with pytest.raises(ValidationError):
        qo.kraus_from_choi(c, 2, 2)


def test_stinespring_consistency():
    u = la.random_unitary(3, seed=10)
    dil = qo.stinespring(qo.unitary_channel(u))
    assert dil.env_dim == 1
    np.testing.assert_allclose(dil.matrix, u, atol=1e-14)

    gad_half = qo.gad_channel(0.5, 0.0)
    assert qo.stinespring(gad_half).env_dim == 4
    assert qo.stinespring(gad_half, minimal=True).env_dim == 2

    for trial in range(10):
        ch = random_cptp(2, 2, seed=100 + trial)
        dil = qo.stinespring(ch)
        rho = la.random_density(2, seed=200 + trial)
        lifted = dil.matrix @ rho @ dil.matrix.conj().T
        out = la.partial_trace(lifted, [dil.env_dim, ch.out_dim], [1])
        np.testing.assert_allclose(out, ch(rho), atol=1e-10)


def test_replacer_idempotent_on_states():
    sig0 = la.random_density(2, 11)
    rep = qo.replacer_channel(sig0, 2)
    rho = la.random_density(2, 12)
    np.testing.assert_allclose(rep(rep(rho)), rep(rho), atol=1e-12)


def test_tensor_map_identity_and_choi_permutation():
    ident = qo.identity_channel(2)
    both = qo.tensor_map(ident, ident)
    rho = la.random_density(4, 13)
    np.testing.assert_allclose(both(rho), rho, atol=1e-13)

    m1 = random_cptp(2, 2, seed=31)
    m2 = random_cptp(2, 2, seed=32)
    joint = qo.tensor_map(m1, m2)
    c_joint = qo.choi(joint)
    # (in1 out1 in2 out2) ordering from the factor Chois
    c_pair = np.kron(qo.choi(m1), qo.choi(m2))
    perm = la.permute_systems(c_pair, [2, 2, 2, 2], [0, 2, 1, 3])
    np.testing.assert_allclose(c_joint, perm, atol=1e-12)


def test_map_trace_preservation_sweep():
    for trial in range(10):
        ch = random_cptp(3, 3, seed=300 + trial)
        rho = la.random_density(3, seed=400 + trial)
        assert abs(np.trace(ch(rho)).real - 1.0) <= 1e-9
        c = qo.choi(ch)
        assert np.linalg.eigvalsh(c).min() >= -1e-9


def test_log2_trace_bound():
    sig0 = la.random_density(2, 14)
    rep = qo.replacer_channel(sig0, 2)
    assert rep.log2_trace_bound() == pytest.approx(0.0, abs=1e-9)
    doubled = qo.QuantumMap(tuple(np.sqrt(2.0) * k for k in rep.kraus))
    assert doubled.log2_trace_bound() == pytest.approx(1.0, abs=1e-9)


def test_channel_json_roundtrip(tmp_path):
    ch = random_cptp(2, 3, seed=55, rank=2)
    blob = qo.map_to_json(ch)
    back = qo.map_from_json(blob)
    assert np.abs(qo.choi(back) - qo.choi(ch)).max() <= 1e-12

    path = tmp_path / "chan.json"
    path.write_text(json.dumps(blob))
    loaded = qo.load_channel(str(path))
    assert loaded.in_dim == 2 and loaded.out_dim == 3

    named = qo.map_from_json({"gad": {"gamma": 0.5, "N": 0.25}})
    assert np.abs(qo.choi(named) - qo.choi(qo.gad_channel(0.5, 0.25))).max() <= 1e-12

    sig0 = la.random_density(2, 19)
    rep_blob = {"replacer": {"sigma0": [[[sig0[i, j].real, sig0[i, j].imag]
                                        for j in range(2)] for i in range(2)]}}
    rep = qo.map_from_json(rep_blob)
    rho = la.random_density(2, 20)
    np.testing.assert_allclose(rep(rho), sig0, atol=1e-12)


def test_channel_json_errors():
    with pytest.raises(ValidationError):
        qo.map_from_json({"in_dim": 2, "out_dim": 2})
    with pytest.raises(ValidationError):
        qo.map_from_json({"gad": {"gamma": 0.5}})
    with pytest.raises(ValidationError):
        qo.map_from_json([1, 2, 3])


def test_state_json_roundtrip():
    rho = la.random_density(3, 77)
    back = qo.matrix_from_json(qo.matrix_to_json(rho))
    np.testing.assert_allclose(back, rho, atol=1e-15)

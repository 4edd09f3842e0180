import numpy as np
import pytest

from divlab import linalg as la
from divlab.errors import DomainError, ResourceCapError, ValidationError

import oracles


def test_herm_eig_identity():
    w, v = la.herm_eig(np.eye(2, dtype=complex))
    np.testing.assert_allclose(w, [1.0, 1.0])
    np.testing.assert_allclose(v @ v.conj().T, np.eye(2), atol=1e-14)


def test_herm_eig_pauli_x():
    w, v = la.herm_eig(oracles.PAULI["x"])
    np.testing.assert_allclose(w, [1.0, -1.0], atol=1e-14)
    plus = np.array([1.0, 1.0]) / np.sqrt(2)
    overlap = abs(np.vdot(v[:, 0], plus))
    assert overlap == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("dim", [2, 3, 5, 8, 16])
def test_herm_eig_reconstruction_sweep(dim):
    for trial in range(20):
        h = la.random_hermitian(dim, seed=1000 * dim + trial)
        w, v = la.herm_eig(h)
        recon = (v * w) @ v.conj().T
        tol = 1e-10 * dim * max(np.abs(w).max(), 1.0)
        assert np.abs(recon - h).max() <= tol
        assert np.all(np.diff(w) <= 1e-12)


def test_herm_eig_rejects_non_hermitian():
    with pytest.raises(ValidationError):
        la.herm_eig(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_mat_func_examples():
    np.testing.assert_allclose(la.mat_log(np.eye(3, dtype=complex)), np.zeros((3, 3)), atol=1e-14)
    np.testing.assert_allclose(la.mat_pow(np.diag([4.0, 1.0]).astype(complex), 0.5),
                               np.diag([2.0, 1.0]), atol=1e-14)
    pseudo = la.mat_log(np.diag([0.5, 0.5, 0.0]).astype(complex), support_only=True)
    np.testing.assert_allclose(pseudo, np.diag([np.log(0.5), np.log(0.5), 0.0]), atol=1e-12)


def test_mat_func_domain_error():
    with pytest.raises(DomainError):
        la.mat_log(np.diag([1.0, 0.0]).astype(complex))


def test_frechet_commuting_and_square():
    d = la.random_hermitian(3, seed=5)
    out = la.frechet_matfunc(np.eye(3, dtype=complex), np.exp, d, np.exp)
    np.testing.assert_allclose(out, np.e * d, atol=1e-12)
    h = la.random_hermitian(3, seed=6)
    sq = la.frechet_matfunc(h, lambda x: x ** 2, d, lambda x: 2 * x)
    np.testing.assert_allclose(sq, h @ d + d @ h, atol=1e-10)


@pytest.mark.parametrize("name,f,fp,make_pd", [
    ("exp", np.exp, np.exp, False),
    ("log", np.log, lambda x: 1.0 / x, True),
    ("pow", lambda x: x ** 0.7, lambda x: 0.7 * x ** (-0.3), True),
])
def test_frechet_matches_finite_differences(name, f, fp, make_pd):
    for trial in range(17):
        h = la.random_hermitian(3, seed=trial)
        if make_pd:
            h = h @ h.conj().T / 3 + 0.5 * np.eye(3)
        d = la.random_hermitian(3, seed=100 + trial)
        an = la.frechet_matfunc(h, f, d, fp)
        fd = oracles.finite_diff_matfunc(h, f, d)
        assert np.abs(an - fd).max() <= 1e-6


def test_tensor_examples():
    np.testing.assert_allclose(la.tensor(np.eye(2), np.eye(2)), np.eye(4))
    np.testing.assert_allclose(la.tensor(np.diag([1.0, 0.0]), np.diag([0.0, 1.0])),
                               np.diag([0.0, 1.0, 0.0, 0.0]))
    x2 = la.tensor_power(oracles.PAULI["x"], 2)
    ket00 = np.zeros(4)
    ket00[0] = 1.0
    np.testing.assert_allclose(x2 @ ket00, np.eye(4)[3], atol=1e-14)


def test_tensor_resource_cap():
    with pytest.raises(ResourceCapError):
        la.tensor_power(np.eye(4), 5)  # 4^5 = 1024 > 256


def test_dim_cap_env_override(monkeypatch):
    monkeypatch.setenv("DIVLAB_DIM_CAP", "2048")
    la.tensor_power(np.eye(4), 5)
    monkeypatch.setenv("DIVLAB_DIM_CAP", "8")
    with pytest.raises(ResourceCapError):
        la.tensor_power(np.eye(4), 2)


def test_partial_trace_bell_and_product():
    bell = np.zeros(4)
    bell[0] = bell[3] = 1.0 / np.sqrt(2)
    rho = np.outer(bell, bell)
    np.testing.assert_allclose(la.partial_trace(rho, [2, 2], [0]), np.eye(2) / 2, atol=1e-14)
    a = la.random_density(2, 1)
    b = la.random_density(3, 2)
    np.testing.assert_allclose(la.partial_trace(np.kron(a, b), [2, 3], [0]), a, atol=1e-13)


def test_partial_trace_order_independence_and_linearity():
    for trial in range(10):
        a = la.random_density(12, seed=trial)
        dims = [2, 3, 2]
        keep = [0, 2]
        one_shot = la.partial_trace(a, dims, keep)
        iterated = oracles.two_step_partial_trace(a, dims, keep)
        assert np.abs(one_shot - iterated).max() <= 1e-12
        assert abs(np.trace(one_shot) - np.trace(a)) <= 1e-12
        b = la.random_density(12, seed=100 + trial)
        combo = la.partial_trace(0.3 * a + 0.7 * b, dims, keep)
        expect = 0.3 * la.partial_trace(a, dims, keep) + 0.7 * la.partial_trace(b, dims, keep)
        assert np.abs(combo - expect).max() <= 1e-12


def test_partial_trace_dims_mismatch():
    with pytest.raises(ValidationError):
        la.partial_trace(np.eye(6), [2, 2], [0])


def test_trace_norm_and_fidelity_examples():
    assert la.trace_norm(oracles.PAULI["x"]) == pytest.approx(2.0, abs=1e-12)
    rho = la.random_density(3, 9)
    assert la.fidelity(rho, rho) == pytest.approx(1.0, abs=1e-10)
    ket0 = np.diag([1.0, 0.0]).astype(complex)
    plus = np.full((2, 2), 0.5, dtype=complex)
    assert la.fidelity(ket0, plus) == pytest.approx(1 / np.sqrt(2), abs=1e-12)


def test_fidelity_symmetry_and_subnormalized():
    for trial in range(10):
        rho = la.random_density(4, seed=trial)
        sig = la.random_density(4, seed=50 + trial)
        assert abs(la.fidelity(rho, sig) - la.fidelity(sig, rho)) <= 1e-10
    half = 0.5 * la.random_density(2, 3)
    gen = la.fidelity(half, half, generalized=True)
    assert gen == pytest.approx(0.5 + 0.5, abs=1e-12)


def test_fidelity_rejects_negative():
    with pytest.raises(ValidationError):
        la.fidelity(np.diag([1.5, -0.5]).astype(complex), np.eye(2, dtype=complex) / 2)


def test_random_ensembles_deterministic():
    a = la.random_density(4, seed=7)
    b = la.random_density(4, seed=7)
    np.testing.assert_array_equal(a, b)
    assert np.trace(a).real == pytest.approx(1.0, abs=1e-12)
    assert np.linalg.eigvalsh(a).min() >= -1e-12
    real = la.random_density(4, seed=8, real_entries=True)
    assert np.abs(real.imag).max() == 0.0
    u = la.random_unitary(5, seed=9)
    np.testing.assert_allclose(u.conj().T @ u, np.eye(5), atol=1e-12)
    np.testing.assert_array_equal(u, la.random_unitary(5, seed=9))


def test_permute_systems_roundtrip():
    a = la.random_density(8, seed=3)
    perm = [2, 0, 1]
    out = la.permute_systems(a, [2, 2, 2], perm)
    back = la.permute_systems(out, [2, 2, 2], [1, 2, 0])
    np.testing.assert_allclose(back, a, atol=1e-14)

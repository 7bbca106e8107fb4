import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dampopt.dpr1 import (CSymDPR1, EigenError, deflate, eig_all, eig_one, eigvector_generators,
                          resolvent_apply, secular_eval, secular_residuals)
from dampopt.modal import modal_decompose, phase_decompose, rank_update_vectors
from dampopt.model import DamperSpec, random_system

SQ5 = math.sqrt(5.0)
TWO = CSymDPR1([1.0, 2.0], [1.0, 1.0], 1.0)


def damping_matrix(seed, n, rho=None):
    """A diagonal-plus-rank-one matrix as it arises from one damper."""
    rng = np.random.default_rng(seed)
    sys_ = random_system(rng, n)
    mb = modal_decompose(sys_)
    ph = phase_decompose(mb.omega, rng.uniform(0.01, 0.1) * mb.omega)
    (y,) = rank_update_vectors(ph, mb, [DamperSpec.grounded(int(rng.integers(1, n + 1)))])
    return CSymDPR1(ph.xi, y, rng.uniform(0.1, 3.0) if rho is None else rho)


def random_matrix(seed, N):
    rng = np.random.default_rng(seed)
    xi = rng.standard_normal(N) + 1j * rng.standard_normal(N)
    y = rng.standard_normal(N) + 1j * rng.standard_normal(N)
    return CSymDPR1(xi, y, rng.uniform(0.2, 2.0))


def dense_v(m, e):
    return eigvector_generators(m, e).dense()


# secular function

def test_secular_value():
    assert secular_eval(TWO, 0.0) == pytest.approx(2.5, abs=1e-15)


def test_secular_root():
    assert abs(secular_eval(TWO, (5 - SQ5) / 2)) <= 1e-12


def test_secular_affine_in_rho():
    lam = 0.3 + 0.2j
    f1 = secular_eval(TWO, lam) - 1
    f3 = secular_eval(CSymDPR1(TWO.xi, TWO.y, 3.0), lam) - 1
    assert f3 == pytest.approx(3 * f1, rel=1e-14)


def test_secular_pole():
    with pytest.raises(EigenError, match="pole"):
        secular_eval(TWO, 2.0)


# resolvent

def test_resolvent_two_by_two():
    np.testing.assert_allclose(resolvent_apply(TWO, 0.0, [1.0, 0.0]), [0.6, -0.2], atol=1e-15)


def test_resolvent_singular_shift():
    with pytest.raises(EigenError, match="eigenvalue"):
        resolvent_apply(TWO, (5 + SQ5) / 2, [1.0, 0.0])


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 30), st.integers(0, 2**32 - 1))
def test_resolvent_residual(N, seed):
    m = random_matrix(seed, N)
    rng = np.random.default_rng(seed + 1)
    mu = complex(rng.standard_normal(), rng.standard_normal())
    v = rng.standard_normal(N) + 0j
    x = resolvent_apply(m, mu, v)
    r = m.dense() @ x - mu * x - v
    # backward-style bound: scale by the size of the solve
    assert np.linalg.norm(r) <= 1e-12 * np.linalg.norm(v) * max(1.0, np.linalg.norm(
        m.dense() - mu * np.eye(N), 2) * np.linalg.norm(x) / np.linalg.norm(v))


def test_resolvent_small_rho_gamma():
    m = CSymDPR1([1.0, 2.0], [1.0, 1.0], 1e-8)
    x = resolvent_apply(m, 0.0, [1.0, 0.0])
    # (Xi)^{-1} e1 minus rho (Xi^{-1} y)(y^T Xi^{-1} e1) to first order
    np.testing.assert_allclose(x, [1 - 1e-8, -0.5e-8], rtol=0, atol=1e-15)


# one eigenvalue

def test_eig_one_scalar():
    lam, psi, _ = eig_one(CSymDPR1([1j], [1 + 1j], 2.0))
    assert abs(lam - 5j) <= 1e-14
    assert abs(psi) > 0


def test_eig_one_two_by_two():
    lam, _, its = eig_one(TWO, start=3.6)
    assert abs(lam - (5 + SQ5) / 2) <= 1e-12
    assert abs(secular_eval(TWO, lam)) <= 1e-10
    assert its < 100


# deflation

def test_deflate_nothing():
    m = deflate(TWO, [])
    np.testing.assert_array_equal(m.y**2, TWO.y**2)


def test_deflate_two_by_two():
    m = deflate(TWO, [(2.0, (5 + SQ5) / 2)])
    assert m.n == 1
    assert (m.y[0] ** 2).real == pytest.approx((5 - SQ5) / 2 - 1, abs=1e-15)
    assert abs(m.xi[0] + m.rho * m.y[0] ** 2 - (5 - SQ5) / 2) <= 1e-12


def test_deflate_everything():
    lam = np.sort(np.linalg.eigvalsh(TWO.dense().real))
    m = deflate(deflate(TWO, [(2.0, lam[1])]), [(1.0, lam[0])])
    assert m.n == 0


def test_deflate_breakdown():
    with pytest.raises(EigenError, match="breakdown"):
        deflate(TWO, [(2.0, 1.0)])


# all eigenvalues

def test_rho_zero_passthrough():
    e = eig_all(CSymDPR1([3.0, 1.0], [1.0, 2.0], 0.0))
    np.testing.assert_array_equal(e.lam, [1.0, 3.0])
    np.testing.assert_allclose(dense_v(CSymDPR1([3.0, 1.0], [1.0, 2.0], 0.0), e)[:, ::-1],
                               np.eye(2))


def test_two_by_two_spectrum():
    e = eig_all(TWO)
    np.testing.assert_allclose(e.lam, [(5 - SQ5) / 2, (5 + SQ5) / 2], atol=1e-14)


def test_two_by_two_eigenvectors():
    e = eig_all(TWO)
    V = dense_v(TWO, e)
    w, U = np.linalg.eigh(TWO.dense().real)
    for j in range(2):
        s = np.sign((V[:, j] @ U[:, j]).real)
        np.testing.assert_allclose(s * V[:, j], U[:, j], atol=1e-14)


def test_scalar_eigenvector():
    m = CSymDPR1([2.0 + 1j], [0.5], 1.5)
    e = eig_all(m)
    np.testing.assert_allclose(dense_v(m, e), [[1.0]], atol=1e-15)


def test_tiny_weight_is_split_off():
    m = CSymDPR1([1.0, 2.0, 3.0], [1.0, 0.0, 1.0], 1.0)
    e = eig_all(m)
    assert e.split.sum() == 1
    np.testing.assert_allclose(np.sort(e.lam.real), np.sort(np.linalg.eigvalsh(m.dense().real)),
                               atol=1e-13)
    V = dense_v(m, e)
    np.testing.assert_allclose(V.T @ V, np.eye(3), atol=1e-13)


def test_repeated_pole_rejected():
    with pytest.raises(EigenError, match="repeated"):
        eig_all(CSymDPR1([1.0, 1.0, 2.0], [1.0, 1.0, 1.0], 1.0))


def check_eigenpairs(m, e, tol=1e-10):
    A = m.dense()
    V = dense_v(m, e)
    res = np.linalg.norm(A @ V - V * e.lam[None, :], axis=0)
    assert res.max() <= tol * m.frobenius_norm()
    assert np.max(secular_residuals(m, e)) <= 1e-10 * (1 + abs(m.rho) * np.sum(abs(m.y) ** 2))
    return V


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 40), st.integers(0, 2**32 - 1))
def test_random_eigenpairs(N, seed):
    m = random_matrix(seed, N)
    e = eig_all(m)
    V = check_eigenpairs(m, e)
    gaps = np.abs(e.lam[:, None] - e.lam[None, :]) + np.eye(N) * 1e300
    if gaps.min() >= 1e-6 * np.linalg.norm(m.dense(), 2):
        assert np.linalg.norm(V.T @ V - np.eye(N)) <= 1e-8


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 25), st.integers(0, 2**32 - 1))
def test_damping_eigenpairs_and_conjugate_closure(n, seed):
    m = damping_matrix(seed, n)
    e = eig_all(m)
    check_eigenpairs(m, e)
    lam = e.lam
    mirror = np.min(np.abs(np.conj(lam)[:, None] - lam[None, :]), axis=1)
    assert mirror.max() <= 1e-8 * np.abs(lam).max()
    assert np.all(lam.real < 0)


def test_deflation_matches_fresh_starts():
    m = random_matrix(11, 30)
    e = eig_all(m)
    fresh = np.array([eig_one(m, start=lam)[0] for lam in e.lam])
    np.testing.assert_allclose(fresh, e.lam, rtol=1e-9)


def test_large_damping_matrix_is_accurate():
    m = damping_matrix(5, 100, rho=50.0)
    check_eigenpairs(m, eig_all(m))


def test_deterministic():
    m = damping_matrix(7, 40)
    a, b = eig_all(m), eig_all(m)
    np.testing.assert_array_equal(a.lam, b.lam)
    np.testing.assert_array_equal(a.psi, b.psi)


def test_frobenius_norm():
    m = random_matrix(2, 17)
    assert m.frobenius_norm() == pytest.approx(np.linalg.norm(m.dense()), rel=1e-12)

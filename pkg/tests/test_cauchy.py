import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dampopt.cauchy import (CauchyError, CauchyLike, conj_inner, displacement_residual, element,
                            generator_scale, linked_product, matvec)
from dampopt.dpr1 import CSymDPR1, eig_all, eigvector_generators


def cnormal(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def random_cauchy(rng, n, m, r, x=None, y=None):
    x = cnormal(rng, n) if x is None else x
    y = cnormal(rng, m) + 5.0 if y is None else y
    return CauchyLike(x, y, cnormal(rng, n, r), cnormal(rng, m, r))


def test_standard_cauchy():
    x, y = np.array([1.0, 2.0]), np.array([-1.0, -2.0, -3.0])
    c = CauchyLike(x, y, np.ones(2), np.ones(3))
    np.testing.assert_allclose(c.dense(), 1.0 / (x[:, None] - y[None, :]))
    assert element(c, 1, 2) == pytest.approx(0.2)


def test_rank_zero_is_zero():
    c = CauchyLike([1.0, 2.0], [3.0], np.zeros((2, 0)), np.zeros((1, 0)))
    assert not c.dense().any()
    assert not c.matmat(np.ones(1)).any()
    assert conj_inner(c, c) == 0


def test_node_collision_rejected():
    with pytest.raises(CauchyError, match="collision"):
        CauchyLike([1.0, 2.0], [2.0], np.ones(2), np.ones(1))


def test_link_check():
    rng = np.random.default_rng(0)
    a = random_cauchy(rng, 3, 3, 1)
    b = random_cauchy(rng, 3, 3, 1)
    with pytest.raises(CauchyError, match="linked"):
        linked_product(a, b)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_reconstruction_satisfies_displacement(n, m, r, seed):
    c = random_cauchy(np.random.default_rng(seed), n, m, r)
    assert displacement_residual(c, c.dense()) <= 1e-12 * generator_scale(c)


def test_residual_grows_with_perturbation():
    rng = np.random.default_rng(1)
    c = random_cauchy(rng, 4, 4, 2)
    E = 1e-3 * cnormal(rng, 4, 4)
    got = displacement_residual(c, c.dense() + E)
    want = np.linalg.norm(c.xnodes[:, None] * E - E * c.ynodes[None, :])
    assert got == pytest.approx(want, rel=1e-8)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 300), st.integers(1, 20), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_products_match_dense(n, m, r, seed):
    rng = np.random.default_rng(seed)
    c = random_cauchy(rng, n, m, r)
    D = c.dense()
    V = cnormal(rng, m, 2)
    W = cnormal(rng, n, 3)
    np.testing.assert_allclose(c.matmat(V), D @ V, rtol=1e-13, atol=1e-13 * np.abs(D).max())
    np.testing.assert_allclose(c.rmatmat(W), D.T @ W, rtol=1e-13,
                               atol=1e-13 * np.abs(D).max() * n)
    assert not matvec(c, np.zeros(m)).any()
    j = int(rng.integers(m))
    np.testing.assert_allclose(matvec(c, np.eye(m)[j]), D[:, j], rtol=1e-13)
    np.testing.assert_allclose(c.column(j), D[:, j], rtol=1e-13)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 16), st.integers(1, 3), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_linked_product_matches_dense(n, ra, rb, seed):
    rng = np.random.default_rng(seed)
    x, z = cnormal(rng, n), cnormal(rng, n) + 5.0
    y = cnormal(rng, n) - 5.0
    a = random_cauchy(rng, n, n, ra, x, y)
    b = random_cauchy(rng, n, n, rb, y, z)
    c = linked_product(a, b)
    assert c.rank == ra + rb
    ref = a.dense() @ b.dense()
    np.testing.assert_allclose(c.dense(), ref, rtol=1e-12, atol=1e-12 * np.abs(ref).max())
    assert displacement_residual(c, c.dense()) <= 1e-10 * generator_scale(c)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 16), st.integers(0, 2**32 - 1))
def test_linked_product_associative(n, seed):
    rng = np.random.default_rng(seed)
    nodes = [cnormal(rng, n) + 6.0 * k for k in range(4)]
    a, b, c = (random_cauchy(rng, n, n, 1, nodes[k], nodes[k + 1]) for k in range(3))
    left = linked_product(linked_product(a, b), c).dense()
    right = linked_product(a, linked_product(b, c)).dense()
    assert np.linalg.norm(left - right) <= 1e-10 * np.linalg.norm(left)


def test_zero_factor_gives_zero_product():
    rng = np.random.default_rng(4)
    x, y, z = cnormal(rng, 3), cnormal(rng, 3) + 5, cnormal(rng, 3) - 5
    a = random_cauchy(rng, 3, 3, 1, x, y)
    b = CauchyLike(y, z, np.zeros((3, 1)), np.zeros((3, 1)))
    c = linked_product(a, b)
    assert not c.Q.any()
    assert not c.dense().any()


def eigvectors(seed, N):
    rng = np.random.default_rng(seed)
    xi = np.sort_complex(cnormal(rng, N) - 3.0)
    m = CSymDPR1(xi, cnormal(rng, N), 0.7)
    e = eig_all(m)
    return m, e, eigvector_generators(m, e)


def test_eigenvector_factor_keeps_displacement():
    m, e, V = eigvectors(3, 12)
    rng = np.random.default_rng(9)
    B = random_cauchy(rng, 12, 12, 2, e.lam, cnormal(rng, 12) + 8.0)
    C = linked_product(V, B)
    assert displacement_residual(V, V.dense()) <= 1e-11 * generator_scale(V)
    assert displacement_residual(C, C.dense()) <= 1e-11 * generator_scale(C)


def test_anchored_products_agree_with_dense():
    m1, e1, V1 = eigvectors(5, 20)
    m2 = CSymDPR1(e1.lam, V1.rmatmat(np.random.default_rng(6).standard_normal(20)), 1.3)
    e2 = eig_all(m2)
    V2 = eigvector_generators(m2, e2)
    S = linked_product(V1, V2)
    np.testing.assert_allclose(S.dense(), V1.dense() @ V2.dense(), atol=1e-12)
    assert S.anchor is not None


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 10), st.integers(0, 2**32 - 1))
def test_conj_inner(n, seed):
    rng = np.random.default_rng(seed)
    a = random_cauchy(rng, 2 * n, 5, 2)
    b = CauchyLike(a.xnodes, a.ynodes, cnormal(rng, 2 * n, 3), cnormal(rng, 5, 3))
    Da, Db = a.dense(), b.dense()
    assert conj_inner(a, b) == pytest.approx(np.sum(np.conj(Da) * Db), rel=1e-12)
    q = cnormal(rng, n, 2, 2)
    B = np.zeros((2 * n, 2 * n), complex)
    i = np.arange(n)
    B[i, i], B[i, n + i], B[n + i, i], B[n + i, n + i] = q[:, 0, 0], q[:, 0, 1], q[:, 1, 0], q[:, 1, 1]
    want = np.sum(np.conj(B @ Da) * (B @ Db))
    assert conj_inner(a, b, q) == pytest.approx(want, rel=1e-12)

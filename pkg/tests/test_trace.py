import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dampopt.cauchy import CauchyLike, displacement_residual, generator_scale
from dampopt.modal import (dense_phase_matrix, internal_damping_gamma, modal_decompose,
                           phase_decompose, rank_update_vectors)
from dampopt.model import DamperSpec, InternalDampingModel, assemble_external_damping, random_system
from dampopt.trace import (EnergyCriterion, UnstableSystemError, accumulate_S, identity_like,
                           lyap_eig_oracle, lyap_oracle, lyap_Y_generators, oracle_trace,
                           trace_fast, trace_from_updates)


def problem(seed, n=None, k=None):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 21)) if n is None else n
    k = int(rng.integers(1, 4)) if k is None else k
    sys_ = random_system(rng, n)
    internal = InternalDampingModel(alpha=float(rng.uniform(0.01, 0.1)))
    mb = modal_decompose(sys_)
    gam = internal_damping_gamma(internal, mb.omega)
    ph = phase_decompose(mb.omega, gam)
    specs = [DamperSpec.grounded(int(rng.integers(1, n + 1))) for _ in range(k)]
    rho = rng.uniform(0.1, 3.0, k)
    s = int(rng.integers(1, n + 1))
    return sys_, internal, mb, gam, ph, specs, rho, s


def test_criterion_validation():
    with pytest.raises(ValueError):
        EnergyCriterion(0, 3)
    with pytest.raises(ValueError):
        EnergyCriterion(4, 3)
    np.testing.assert_array_equal(EnergyCriterion(2, 5).column_indices, [0, 1, 5, 6])


def test_scalar_lyapunov():
    crit = EnergyCriterion(1, 2)
    A = np.diag([-1.0, -2.0, -3.0, -4.0])
    G = crit.selector()
    X = lyap_oracle(A, crit)
    # x_11 = 1/2, x_33 = 1/6
    assert X == pytest.approx(0.5 + 1 / 6, rel=1e-14)
    assert G.shape == (4, 2)


def test_identity_s_diagonal_case():
    crit = EnergyCriterion(1, 1)
    lam = np.array([-1.0, -2.0], dtype=complex)
    S = identity_like(lam)
    Y = lyap_Y_generators(lam, S, crit)
    assert trace_fast(S, Y, crit).value == pytest.approx(0.5 + 0.25, rel=1e-14)
    assert lyap_oracle(np.diag(lam), crit) == pytest.approx(0.75, rel=1e-14)


def test_unstable_rejected():
    crit = EnergyCriterion(1, 1)
    lam = np.array([0.5, -2.0], dtype=complex)
    with pytest.raises(UnstableSystemError):
        lyap_Y_generators(lam, identity_like(lam), crit)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_oracles_agree(seed):
    sys_, internal, mb, gam, ph, specs, rho, s = problem(seed, n=int(seed % 8) + 2)
    C = mb.phi.T @ assemble_external_damping(specs, rho, sys_.n) @ mb.phi
    A = dense_phase_matrix(mb.omega, gam, C)
    crit = EnergyCriterion(s, sys_.n, "modal")
    a, b = lyap_oracle(A, crit), lyap_eig_oracle(A, crit)
    assert abs(a - b) <= 1e-10 * a


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3))
def test_accumulated_eigendecomposition(seed, k):
    sys_, internal, mb, gam, ph, specs, rho, s = problem(seed, n=int(seed % 20) + 3, k=k)
    ys = rank_update_vectors(ph, mb, specs)
    dec = accumulate_S(ph.xi, zip(rho, ys))
    S = dec.S.dense()
    A = np.diag(ph.xi) + sum(r * np.outer(y, y) for r, y in zip(rho, ys))
    scale = np.linalg.norm(A)
    assert np.linalg.norm(S @ np.diag(dec.lam) @ S.T - A) <= 1e-9 * scale
    assert np.linalg.norm(S.T @ S - np.eye(S.shape[0])) <= 1e-8
    assert dec.S.rank == k
    assert displacement_residual(dec.S, S) <= 1e-10 * generator_scale(dec.S)


def test_single_update_generators():
    sys_, internal, mb, gam, ph, specs, rho, s = problem(8, n=6, k=1)
    (y,) = rank_update_vectors(ph, mb, specs)
    dec = accumulate_S(ph.xi, [(rho[0], y)])
    np.testing.assert_array_equal(dec.S.P[:, 0], y)
    np.testing.assert_array_equal(dec.S.Q[:, 0], dec.stages[0].psi)


def test_y_generators_solve_their_equation():
    sys_, internal, mb, gam, ph, specs, rho, s = problem(12, n=7, k=2)
    ys = rank_update_vectors(ph, mb, specs)
    dec = accumulate_S(ph.xi, zip(rho, ys))
    crit = EnergyCriterion(3, 7)
    Y = lyap_Y_generators(dec.lam, dec.S, crit)
    D = Y.dense()
    W = dec.S.dense().T @ crit.selector()
    lam = dec.lam
    R = lam[:, None] * D + D * np.conj(lam)[None, :] + W @ W.conj().T
    assert np.linalg.norm(R) <= 1e-11 * np.linalg.norm(W) ** 2
    # back-transform gives the Hermitian Lyapunov solution
    Sd = dec.S.dense()
    X = Sd @ D @ Sd.conj().T
    np.testing.assert_allclose(X, X.conj().T, atol=1e-10 * np.abs(X).max())


@pytest.mark.parametrize("basis", ["phase", "modal"])
@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_fast_trace_matches_oracle(basis, seed):
    sys_, internal, mb, gam, ph, specs, rho, s = problem(seed)
    crit = EnergyCriterion(s, sys_.n, basis)
    res = trace_from_updates(ph, list(zip(rho, rank_update_vectors(ph, mb, specs))), crit)
    ref = oracle_trace(sys_, internal, specs, rho, crit)
    assert abs(res.value - ref) <= 1e-8 * ref
    assert res.value > 0
    assert res.imag_leak <= 1e-8 * res.value


def test_no_dampers():
    sys_, internal, mb, gam, ph, specs, rho, s = problem(2, n=5)
    crit = EnergyCriterion(2, 5)
    res = trace_from_updates(ph, [], crit)
    assert res.value == pytest.approx(lyap_oracle(np.diag(ph.xi), crit), rel=1e-12)


def test_damper_order_does_not_matter():
    sys_, internal, mb, gam, ph, specs, rho, s = problem(21, n=10, k=3)
    ys = rank_update_vectors(ph, mb, specs)
    crit = EnergyCriterion(4, 10)
    a = trace_from_updates(ph, list(zip(rho, ys)), crit).value
    b = trace_from_updates(ph, list(zip(rho[::-1], ys[::-1])), crit).value
    assert abs(a - b) <= 1e-10 * a


def test_trace_along_ray_is_unimodal():
    sys_, internal, mb, gam, ph, specs, rho, s = problem(4, n=6, k=1)
    (y,) = rank_update_vectors(ph, mb, specs)
    crit = EnergyCriterion(2, 6)
    grid = np.logspace(-2, 3, 40)
    vals = np.array([trace_from_updates(ph, [(r, y)], crit).value for r in grid])
    ref = np.array([oracle_trace(sys_, internal, specs, [r], crit) for r in grid])
    np.testing.assert_allclose(vals, ref, rtol=1e-8)
    i = int(np.argmin(vals))
    assert 0 < i < grid.size - 1
    assert np.all(np.diff(vals[: i + 1]) < 0) and np.all(np.diff(vals[i:]) > 0)

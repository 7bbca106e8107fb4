"""Trace of the Lyapunov solution from structured eigendecompositions.

With ``A = S diag(lam) S.T`` and ``S.T = S^{-1}`` the Lyapunov equation
``A X + X A^* = -G G^T`` turns into the Cauchy-like ``Y = S.T X conj(S)``,
``Y = C(lam, -conj(lam), -W, conj(W))`` with ``W = S.T G``. Then
``Z = S Y`` is again Cauchy-like and ``trace(X) = sum(conj(S) * Z)``.

Two selector bases are supported:

``phase``
    ``G`` selects phase indices directly (the diagonal-plus-low-rank
    matrix is treated as the state matrix).
``modal``
    The criterion of the modal state matrix ``[[0, W], [-W, -D]]``. It is
    similar to the phase matrix through ``Q``, so ``G`` becomes
    ``Q^T J G`` and the trace is ``trace(Q X' Q^*)``.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .cauchy import CauchyLike, conj_inner, linked_product
from .dpr1 import CSymDPR1, Dpr1Eigen, eig_all, eigvector_generators
from .modal import PhaseBasis

IMAG_FAIL = 1e-6


class TraceError(ArithmeticError):
    pass


class UnstableSystemError(TraceError):
    pass


class ConditioningWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class EnergyCriterion:
    """Damp the ``s`` lowest undamped frequencies of an ``n``-mode system."""

    s: int
    n: int
    basis: str = "phase"

    def __post_init__(self):
        if not 1 <= self.s <= self.n:
            raise ValueError(f"s must be in 1..n={self.n}, got {self.s}")
        if self.basis not in ("phase", "modal"):
            raise ValueError(f"unknown selector basis {self.basis!r}")

    @property
    def column_indices(self) -> np.ndarray:
        s, n = self.s, self.n
        return np.concatenate([np.arange(s), n + np.arange(s)])

    def selector(self) -> np.ndarray:
        G = np.zeros((2 * self.n, 2 * self.s))
        G[self.column_indices, np.arange(2 * self.s)] = 1.0
        return G


@dataclass
class TraceResult:
    value: float
    imag_leak: float
    timings: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)


@dataclass
class Decomposition:
    lam: np.ndarray
    S: CauchyLike
    stages: list


def identity_like(xi) -> CauchyLike:
    """The identity as a Cauchy-like matrix on nodes ``(xi, xi)``."""
    N = xi.size
    zero = np.zeros((N, 1), dtype=complex)
    return CauchyLike(xi, xi, zero, zero, {(i, i): 1.0 for i in range(N)},
                      anchor=np.arange(N), offset=np.zeros(N, dtype=complex))


def accumulate_S(phase_xi, updates) -> Decomposition:
    """Eigendecomposition of ``diag(xi) + sum rho_i y_i y_i^T`` one rank-one term at a time."""
    xi = np.asarray(phase_xi, dtype=complex)
    updates = list(updates)
    if not updates:
        return Decomposition(xi, identity_like(xi), [])
    S = None
    nodes = xi
    stages = []
    for rho, y in updates:
        yy = np.asarray(y, dtype=complex) if S is None else S.rmatmat(y)
        m = CSymDPR1(nodes, yy, rho)
        e = eig_all(m)
        V = eigvector_generators(m, e)
        S = V if S is None else linked_product(S, V)
        nodes = e.lam
        stages.append(e)
    return Decomposition(nodes, S, stages)


def _w_columns(S: CauchyLike, crit: EnergyCriterion, phase: PhaseBasis | None):
    """``W = S.T @ G'`` (N x 2s) and the nonzero rows of ``G'`` (row index, 2s values)."""
    idx = crit.column_indices
    rows = S.rows(idx)  # (2s, N): rows of S = columns of S.T
    s, n = crit.s, crit.n
    if crit.basis == "phase":
        return rows.T, idx, np.eye(2 * s)
    # G' = Q^T J G: block i maps selector columns (i, s+i) onto rows (i, n+i)
    q = phase.q[:s]
    B = np.zeros((2 * s, 2 * s), dtype=complex)  # rows: idx order, cols: selector columns
    a = np.arange(s)
    # (Q^T J)[[i, n+i], [i, n+i]] = q_i^T diag(1, -1)
    B[a, a] = q[:, 0, 0]
    B[a, s + a] = -q[:, 1, 0]
    B[s + a, a] = q[:, 0, 1]
    B[s + a, s + a] = -q[:, 1, 1]
    return rows.T @ B, idx, B


def lyap_Y_generators(lam, S: CauchyLike, crit: EnergyCriterion,
                      phase: PhaseBasis | None = None) -> CauchyLike:
    """``Y = C(lam, -conj(lam), -W, conj(W))`` solving ``lam Y + Y conj(lam) = -W W^*``."""
    lam = np.asarray(lam, dtype=complex)
    if np.any(lam.real >= 0):
        raise UnstableSystemError(f"unstable system: max Re(lambda) = {lam.real.max():.3e}")
    scale = np.max(np.abs(lam))
    if np.min(-lam.real) <= 1e-12 * scale:
        warnings.warn("eigenvalue close to the imaginary axis", ConditioningWarning, stacklevel=2)
    W, _, _ = _w_columns(S, crit, phase)
    return CauchyLike(lam, -np.conj(lam), -W, np.conj(W))


def _apply_q(q, top, bot):
    return (q[:, 0, 0, None] * top + q[:, 0, 1, None] * bot,
            q[:, 1, 0, None] * top + q[:, 1, 1, None] * bot)


def trace_fast(S: CauchyLike, Y: CauchyLike, crit: EnergyCriterion,
               phase: PhaseBasis | None = None) -> TraceResult:
    """``trace(X)`` from the generators of ``S`` and ``Y``; O((k + s) N^2)."""
    if not np.array_equal(S.ynodes, Y.xnodes):
        raise TraceError("S and Y are not linked")
    modal = crit.basis == "modal"
    rows = crit.column_indices
    B = _w_columns(S, crit, phase)[2] if modal else np.eye(2 * crit.s)
    # Z = S Y has P' = [P, S @ (-W)] = [P, -G'] since S S^T = I. The -G' part
    # lives on the 2s selected rows only, so it is summed separately.
    Z = CauchyLike(S.xnodes, Y.ynodes, S.P, Y.rmatmat(S.Q))
    blocks = phase.q if modal else None
    total = conj_inner(S, Z, blocks)
    z2 = -(B @ Y.Q.T) / (S.xnodes[rows][:, None] - Y.ynodes[None, :])
    s_rows = S.rows(rows)
    if modal:
        s_rows = np.vstack(_apply_q(blocks[:crit.s], s_rows[:crit.s], s_rows[crit.s:]))
        z2 = np.vstack(_apply_q(blocks[:crit.s], z2[:crit.s], z2[crit.s:]))
    total += np.vdot(s_rows, z2)
    value = float(total.real)
    leak = abs(total.imag)
    if not value > 0:
        raise TraceError(f"nonpositive trace {value:.6e}")
    if leak > IMAG_FAIL * abs(value):
        raise TraceError(f"imaginary leak {leak:.3e} exceeds {IMAG_FAIL:g} * trace")
    return TraceResult(value, leak)


def trace_from_updates(phase: PhaseBasis, updates, crit: EnergyCriterion) -> TraceResult:
    """Full O(n^2) pipeline for one set of viscosities."""
    t0 = time.perf_counter()
    dec = accumulate_S(phase.xi, updates)
    t1 = time.perf_counter()
    Y = lyap_Y_generators(dec.lam, dec.S, crit, phase)
    res = trace_fast(dec.S, Y, crit, phase)
    t2 = time.perf_counter()
    res.timings = {"eigen": t1 - t0, "trace": t2 - t1}
    res.diagnostics = {
        "iterations": int(sum(int(e.iterations.sum()) for e in dec.stages)),
        "max_secular_residual": float(max((e.residual.max() for e in dec.stages), default=0.0)),
        "warnings": [w for e in dec.stages for w in e.warnings],
    }
    return res


def lyap_oracle(A, crit: EnergyCriterion) -> float:
    """Brute-force ``trace(X)`` from ``(I kron A + conj(A) kron I) vec(X) = -vec(G G^T)``."""
    A = np.asarray(A, dtype=complex)
    N = A.shape[0]
    if N > 64:
        raise ValueError("Kronecker oracle is limited to order 64")
    G = crit.selector()
    rhs = -(G @ G.T).reshape(-1, order="F")
    K = np.kron(np.eye(N), A) + np.kron(np.conj(A), np.eye(N))
    try:
        x = scipy.linalg.solve(K, rhs)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning) as exc:
        raise UnstableSystemError("singular Kronecker system") from exc
    X = x.reshape(N, N, order="F")
    return float(np.trace(X).real)


def lyap_eig_oracle(A, crit: EnergyCriterion) -> float:
    """Second oracle through a dense eigendecomposition of ``A``."""
    A = np.asarray(A, dtype=complex)
    lam, V = np.linalg.eig(A)
    G = crit.selector()
    R = np.linalg.solve(V, G)
    Yt = -(R @ R.conj().T) / (lam[:, None] + np.conj(lam)[None, :])
    return float(np.trace(V @ Yt @ V.conj().T).real)


def dense_state_matrix(phase: PhaseBasis, omega, gamma, C, crit: EnergyCriterion):
    """Dense matrix whose Lyapunov trace the fast pipeline reproduces.

    ``C`` is the external damping in modal coordinates. In the phase basis
    this is ``Q^{-1} A Q``; in the modal basis it is ``A`` itself.
    """
    from .modal import dense_phase_matrix
    A = dense_phase_matrix(omega, gamma, C)
    if crit.basis == "modal":
        return A
    Q = phase.dense_q()
    return np.linalg.solve(Q, A @ Q)


def oracle_trace(system, internal, specs, rho, crit: EnergyCriterion) -> float:
    """``lyap_oracle`` for a small system, built from dense matrices only."""
    from .modal import internal_damping_gamma, modal_decompose, phase_decompose
    from .model import assemble_external_damping
    modal = modal_decompose(system)
    gamma = internal_damping_gamma(internal, modal.omega)
    phase = phase_decompose(modal.omega, gamma)
    C = modal.phi.T @ assemble_external_damping(specs, rho, system.n) @ modal.phi
    return lyap_oracle(dense_state_matrix(phase, modal.omega, gamma, C, crit), crit)

"""Modal preprocessing: undamped modes, modal internal damping and 2x2 phase blocks.

This is the one O(n^3) step; everything downstream works with the diagonal
phase matrix ``xi`` and the block-sparse transformation ``Q``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .model import DampingKind, InternalDampingModel, MassSpringSystem, ModelError, damper_geometry

MODAL_TOL = 1e-12


class NearCriticalWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class ModalBasis:
    """``phi.T @ M @ phi = I`` and ``phi.T @ K @ phi = diag(omega**2)``, omega ascending."""

    phi: np.ndarray
    omega: np.ndarray

    @property
    def n(self) -> int:
        return self.omega.shape[0]


@dataclass(frozen=True)
class PhaseBasis:
    """Diagonal ``xi`` (length 2n) and the 2x2 blocks of ``Q``.

    Block ``i`` couples phase indices ``i`` and ``n + i``; ``q[i]`` holds
    ``[[Q_ii, Q_i,n+i], [Q_n+i,i, Q_n+i,n+i]]``.
    """

    xi: np.ndarray
    q: np.ndarray

    @property
    def n(self) -> int:
        return self.q.shape[0]

    def dense_q(self) -> np.ndarray:
        n = self.n
        Q = np.zeros((2 * n, 2 * n), dtype=complex)
        idx = np.arange(n)
        Q[idx, idx] = self.q[:, 0, 0]
        Q[idx, idx + n] = self.q[:, 0, 1]
        Q[idx + n, idx] = self.q[:, 1, 0]
        Q[idx + n, idx + n] = self.q[:, 1, 1]
        return Q

    def apply_rows(self, top: np.ndarray, bottom: np.ndarray):
        """Rows ``i`` and ``n+i`` of ``Q @ B`` given rows ``i`` and ``n+i`` of ``B``.

        ``top``/``bottom`` have the block index along axis 0.
        """
        q = self.q
        shape = (-1,) + (1,) * (top.ndim - 1)
        new_top = q[:, 0, 0].reshape(shape) * top + q[:, 0, 1].reshape(shape) * bottom
        new_bot = q[:, 1, 0].reshape(shape) * top + q[:, 1, 1].reshape(shape) * bottom
        return new_top, new_bot


def modal_decompose(system: MassSpringSystem) -> ModalBasis:
    """Generalized eigendecomposition of ``(K, M)`` for diagonal ``M``."""
    m_isqrt = 1.0 / np.sqrt(system.masses)
    Kt = system.stiffness * m_isqrt[:, None] * m_isqrt[None, :]
    w2, U = scipy.linalg.eigh(Kt)
    if w2[0] <= 0:
        raise ModelError("stiffness is not positive definite")
    phi = m_isqrt[:, None] * U
    return ModalBasis(phi=phi, omega=np.sqrt(w2))


def internal_damping_gamma(model: InternalDampingModel, omega) -> np.ndarray:
    omega = np.asarray(omega, dtype=float)
    if model.kind is DampingKind.CRITICAL:
        return model.alpha * omega
    return model.alpha + model.beta * omega**2


def phase_decompose(omega, gamma) -> PhaseBasis:
    """Solve the ``n`` independent 2x2 hyperbolic problems.

    For mode ``i`` the pair ``xi[i], xi[n+i]`` are the roots of
    ``t**2 + gamma_i t + omega_i**2``; the root with larger imaginary part
    goes to slot ``i``. The eigenvector for root ``t`` is ``c (omega_i, t)``
    with ``c**2 (omega_i**2 - t**2) = 1``.
    """
    omega = np.asarray(omega, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if np.any(omega <= 0):
        raise ModelError("eigenfrequencies must be positive")
    n = omega.size
    disc = gamma**2 - 4 * omega**2
    critical = np.flatnonzero(disc == 0)
    if critical.size:
        raise ModelError(f"mode {critical[0] + 1} is critically damped (defective 2x2 block)")
    near = np.flatnonzero(np.abs(disc) <= 1e-8 * 4 * omega**2)
    if near.size:
        warnings.warn(f"mode {near[0] + 1} is within 1e-8 of critical damping",
                      NearCriticalWarning, stacklevel=2)
    root = np.sqrt(disc.astype(complex))
    t1 = 0.5 * (-gamma + root)
    t2 = 0.5 * (-gamma - root)
    # overdamped: real roots, keep the larger one in slot i
    swap = (t1.imag < t2.imag) | ((t1.imag == t2.imag) & (t1.real < t2.real))
    t1, t2 = np.where(swap, t2, t1), np.where(swap, t1, t2)
    c1 = _hyperbolic_scale(omega, t1)
    c2 = _hyperbolic_scale(omega, t2)
    q = np.empty((n, 2, 2), dtype=complex)
    q[:, 0, 0] = c1 * omega
    q[:, 1, 0] = c1 * t1
    q[:, 0, 1] = c2 * omega
    q[:, 1, 1] = c2 * t2
    return PhaseBasis(xi=np.concatenate([t1, t2]), q=q)


def _hyperbolic_scale(omega, t):
    c = 1.0 / np.sqrt(omega**2 - t**2)
    flip = (c.real < 0) | ((c.real == 0) & (c.imag < 0))
    return np.where(flip, -c, c)


def modal_damper_vector(modal: ModalBasis, spec) -> np.ndarray:
    """``phi.T @ g`` for one damper."""
    n = modal.n
    spec.validate(n)
    row = modal.phi[spec.index - 1].copy()
    if spec.partner is not None:
        row -= modal.phi[spec.partner - 1]
    return row


def rank_update_vectors(phase: PhaseBasis, modal: ModalBasis, specs) -> list[np.ndarray]:
    """``y = Q[n:, :].T @ phi.T @ g`` for each damper, using the block structure of Q."""
    out = []
    for spec in specs:
        b = modal_damper_vector(modal, spec)
        out.append(np.concatenate([phase.q[:, 1, 0] * b, phase.q[:, 1, 1] * b]))
    return out


def dense_phase_matrix(omega, gamma, C=None) -> np.ndarray:
    """Dense state matrix ``[[0, W], [-W, -(Gamma + C)]]`` in modal coordinates."""
    omega = np.asarray(omega, dtype=float)
    n = omega.size
    damp = np.diag(np.asarray(gamma, dtype=float))
    if C is not None:
        damp = damp + C
    A = np.zeros((2 * n, 2 * n))
    A[:n, n:] = np.diag(omega)
    A[n:, :n] = -np.diag(omega)
    A[n:, n:] = -damp
    return A


def check_modal(system: MassSpringSystem, modal: ModalBasis) -> tuple[float, float]:
    """Residuals ``||phi^T M phi - I||_F`` and relative ``||phi^T K phi - W^2||_F``."""
    phi = modal.phi
    n = modal.n
    rm = np.linalg.norm((phi.T * system.masses) @ phi - np.eye(n))
    W2 = np.diag(modal.omega**2)
    rk = np.linalg.norm(phi.T @ system.stiffness @ phi - W2) / np.linalg.norm(W2)
    return rm, rk


def check_phase(phase: PhaseBasis) -> float:
    """Blockwise ``max |Q^T J Q - I|``."""
    q = phase.q
    J = np.diag([1.0, -1.0])
    res = np.einsum("nji,jk,nkl->nil", q, J, q) - np.eye(2)
    return float(np.max(np.abs(res))) if q.size else 0.0


# keep damper_geometry importable from here for callers building dense oracles
__all__ = [
    "ModalBasis", "PhaseBasis", "modal_decompose", "internal_damping_gamma",
    "phase_decompose", "rank_update_vectors", "modal_damper_vector",
    "dense_phase_matrix", "check_modal", "check_phase", "damper_geometry",
]

"""Cauchy-like matrices held by their generators.

A Cauchy-like matrix ``C`` satisfies ``diag(x) C - C diag(y) = P @ Q.T``
(plain transpose, also for complex data), so ``C[i, j] = P[i] . Q[j] / (x[i] - y[j])``.

Column nodes may be given relative to row nodes, ``y[j] = x[anchor[j]] + offset[j]``;
node differences are then formed as ``(x[i] - x[anchor[j]]) - offset[j]``, which
is exact to working precision even when ``y[j]`` hugs ``x[anchor[j]]``.
Positions with ``x[i] == y[j]`` exactly are not determined by the generators;
they need ``P[i] . Q[j] == 0`` and their values are stored in ``fixed``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numba import njit
from scipy.spatial import cKDTree

# rows per block when forming elements on the fly; generator products in a
# block go through BLAS, the node differences through a compiled loop
_BLOCK_ROWS = 128


class CauchyError(ValueError):
    pass


@njit(cache=True, inline="always")
def _inv(d):
    dr = d.real
    di = d.imag
    s = dr * dr + di * di
    if s < 1e-290 or s > 1e290:
        return 1.0 / d
    s = 1.0 / s
    return complex(dr * s, -di * s)


@njit(cache=True)
def _fill_block(x, base, off, fv, P, QT, i0, i1):
    """Rows ``i0:i1`` of the matrix as a dense block."""
    C = np.dot(P[i0:i1], QT)
    for ii in range(i1 - i0):
        xi = x[i0 + ii]
        for j in range(base.size):
            d = (xi - base[j]) - off[j]
            if d == 0:
                C[ii, j] = fv[j]
            else:
                C[ii, j] = C[ii, j] * _inv(d)
    return C


@njit(cache=True)
def _matmat_kernel(x, base, off, fv, P, QT, V):
    n = x.size
    out = np.empty((n, V.shape[1]), dtype=np.complex128)
    for i0 in range(0, n, _BLOCK_ROWS):
        i1 = min(n, i0 + _BLOCK_ROWS)
        out[i0:i1] = np.dot(_fill_block(x, base, off, fv, P, QT, i0, i1), V)
    return out


@njit(cache=True)
def _rmatmat_kernel(x, base, off, fv, P, QT, V):
    n = x.size
    out = np.zeros((base.size, V.shape[1]), dtype=np.complex128)
    for i0 in range(0, n, _BLOCK_ROWS):
        i1 = min(n, i0 + _BLOCK_ROWS)
        C = _fill_block(x, base, off, fv, P, QT, i0, i1)
        out += np.dot(np.ascontiguousarray(C.T), np.ascontiguousarray(V[i0:i1]))
    return out


@njit(cache=True)
def _inner_kernel(xa, ba, oa, fa, Pa, QTa, xb, bb, ob, fb, Pb, QTb):
    n = xa.size
    total = 0j
    for i0 in range(0, n, _BLOCK_ROWS):
        i1 = min(n, i0 + _BLOCK_ROWS)
        A = _fill_block(xa, ba, oa, fa, Pa, QTa, i0, i1)
        B = _fill_block(xb, bb, ob, fb, Pb, QTb, i0, i1)
        total += np.vdot(A.ravel(), B.ravel())
    return total


@njit(cache=True)
def _inner_blocks_kernel(xa, ba, oa, fa, Pa, QTa, xb, bb, ob, fb, Pb, QTb, q):
    n = q.shape[0]
    total = 0j
    for i0 in range(0, n, _BLOCK_ROWS):
        i1 = min(n, i0 + _BLOCK_ROWS)
        a0 = _fill_block(xa, ba, oa, fa, Pa, QTa, i0, i1)
        a1 = _fill_block(xa, ba, oa, fa, Pa, QTa, n + i0, n + i1)
        b0 = _fill_block(xb, bb, ob, fb, Pb, QTb, i0, i1)
        b1 = _fill_block(xb, bb, ob, fb, Pb, QTb, n + i0, n + i1)
        for ii in range(i1 - i0):
            q00, q01 = q[i0 + ii, 0, 0], q[i0 + ii, 0, 1]
            q10, q11 = q[i0 + ii, 1, 0], q[i0 + ii, 1, 1]
            for j in range(ba.size):
                s0, s1 = a0[ii, j], a1[ii, j]
                z0, z1 = b0[ii, j], b1[ii, j]
                total += (np.conj(q00 * s0 + q01 * s1) * (q00 * z0 + q01 * z1)
                          + np.conj(q10 * s0 + q11 * s1) * (q10 * z0 + q11 * z1))
    return total


@dataclass(frozen=True)
class CauchyLike:
    xnodes: np.ndarray
    ynodes: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    fixed: dict = field(default_factory=dict)
    anchor: np.ndarray | None = None
    offset: np.ndarray | None = None

    def __post_init__(self):
        x = np.asarray(self.xnodes, dtype=complex).reshape(-1)
        y = np.asarray(self.ynodes, dtype=complex).reshape(-1)
        P = np.asarray(self.P, dtype=complex)
        Q = np.asarray(self.Q, dtype=complex)
        if P.ndim == 1:
            P = P[:, None]
        if Q.ndim == 1:
            Q = Q[:, None]
        if P.shape[0] != x.size or Q.shape[0] != y.size or P.shape[1] != Q.shape[1]:
            raise CauchyError(f"generator shapes {P.shape}, {Q.shape} do not match "
                              f"nodes ({x.size}, {y.size})")
        if P.shape[1] == 0 and self.fixed:
            # keep one zero generator column so the kernels see the fixed entries
            P = np.zeros((x.size, 1), dtype=complex)
            Q = np.zeros((y.size, 1), dtype=complex)
        object.__setattr__(self, "xnodes", x)
        object.__setattr__(self, "ynodes", y)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "Q", Q)
        if (self.anchor is None) != (self.offset is None):
            raise CauchyError("anchor and offset must be given together")
        if self.anchor is not None:
            anchor = np.asarray(self.anchor, dtype=np.int64).reshape(-1)
            offset = np.asarray(self.offset, dtype=complex).reshape(-1)
            if anchor.size != y.size or offset.size != y.size:
                raise CauchyError("anchor/offset length differs from ynodes")
            object.__setattr__(self, "anchor", anchor)
            object.__setattr__(self, "offset", offset)
        self._check_nodes()

    def _check_nodes(self):
        """Reject ``|x_i - y_j| <= eta * scale`` except anchored or fixed pairs."""
        x, y = self.xnodes, self.ynodes
        if x.size == 0 or y.size == 0:
            return
        scale = max(np.max(np.abs(x)), np.max(np.abs(y)), np.finfo(float).tiny)
        eta = max(x.size, y.size) * np.finfo(float).eps * scale
        tree = cKDTree(np.column_stack([x.real, x.imag]))
        ypts = np.column_stack([y.real, y.imag])
        dist, _ = tree.query(ypts, k=1)
        for j in np.flatnonzero(dist <= eta):
            self._check_pairs(j, tree.query_ball_point(ypts[j], eta), eta)

    def _check_pairs(self, j, rows, eta):
        for i in rows:
            i = int(i)
            if self.anchor is not None and self.anchor[j] == i:
                if self.offset[j] != 0 or (i, int(j)) in self.fixed:
                    continue
            elif (i, int(j)) in self.fixed and self.xnodes[i] == self.ynodes[j]:
                continue
            raise CauchyError(f"node collision x[{i}] ~ y[{j}] "
                              f"(|x - y| = {abs(self.xnodes[i] - self.ynodes[j]):.3e})")

    @cached_property
    def _kernel_args(self):
        """Column bases and offsets with ``x[i] - y[j] == (x[i] - base[j]) - off[j]``."""
        if self.anchor is None:
            base, off = self.ynodes, np.zeros(self.ynodes.size, dtype=complex)
        else:
            base, off = self.xnodes[self.anchor], self.offset
        # distinct row nodes: at most one exact collision per column
        fv = np.full(self.ynodes.size, np.nan + 0j)
        for (_, j), v in self.fixed.items():
            fv[j] = v
        return (self.xnodes, base, off, fv, np.ascontiguousarray(self.P),
                np.ascontiguousarray(self.Q.T))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.xnodes.size, self.ynodes.size)

    @property
    def rank(self) -> int:
        return self.P.shape[1]

    def _diff(self, idx) -> np.ndarray:
        x = self.xnodes[idx]
        if self.anchor is None:
            return x[:, None] - self.ynodes[None, :]
        return (x[:, None] - self.xnodes[self.anchor][None, :]) - self.offset[None, :]

    def rows(self, idx) -> np.ndarray:
        """Dense rows ``C[idx, :]`` (``idx`` a slice or index array)."""
        num = self.P[idx] @ self.Q.T
        diff = self._diff(idx)
        if not self.fixed:
            return num / diff
        hit = diff == 0
        if not hit.any():
            return num / diff
        diff[hit] = np.inf
        out = num / diff
        rows = np.arange(self.shape[0])[idx]
        for a, b in np.argwhere(hit):
            out[a, b] = self.fixed[(int(rows[a]), int(b))]
        return out

    def column(self, j: int) -> np.ndarray:
        """Dense column ``C[:, j]`` in O(n r)."""
        num = self.P @ self.Q[j]
        if self.anchor is None:
            diff = self.xnodes - self.ynodes[j]
        else:
            diff = (self.xnodes - self.xnodes[self.anchor[j]]) - self.offset[j]
        hit = np.flatnonzero(diff == 0)
        if hit.size == 0:
            return num / diff
        diff[hit] = np.inf
        out = num / diff
        for i in hit:
            out[i] = self.fixed[(int(i), int(j))]
        return out

    def element(self, i: int, j: int) -> complex:
        return complex(self.rows(np.array([i]))[0, j])

    def dense(self) -> np.ndarray:
        if self.rank == 0:
            return np.zeros(self.shape, dtype=complex)
        return self.rows(slice(None))

    def matmat(self, V) -> np.ndarray:
        """``C @ V`` without storing ``C``."""
        V = np.asarray(V, dtype=complex)
        vec = V.ndim == 1
        V = np.ascontiguousarray(V.reshape(self.shape[1], -1))
        if self.rank == 0:
            out = np.zeros((self.shape[0], V.shape[1]), dtype=complex)
        else:
            out = _matmat_kernel(*self._kernel_args, V)
        return out[:, 0] if vec else out

    def rmatmat(self, V) -> np.ndarray:
        """``C.T @ V`` (plain transpose) without storing ``C``."""
        V = np.asarray(V, dtype=complex)
        vec = V.ndim == 1
        V = np.ascontiguousarray(V.reshape(self.shape[0], -1))
        if self.rank == 0:
            out = np.zeros((self.shape[1], V.shape[1]), dtype=complex)
        else:
            out = _rmatmat_kernel(*self._kernel_args, V)
        return out[:, 0] if vec else out

    matvec = matmat


def element(c: CauchyLike, i: int, j: int) -> complex:
    return c.element(i, j)


def matvec(c: CauchyLike, v) -> np.ndarray:
    return c.matmat(v)


def conj_inner(a: CauchyLike, b: CauchyLike, blocks=None) -> complex:
    """``sum(conj(A) * B)`` for equally shaped Cauchy-like matrices.

    With ``blocks`` (an ``(n, 2, 2)`` array, ``2n`` rows) both matrices are
    first multiplied from the left by the block matrix coupling rows ``i``
    and ``n + i``.
    """
    if a.shape != b.shape:
        raise CauchyError(f"shapes differ: {a.shape} vs {b.shape}")
    if a.rank == 0 or b.rank == 0:
        return 0j
    if blocks is None:
        return complex(_inner_kernel(*a._kernel_args, *b._kernel_args))
    blocks = np.asarray(blocks, dtype=complex)
    if 2 * blocks.shape[0] != a.shape[0]:
        raise CauchyError("block count does not match the row count")
    return complex(_inner_blocks_kernel(*a._kernel_args, *b._kernel_args, blocks))


def linked_product(a: CauchyLike, b: CauchyLike) -> CauchyLike:
    """``a @ b`` for linked factors (``a.ynodes == b.xnodes``).

    Generators: ``P = [P_a, a @ P_b]``, ``Q = [b.T @ Q_a, Q_b]``. When both
    factors carry anchored column nodes the anchors compose, so the product
    keeps accurate node differences.
    """
    if a.shape[1] != b.shape[0] or not np.array_equal(a.ynodes, b.xnodes):
        raise CauchyError("factors are not linked (a.ynodes != b.xnodes)")
    P = np.hstack([a.P, a.matmat(b.P)])
    Q = np.hstack([b.rmatmat(a.Q), b.Q])
    anchor = offset = None
    if a.anchor is not None and b.anchor is not None:
        anchor = a.anchor[b.anchor]
        offset = a.offset[b.anchor] + b.offset
    fixed = {}
    if a.fixed or b.fixed:
        if anchor is not None:
            # distinct row nodes: only (anchor[j], j) with a zero offset can collide
            cols = np.flatnonzero(offset == 0)
            hits = zip(anchor[cols], cols)
        else:
            hits = np.argwhere(a.xnodes[:, None] == b.ynodes[None, :])
        for i, j in hits:
            fixed[(int(i), int(j))] = complex(a.rows(np.array([i]))[0] @ b.column(j))
    return CauchyLike(a.xnodes, b.ynodes, P, Q, fixed, anchor, offset)


def displacement_residual(c: CauchyLike, dense) -> float:
    """``||X C - C Y - P Q^T||_F`` for a dense candidate ``C``."""
    dense = np.asarray(dense)
    if c.anchor is None:
        R = c.xnodes[:, None] * dense - dense * c.ynodes[None, :]
    else:
        R = c._diff(slice(None)) * dense
    return float(np.linalg.norm(R - c.P @ c.Q.T))


def generator_scale(c: CauchyLike) -> float:
    return float(np.linalg.norm(c.P) * np.linalg.norm(c.Q))

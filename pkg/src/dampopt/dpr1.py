"""Eigensolver for complex symmetric diagonal-plus-rank-one matrices.

``A = diag(xi) + rho * y @ y.T`` with complex ``xi``, ``y`` and real ``rho``.
Eigenvalues are the zeros of the secular function
``f(t) = 1 + rho * sum(y**2 / (xi - t))``; the eigenvector for ``t`` is
proportional to ``(xi - t)**-1 * y``, so the eigenvector matrix is
Cauchy-like with nodes ``(xi, lambda)`` and generators ``(y, psi)``.

Eigenvalues are found one at a time: a few Rayleigh quotient steps, then
the modified iteration ``x = (xi - mu)**-1 y, mu = x.T A x / x.T x`` until
the update stalls, after which the root is deflated out of the secular
function and the next one is sought. Only ``y**2`` enters the deflated
problem.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.spatial import cKDTree

from .cauchy import CauchyLike

log = logging.getLogger(__name__)

EPS = np.finfo(float).eps
N_RQI = 3
MRQI_TOL = 1e-13
MAX_ITER = 100
DENSE_FALLBACK_MAX = 64
# relative weight mismatch still treated as a conjugate pair; the polish
# removes what the pairing gets wrong
PAIR_TOL = 1e-8
_MIRROR_TOL = 1e-7
_F_FLOOR = 1e-10
_MAX_HALVINGS = 12


class EigenError(ArithmeticError):
    """Eigensolver failure (pole hit, singular shift, non-convergence, breakdown)."""


class ClusterWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class CSymDPR1:
    xi: np.ndarray
    y: np.ndarray
    rho: float

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=complex).reshape(-1)
        y = np.asarray(self.y, dtype=complex).reshape(-1)
        if xi.shape != y.shape:
            raise ValueError(f"xi and y lengths differ: {xi.size} vs {y.size}")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "rho", float(self.rho))

    @property
    def n(self) -> int:
        return self.xi.size

    @property
    def eta(self) -> float:
        return self.n * EPS

    def dense(self) -> np.ndarray:
        return np.diag(self.xi) + self.rho * np.outer(self.y, self.y)

    def frobenius_norm(self) -> float:
        """``||A||_F`` in O(N)."""
        w = self.y**2
        off = self.rho**2 * (np.sum(np.abs(self.y) ** 2) ** 2)
        diag_fix = np.sum(np.abs(self.xi + self.rho * w) ** 2) - self.rho**2 * np.sum(np.abs(w) ** 2)
        return float(np.sqrt(max(off + diag_fix, 0.0)))


def secular_eval(m: CSymDPR1, lam: complex) -> complex:
    d = m.xi - lam
    if np.min(np.abs(d)) <= m.eta * max(1.0, np.max(np.abs(m.xi))):
        raise EigenError(f"secular function evaluated at a pole ({lam})")
    return complex(1.0 + m.rho * np.sum(m.y**2 / d))


def resolvent_apply(m: CSymDPR1, mu: complex, v) -> np.ndarray:
    """``(A - mu I)^{-1} v`` by the Sherman-Morrison formula, O(N)."""
    v = np.asarray(v, dtype=complex)
    d = m.xi - mu
    if np.min(np.abs(d)) == 0:
        raise EigenError(f"shift {mu} coincides with a diagonal entry")
    u = v / d
    z = m.y / d
    denom = 1.0 + m.rho * np.sum(m.y * z)
    if abs(denom) <= m.eta * (1.0 + abs(m.rho) * np.sum(np.abs(z * m.y))):
        raise EigenError(f"shift {mu} is an eigenvalue (singular resolvent)")
    gamma = -m.rho / denom
    return u + gamma * z * np.sum(m.y * u)


# --------------------------------------------------------------------------
# compiled kernels; ``w`` is always y**2 and an iterate is held as
# ``xs[a] + tau`` so that differences to its nearest pole keep full relative
# accuracy. The sequential solver works on compacted copies of the surviving
# poles, kept in their original order.

@njit(cache=True, inline="always")
def _inv(d):
    dr = d.real
    di = d.imag
    s = dr * dr + di * di
    if s == 0.0:
        return complex(np.inf, 0.0)
    if s < 1e-290 or s > 1e290:
        return 1.0 / d
    s = 1.0 / s
    return complex(dr * s, -di * s)


@njit(cache=True)
def _sums(xs, ws, nact, a, tau):
    """``g = sum w/d``, ``h = sum w/d**2`` and the pole nearest the iterate."""
    g = 0j
    h = 0j
    xa = xs[a]
    best = a
    bd = tau.real * tau.real + tau.imag * tau.imag
    for k in range(nact):
        d = (xs[k] - xa) - tau
        r = _inv(d)
        q = ws[k] * r
        g += q
        h += q * r
        ad = d.real * d.real + d.imag * d.imag
        if ad < bd:
            bd = ad
            best = k
    return g, h, best


@njit(cache=True)
def _nearest(xs, nact, a, tau):
    best = a
    bd = abs(tau)
    for k in range(nact):
        if k != a:
            dd = abs((xs[k] - xs[a]) - tau)
            if dd < bd:
                bd = dd
                best = k
    if best != a:
        tau = tau - (xs[best] - xs[a])
    return best, tau


@njit(cache=True)
def _iterate(xs, ws, nact, rho, a, tau, start, n_rqi, tol, maxit):
    """Returns (a, tau, iterations, status); status 0 ok, 1 no convergence, 2 pole/singular."""
    its = 0
    if n_rqi > 0:
        y = np.empty(nact, dtype=np.complex128)
        x = np.zeros(nact, dtype=np.complex128)
        for k in range(nact):
            y[k] = np.sqrt(ws[k])
        x[start] = 1.0
        for _ in range(n_rqi):
            a, tau = _nearest(xs, nact, a, tau)
            if tau == 0:
                break
            t = 0j
            s = 0j
            for k in range(nact):
                r = _inv((xs[k] - xs[a]) - tau)
                t += ws[k] * r
                s += y[k] * x[k] * r
            den = 1.0 + rho * t
            if den == 0:
                return a, tau, its, 0
            gam = -rho / den * s
            nrm = 0.0
            for k in range(nact):
                x[k] = (x[k] + gam * y[k]) * _inv((xs[k] - xs[a]) - tau)
                nrm += x[k].real ** 2 + x[k].imag ** 2
            nrm = np.sqrt(nrm)
            if not np.isfinite(nrm) or nrm == 0:
                break
            num = 0j
            cy = 0j
            yx = 0j
            for k in range(nact):
                x[k] /= nrm
                num += (x[k].real ** 2 + x[k].imag ** 2) * (xs[k] - xs[a])
                cy += np.conj(x[k]) * y[k]
                yx += y[k] * x[k]
            tau = num + rho * cy * yx
            its += 1
    # the plain iteration can fall into a 2-cycle; halve a step whenever it
    # raises |f| by more than rounding
    f_prev = np.inf
    a_prev = a
    tau_prev = tau
    step_prev = 0j
    halvings = 0
    for _ in range(maxit):
        if tau == 0:
            return a, tau, its, 2
        g, h, best = _sums(xs, ws, nact, a, tau)
        if best != a:
            tau = tau - (xs[best] - xs[a])
            a = best
            if tau == 0:
                return a, tau, its, 2
            g, h, best = _sums(xs, ws, nact, a, tau)
        its += 1
        f = abs(1.0 + rho * g)
        if f > f_prev and f > _F_FLOOR and halvings < _MAX_HALVINGS:
            halvings += 1
            step_prev *= 0.5
            a = a_prev
            tau = tau_prev + step_prev
            continue
        halvings = 0
        if h == 0:
            return a, tau, its, 2
        step = g * (1.0 + rho * g) / h
        if not (np.isfinite(step.real) and np.isfinite(step.imag)):
            return a, tau, its, 2
        f_prev = f
        a_prev = a
        tau_prev = tau
        step_prev = step
        tau = tau + step
        if abs(step) <= tol * max(1.0, abs(xs[a] + tau)):
            return a, tau, its, 0
    return a, tau, its, 1


@njit(cache=True)
def _deflate_at(xs, ws, orig, nact, a, tau):
    """Drop pole ``a`` with root ``xs[a] + tau``; returns (nact, status)."""
    xa = xs[a]
    for q in range(a, nact - 1):
        xs[q] = xs[q + 1]
        ws[q] = ws[q + 1]
        orig[q] = orig[q + 1]
    nact -= 1
    for q in range(nact):
        den = (xs[q] - xa) - tau
        if den == 0:
            return nact, 2
        ws[q] *= (xs[q] - xa) * _inv(den)
    return nact, 0


@njit(cache=True)
def _solve_sequential(xi, w, rho, active, partner, n_rqi, tol, maxit, dup_tol, spread,
                      pair_tol):
    """Find all roots for the poles marked in ``active`` with deflation.

    ``partner[i]`` is the index of the pole conjugate to ``xi[i]`` (with
    conjugate weight), or -1. A non-real root anchored at a paired pole
    seeds a short iteration for its conjugate at the partner.

    Returns (anchor, tau, iters, count, status, w_deflated, active); on
    failure ``count`` roots are valid and ``w_deflated``/``active``
    describe the remnant.
    """
    N = xi.size
    n_act = 0
    for i in range(N):
        if active[i]:
            n_act += 1
    xs = np.empty(n_act, dtype=np.complex128)
    ws = np.empty(n_act, dtype=np.complex128)
    orig = np.empty(n_act, dtype=np.int64)
    k = 0
    for i in range(N):
        if active[i]:
            xs[k] = xi[i]
            ws[k] = w[i]
            orig[k] = i
            k += 1
    anchor = np.zeros(n_act, dtype=np.int64)
    taus = np.zeros(n_act, dtype=np.complex128)
    lams = np.zeros(n_act, dtype=np.complex128)
    iters = np.zeros(n_act, dtype=np.int64)
    perturb = np.array([0j, 1 + 0j, -1 + 0j, 1j, -1j, 0.5 + 0.5j, -0.5 - 0.5j])
    count = 0
    nact = n_act
    status = 0
    fails = 0
    while nact > 0:
        ok = False
        a = 0
        tau = 0j
        its = 0
        for attempt in range(perturb.size):
            tau0 = rho * ws[0] + perturb[attempt] * 1e-3 * spread
            a, tau, its, st = _iterate(xs, ws, nact, rho, 0, tau0, 0, n_rqi, tol, maxit)
            if st != 0:
                continue
            mu = xs[a] + tau
            dup = False
            for q in range(count):
                if abs(lams[q] - mu) <= dup_tol:
                    dup = True
                    break
            if dup and attempt < perturb.size - 1:
                continue
            ok = True
            break
        if not ok:
            # no root from this pole; retry it after all the others
            fails += 1
            if fails >= nact:
                status = 1
                break
            x0, w0, o0 = xs[0], ws[0], orig[0]
            for q in range(nact - 1):
                xs[q] = xs[q + 1]
                ws[q] = ws[q + 1]
                orig[q] = orig[q + 1]
            xs[nact - 1], ws[nact - 1], orig[nact - 1] = x0, w0, o0
            continue
        fails = 0
        # the anchor is the surviving pole nearest to the root; remove it
        lam = xs[a] + tau
        pa = partner[orig[a]]
        anchor[count] = orig[a]
        taus[count] = tau
        lams[count] = lam
        iters[count] = its
        count += 1
        nact, status = _deflate_at(xs, ws, orig, nact, a, tau)
        if status:
            break
        # a non-real root at a paired pole has its mirror image at the
        # partner; confirm it on the deflated function before removing it
        if pa < 0 or abs(lam.imag) <= pair_tol * max(1.0, abs(lam)):
            continue
        b = -1
        for q in range(nact):
            if orig[q] == pa:
                b = q
                break
        if b < 0:
            continue
        b, tb, its2, st = _iterate(xs, ws, nact, rho, b, np.conj(lam) - xs[b], b, 0, tol, 8)
        if st != 0 or abs(xs[b] + tb - np.conj(lam)) > _MIRROR_TOL * max(1.0, abs(lam)):
            continue
        anchor[count] = orig[b]
        taus[count] = tb
        lams[count] = xs[b] + tb
        iters[count] = its2
        count += 1
        nact, status = _deflate_at(xs, ws, orig, nact, b, tb)
        if status:
            break
    ww = w.copy()
    act = np.zeros(N, dtype=np.bool_)
    for q in range(nact):
        act[orig[q]] = True
        ww[orig[q]] = ws[q]
    return anchor, taus, iters, count, status, ww, act


@njit(cache=True)
def _polish_and_scale(xi, y, rho, anchor, tau, active):
    """Refine every root on the full secular function and scale its eigenvector.

    Each root is re-anchored at its nearest pole ``a`` and refined by Newton
    steps on ``tau * f = tau (1 + rho R(tau)) - rho w_a`` (``R`` the sum
    without pole ``a``), which stays well conditioned when the root hugs
    the pole. Then ``psi = 1/sqrt(x.T x)`` with the sign making the largest
    entry of ``v`` have nonnegative real part. Returns (anchor, tau, psi, |f|).
    """
    N = xi.size
    M = tau.size
    idx = np.flatnonzero(active)
    nact = idx.size
    xs = xi[idx]
    ys = y[idx]
    ws = ys * ys
    pos = np.full(N, -1, dtype=np.int64)
    for k in range(nact):
        pos[idx[k]] = k
    psi = np.zeros(M, dtype=np.complex128)
    res = np.zeros(M)
    for j in range(M):
        a, t = _nearest(xs, nact, pos[anchor[j]], tau[j])
        xa = xs[a]
        best_t = t
        best_phi = np.inf
        best_R = 0j
        best_dR = 0j
        best_vm = 0j
        best_big = -1.0
        for sweep in range(6):
            R = 0j
            dR = 0j
            big = -1.0
            vm = 0j
            for k in range(nact):
                if k != a:
                    r = _inv((xs[k] - xa) - t)
                    q = ws[k] * r
                    R += q
                    dR += q * r
                    v = ys[k] * r
                    av = v.real * v.real + v.imag * v.imag
                    if av > big:
                        big = av
                        vm = v
            phi = t * (1.0 + rho * R) - rho * ws[a]
            aphi = abs(phi)
            if not aphi < best_phi:
                break
            best_t, best_phi, best_R, best_dR, best_vm, best_big = t, aphi, R, dR, vm, big
            dphi = 1.0 + rho * R + rho * t * dR
            if dphi == 0 or aphi == 0:
                break
            step = phi / dphi
            if abs(step) <= 4 * EPS * abs(t):
                break
            t = t - step
        R, dR, vm, big = best_R, best_dR, best_vm, best_big
        if best_t == 0:
            best_f = np.inf
            best_h = np.inf + 0j
            vm = ys[a]
        else:
            best_f = abs(1.0 + rho * R - rho * ws[a] / best_t)
            best_h = dR + ws[a] / (best_t * best_t)
            v = -ys[a] / best_t
            if v.real * v.real + v.imag * v.imag > big:
                vm = v
        anchor[j] = idx[a]
        tau[j] = best_t
        res[j] = best_f
        if best_h == 0:
            c = np.inf + 0j
        else:
            c = 1.0 / np.sqrt(best_h)
        vm = vm * c
        if vm.real < 0 or (vm.real == 0 and vm.imag < 0):
            c = -c
        psi[j] = c
    return anchor, tau, psi, res

# --------------------------------------------------------------------------

def eig_one(m: CSymDPR1, start: complex | None = None, start_index: int | None = None,
            n_rqi: int = N_RQI, tol: float = MRQI_TOL, maxit: int = MAX_ITER):
    """One eigenvalue by RQI then modified RQI.

    The RQI phase starts from the canonical vector ``e_j`` (``start_index``,
    default the pole nearest ``start``); the default shift is
    ``xi_j + rho y_j**2``. Returns ``(lam, psi, iterations)``.
    """
    if start_index is None:
        start_index = int(np.argmin(np.abs(m.xi - (0 if start is None else start))))
    j = start_index
    tau0 = m.rho * m.y[j] ** 2 if start is None else complex(start) - m.xi[j]
    active = np.ones(m.n, dtype=np.bool_)
    w = m.y**2
    a, tau, its, status = _iterate(m.xi, w, m.n, m.rho, j, complex(tau0), j,
                                   n_rqi, tol, maxit)
    if status == 1:
        raise EigenError(f"no convergence in {maxit} iterations from {m.xi[j] + tau0}")
    if status == 2:
        raise EigenError(f"iteration hit a pole from start {m.xi[j] + tau0}")
    anchor, tau, psi, _ = _polish_and_scale(m.xi, m.y, m.rho, np.array([a]),
                                            np.array([tau]), active)
    return complex(m.xi[anchor[0]] + tau[0]), complex(psi[0]), int(its)


def deflate(m: CSymDPR1, deflated) -> CSymDPR1:
    """Remove (pole, root) pairs: ``y_i**2 *= prod (xi_i - pole) / (xi_i - root)``."""
    keep = np.ones(m.n, dtype=bool)
    w = m.y**2
    scale = max(1.0, float(np.max(np.abs(m.xi)))) if m.n else 1.0
    for pole, root in deflated:
        cand = np.flatnonzero(keep & (m.xi == pole))
        if cand.size == 0:
            raise EigenError(f"{pole} is not a surviving diagonal entry")
        keep[cand[0]] = False
        den = m.xi - root
        if np.any(np.abs(den[keep]) <= m.eta * scale):
            raise EigenError(f"deflation breakdown: root {root} coincides with a pole")
        w = np.where(keep, w * (m.xi - pole) / np.where(keep, den, 1.0), w)
    return CSymDPR1(m.xi[keep], np.sqrt(w[keep]), m.rho)


def _split_reducible(m: CSymDPR1):
    """Indices whose pole is an eigenvalue outright: tiny ``y_i`` or repeated ``xi``."""
    ynorm = np.linalg.norm(m.y)
    tiny = np.abs(m.y) <= m.eta * ynorm
    scale = float(np.max(np.abs(m.xi))) if m.n else 0.0
    order = np.lexsort((m.xi.imag, m.xi.real))
    xs = m.xi[order]
    close = np.flatnonzero(np.abs(np.diff(xs)) <= m.eta * scale)
    repeated = [(int(order[a]), int(order[a + 1])) for a in close]
    return tiny, repeated


def conjugate_partners(xi, w, active) -> np.ndarray:
    """Index of the active pole mirroring each active pole, -1 where there is none.

    Poles ``i != p`` pair when ``xi[p] == conj(xi[i])`` to rounding and the
    weights agree with ``w[p] == conj(w[i])`` to ``PAIR_TOL``.
    """
    partner = np.full(xi.size, -1, dtype=np.int64)
    idx = np.flatnonzero(active & (xi.imag != 0))
    if idx.size < 2:
        return partner
    pts = np.column_stack([xi.real[idx], xi.imag[idx]])
    dist, near = cKDTree(pts).query(pts * [1.0, -1.0], k=1)
    scale = float(np.max(np.abs(xi)))
    p = idx[near]
    ok = ((dist <= 64 * EPS * scale)
          & (np.abs(w[p] - np.conj(w[idx])) <= PAIR_TOL * np.abs(w[idx]))
          & (idx[near[near]] == idx))
    partner[idx[ok]] = p[ok]
    return partner


@dataclass
class Dpr1Eigen:
    """Eigenvalues ``lam`` and eigenvector scalings ``psi`` (``V.T @ V = I``).

    ``lam[j] == xi[anchor[j]] + tau[j]`` with ``anchor[j]`` the nearest pole.
    ``split[j]`` is True for a pole split off before iteration; its
    eigenvalue is ``xi[anchor[j]]`` (``tau = 0``), its eigenvector the
    canonical vector and ``psi[j] = 0``. ``y`` is the rank-one vector with
    split entries zeroed.
    """

    lam: np.ndarray
    psi: np.ndarray
    anchor: np.ndarray
    tau: np.ndarray
    iterations: np.ndarray
    residual: np.ndarray
    split: np.ndarray
    y: np.ndarray
    warnings: list = field(default_factory=list)


def eig_all(m: CSymDPR1, n_rqi: int = N_RQI, tol: float = MRQI_TOL,
            maxit: int = MAX_ITER) -> Dpr1Eigen:
    """All eigenvalues and eigenvector scalings, sorted by (real, imag)."""
    N = m.n
    notes = []
    y = m.y.copy()
    if N == 0 or m.rho == 0 or not np.any(y):
        order = np.lexsort((m.xi.imag, m.xi.real))
        return Dpr1Eigen(m.xi[order].copy(), np.zeros(N, complex), order.astype(np.int64),
                         np.zeros(N, complex), np.zeros(N, np.int64), np.zeros(N),
                         np.ones(N, bool), np.zeros(N, complex))

    tiny, repeated = _split_reducible(m)
    if repeated:
        raise EigenError(f"repeated diagonal entries {repeated[0]} are not supported")
    y[tiny] = 0
    active = ~tiny
    w = y**2
    spread = float(np.ptp(m.xi.real) + np.ptp(m.xi.imag)) or 1.0
    normA = CSymDPR1(m.xi, y, m.rho).frobenius_norm()
    partner = conjugate_partners(m.xi, w, active)
    anchor, tau, iters, count, status, ww, act = _solve_sequential(
        m.xi, w, m.rho, active, partner, n_rqi, tol, maxit, 1e-9 * normA, spread,
        PAIR_TOL)
    anchor, tau, iters = anchor[:count], tau[:count], iters[:count]
    if status != 0:
        remnant = np.flatnonzero(act)
        if remnant.size > DENSE_FALLBACK_MAX:
            raise EigenError(f"eigensolver stalled with {remnant.size} roots left "
                             f"(status {status}, {count} found)")
        notes.append(f"dense fallback for {remnant.size} remaining roots")
        log.warning(notes[-1])
        yr = np.sqrt(ww[remnant])
        extra = np.linalg.eigvals(np.diag(m.xi[remnant]) + m.rho * np.outer(yr, yr))
        near = np.argmin(np.abs(m.xi[None, :] - extra[:, None]), axis=1)
        anchor = np.concatenate([anchor, near])
        tau = np.concatenate([tau, extra - m.xi[near]])
        iters = np.concatenate([iters, np.zeros(remnant.size, np.int64)])

    anchor, tau, psi, res = _polish_and_scale(m.xi, y, m.rho, anchor.astype(np.int64),
                                              tau.astype(complex), active)
    split_idx = np.flatnonzero(tiny)
    k = split_idx.size
    anchor = np.concatenate([anchor, split_idx])
    tau = np.concatenate([tau, np.zeros(k, complex)])
    psi = np.concatenate([psi, np.zeros(k, complex)])
    res = np.concatenate([res, np.zeros(k)])
    iters = np.concatenate([iters, np.zeros(k, np.int64)])
    split = np.concatenate([np.zeros(N - k, bool), np.ones(k, bool)])
    lam = m.xi[anchor] + tau

    order = np.lexsort((lam.imag, lam.real))
    e = Dpr1Eigen(lam[order], psi[order], anchor[order], tau[order], iters[order],
                  res[order], split[order], y, notes)
    lam_sorted = np.sort_complex(e.lam)
    gaps = np.abs(np.diff(lam_sorted))
    if gaps.size and np.min(gaps) < 1e-10 * normA:
        msg = f"near-defective eigenvalue pair (gap {np.min(gaps):.2e})"
        notes.append(msg)
        warnings.warn(msg, ClusterWarning, stacklevel=2)
    return e


def eigvector_generators(m: CSymDPR1, e: Dpr1Eigen) -> CauchyLike:
    """Eigenvector matrix ``V = C(xi, lam, y, psi)``; ``V[i, j] = y_i psi_j / (xi_i - lam_j)``."""
    fixed = {(int(e.anchor[j]), int(j)): 1.0 for j in np.flatnonzero(e.split)}
    return CauchyLike(m.xi, e.lam, e.y, e.psi, fixed, anchor=e.anchor, offset=e.tau)


def secular_residuals(m: CSymDPR1, e: Dpr1Eigen) -> np.ndarray:
    """``|f(lam_j)|`` for every eigenvalue, using anchored differences (O(N^2), blocked)."""
    w = e.y**2
    out = np.zeros(e.lam.size)
    live = np.flatnonzero(~e.split)
    step = max(1, (1 << 20) // max(m.n, 1))
    for s in range(0, live.size, step):
        j = live[s:s + step]
        d = (m.xi[None, :] - m.xi[e.anchor[j]][:, None]) - e.tau[j][:, None]
        out[j] = np.abs(1.0 + m.rho * np.sum(w[None, :] / d, axis=1))
    return out

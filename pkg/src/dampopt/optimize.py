"""Viscosity optimization for fixed damper positions, and sweeps over positions."""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.optimize

from .dpr1 import EigenError
from .modal import (ModalBasis, PhaseBasis, internal_damping_gamma, modal_decompose,
                    phase_decompose, rank_update_vectors)
from .model import DamperSpec, InternalDampingModel, MassSpringSystem, ModelError
from .trace import EnergyCriterion, TraceError, trace_from_updates

log = logging.getLogger(__name__)

DEFAULT_BOUNDS = (1e-2, 1e4)
# initial simplex edge in log10 units
SIMPLEX_STEP = 0.5
# central-difference step in log10 units for the stationarity report
FD_STEP = 1e-3


class OptimizationError(ValueError):
    pass


@dataclass
class SystemBasis:
    """The viscosity-independent part of a problem: computed once, then shared."""

    system: MassSpringSystem
    internal: InternalDampingModel
    modal: ModalBasis
    phase: PhaseBasis
    seconds: float

    @classmethod
    def build(cls, system: MassSpringSystem, internal: InternalDampingModel) -> "SystemBasis":
        t0 = time.perf_counter()
        modal = modal_decompose(system)
        gamma = internal_damping_gamma(internal, modal.omega)
        phase = phase_decompose(modal.omega, gamma)
        return cls(system, internal, modal, phase, time.perf_counter() - t0)


@dataclass
class OptimizationProblem:
    system: MassSpringSystem
    internal: InternalDampingModel
    dampers: tuple
    s: int
    bounds: np.ndarray | None = None
    initial: np.ndarray | None = None
    max_evals: int = 500
    tol: float = 1e-6
    multistarts: int = 3
    basis: str = "phase"
    threads: int = 1
    cache: SystemBasis | None = field(default=None, repr=False)

    def __post_init__(self):
        self.dampers = tuple(self.dampers)
        for spec in self.dampers:
            if not isinstance(spec, DamperSpec):
                raise OptimizationError(f"not a damper spec: {spec!r}")
            spec.validate(self.system.n)
        k = len(self.dampers)
        if self.bounds is None:
            self.bounds = np.tile(DEFAULT_BOUNDS, (k, 1))
        b = np.asarray(self.bounds, dtype=float)
        if b.shape == (2,):
            b = np.tile(b, (k, 1))
        if b.shape != (k, 2):
            raise OptimizationError(f"bounds must be {k} (lo, hi) pairs")
        if np.any(b[:, 0] <= 0) or np.any(b[:, 0] >= b[:, 1]):
            raise OptimizationError("bounds need 0 < lo < hi")
        self.bounds = b
        if self.initial is None:
            self.initial = np.sqrt(b[:, 0] * b[:, 1])
        x0 = np.asarray(self.initial, dtype=float).reshape(-1)
        if x0.size != k or np.any(x0 < b[:, 0]) or np.any(x0 > b[:, 1]):
            raise OptimizationError("initial viscosities must lie within the bounds")
        self.initial = x0
        if self.max_evals < 1 or not self.tol > 0 or self.multistarts < 1:
            raise OptimizationError("max_evals, tol and multistarts must be positive")
        self.criterion = EnergyCriterion(self.s, self.system.n, self.basis)

    @property
    def k(self) -> int:
        return len(self.dampers)

    def prepared(self) -> SystemBasis:
        if self.cache is None:
            self.cache = SystemBasis.build(self.system, self.internal)
        return self.cache

    def update_vectors(self) -> list[np.ndarray]:
        if not hasattr(self, "_ys"):
            c = self.prepared()
            self._ys = rank_update_vectors(c.phase, c.modal, self.dampers)
        return self._ys

    def with_dampers(self, dampers) -> "OptimizationProblem":
        """Same system, basis cache and settings with other damper positions."""
        self.prepared()
        return replace(self, dampers=tuple(dampers), initial=None,
                       bounds=np.tile(self.bounds[0], (len(dampers), 1)))

    def starts(self) -> list[np.ndarray]:
        """Deterministic starts: the initial point, then points at fixed
        fractions of the log10 range of the bounds (1/4 and 3/4 first)."""
        lo, hi = np.log10(self.bounds[:, 0]), np.log10(self.bounds[:, 1])
        fracs = [0.25, 0.75] + list(np.linspace(0.1, 0.9, max(0, self.multistarts - 3)))
        extra = [10 ** (lo + f * (hi - lo)) for f in fracs]
        return ([self.initial] + extra)[: self.multistarts]


@dataclass
class OptimizationResult:
    viscosities: np.ndarray
    objective: float
    evaluations: int
    converged: bool
    history: list = field(default_factory=list)
    gradient_norm: float = math.nan
    start: np.ndarray | None = None
    timings: dict = field(default_factory=dict)
    dampers: tuple = ()
    error: str | None = None


class _Evaluator:
    """Counts and logs objective calls; failures map to +inf."""

    def __init__(self, prob: OptimizationProblem):
        self.prob = prob
        self.count = 0
        self.history = []
        self.eigen_seconds = 0.0
        self.trace_seconds = 0.0

    def __call__(self, rho) -> float:
        self.count += 1
        try:
            res = _trace(self.prob, rho)
        except (TraceError, EigenError) as exc:
            log.warning("objective failed at %s: %s", np.asarray(rho).tolist(), exc)
            self.history.append((tuple(float(r) for r in rho), math.inf))
            return math.inf
        self.eigen_seconds += res.timings.get("eigen", 0.0)
        self.trace_seconds += res.timings.get("trace", 0.0)
        self.history.append((tuple(float(r) for r in rho), res.value))
        return res.value


def _trace(prob: OptimizationProblem, rho):
    rho = np.asarray(rho, dtype=float).reshape(-1)
    if rho.size != prob.k:
        raise OptimizationError(f"{prob.k} viscosities expected, got {rho.size}")
    c = prob.prepared()
    return trace_from_updates(c.phase, list(zip(rho, prob.update_vectors())), prob.criterion)


def objective(prob: OptimizationProblem, rho) -> float:
    """``trace(X)`` at viscosities ``rho`` (must lie within the bounds)."""
    rho = np.asarray(rho, dtype=float).reshape(-1)
    if rho.size != prob.k:
        raise OptimizationError(f"{prob.k} viscosities expected, got {rho.size}")
    if np.any(rho < prob.bounds[:, 0]) or np.any(rho > prob.bounds[:, 1]):
        raise OptimizationError(f"viscosities {rho.tolist()} outside the bounds")
    return _trace(prob, rho).value


def _nelder_mead(prob: OptimizationProblem, start) -> OptimizationResult:
    ev = _Evaluator(prob)
    t0 = time.perf_counter()
    lo, hi = np.log10(prob.bounds[:, 0]), np.log10(prob.bounds[:, 1])
    z0 = np.log10(start)
    f0 = ev(start)
    if not math.isfinite(f0):
        return OptimizationResult(np.asarray(start), math.inf, ev.count, False, ev.history,
                                  start=np.asarray(start), error="objective fails at the start")
    # objective scaled by its starting value so the tolerance is relative
    fun = lambda z: ev(10 ** np.clip(z, lo, hi)) / f0  # noqa: E731
    simplex = [z0]
    for i in range(prob.k):
        z = z0.copy()
        z[i] = z[i] + SIMPLEX_STEP if z[i] + SIMPLEX_STEP <= hi[i] else z[i] - SIMPLEX_STEP
        simplex.append(z)
    res = scipy.optimize.minimize(
        fun, z0, method="Nelder-Mead", bounds=list(zip(lo, hi)),
        options={"maxfev": max(prob.max_evals - 1, 1), "fatol": prob.tol, "xatol": np.inf,
                 "initial_simplex": np.array(simplex)})
    best = int(np.argmin([v for _, v in ev.history]))
    rho, value = ev.history[best]
    return OptimizationResult(
        viscosities=np.array(rho), objective=value, evaluations=ev.count,
        converged=bool(res.success), history=ev.history, start=np.asarray(start),
        timings={"optimization": time.perf_counter() - t0, "eigen": ev.eigen_seconds,
                 "trace": ev.trace_seconds},
        dampers=prob.dampers)


def gradient_norm(prob: OptimizationProblem, rho, value: float | None = None) -> float:
    """``||d trace / d log10(rho)|| / trace`` by central differences, clipped to the bounds."""
    rho = np.asarray(rho, dtype=float)
    value = objective(prob, rho) if value is None else value
    g = np.zeros(prob.k)
    for i in range(prob.k):
        up, dn = rho.copy(), rho.copy()
        up[i] = min(rho[i] * 10**FD_STEP, prob.bounds[i, 1])
        dn[i] = max(rho[i] / 10**FD_STEP, prob.bounds[i, 0])
        g[i] = (objective(prob, up) - objective(prob, dn)) / (np.log10(up[i]) - np.log10(dn[i]))
    return float(np.linalg.norm(g) / value)


def optimize_viscosities(prob: OptimizationProblem, stationarity: bool = True,
                         all_starts: bool = False):
    """Bounded Nelder-Mead in log10 coordinates from each deterministic start.

    Returns the best result, or the list of per-start results with
    ``all_starts``.
    """
    if prob.k == 0:
        value = _trace_no_dampers(prob)
        r = OptimizationResult(np.zeros(0), value, 1, True, [((), value)], 0.0,
                               np.zeros(0), dampers=())
        return [r] if all_starts else r
    prob.prepared()
    prob.update_vectors()
    starts = prob.starts()
    workers = max(1, min(prob.threads, len(starts)))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(lambda x: _nelder_mead(prob, x), starts))
    else:
        results = [_nelder_mead(prob, x) for x in starts]
    if stationarity:
        for r in results:
            if math.isfinite(r.objective):
                r.gradient_norm = gradient_norm(prob, r.viscosities, r.objective)
    if all_starts:
        return results
    return min(results, key=lambda r: (r.objective, list(r.start)))


def _trace_no_dampers(prob: OptimizationProblem) -> float:
    c = prob.prepared()
    return trace_from_updates(c.phase, [], prob.criterion).value


def position_sweep(template: OptimizationProblem, candidates, stationarity: bool = False
                   ) -> list[OptimizationResult]:
    """Optimize viscosities for each candidate damper set; sorted by objective.

    The modal and phase decompositions of ``template`` are reused for every
    candidate. A failing candidate is kept with ``error`` set and an
    infinite objective.
    """
    candidates = [tuple(c) for c in candidates]
    if not candidates:
        raise OptimizationError("no candidate damper sets")
    template.prepared()
    out = []
    for specs in candidates:
        try:
            prob = template.with_dampers(specs)
            out.append(optimize_viscosities(prob, stationarity=stationarity))
        except (ModelError, OptimizationError, TraceError, EigenError) as exc:
            out.append(OptimizationResult(np.zeros(len(specs)), math.inf, 0, False,
                                          dampers=specs, error=str(exc)))
    return sorted(out, key=lambda r: r.objective)

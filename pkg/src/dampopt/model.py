"""Mass-spring systems, internal damping models and external damper geometry."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.linalg


class ModelError(ValueError):
    """Invalid system, damping model or damper description."""


@dataclass(frozen=True)
class MassSpringSystem:
    """Diagonal mass matrix plus dense symmetric stiffness of order ``n``."""

    masses: np.ndarray
    stiffness: np.ndarray
    label: str = "custom"

    def __post_init__(self):
        masses = np.asarray(self.masses, dtype=float)
        stiffness = np.asarray(self.stiffness, dtype=float)
        n = masses.shape[0]
        if masses.ndim != 1 or n == 0:
            raise ModelError("masses must be a nonempty 1-D array")
        if stiffness.shape != (n, n):
            raise ModelError(f"stiffness must be {n}x{n}, got {stiffness.shape}")
        bad = np.flatnonzero(masses <= 0)
        if bad.size:
            raise ModelError(f"mass {bad[0] + 1} is not positive ({masses[bad[0]]})")
        if not np.array_equal(stiffness, stiffness.T):
            asym = np.max(np.abs(stiffness - stiffness.T))
            if asym > 8 * np.finfo(float).eps * np.max(np.abs(stiffness)):
                raise ModelError(f"stiffness is not symmetric (max asymmetry {asym:.3e})")
            stiffness = 0.5 * (stiffness + stiffness.T)
        try:
            scipy.linalg.cholesky(stiffness, lower=True)
        except np.linalg.LinAlgError as exc:
            raise ModelError("stiffness is not positive definite") from exc
        masses.setflags(write=False)
        stiffness.setflags(write=False)
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "stiffness", stiffness)

    @property
    def n(self) -> int:
        return self.masses.shape[0]

    @property
    def mass_matrix(self) -> np.ndarray:
        return np.diag(self.masses)


class DampingKind(str, Enum):
    CRITICAL = "critical-proportional"
    RAYLEIGH = "rayleigh"


@dataclass(frozen=True)
class InternalDampingModel:
    """Internal damping that is diagonal in the modal basis.

    ``critical-proportional`` is ``alpha * M^{1/2} sqrt(M^{-1/2} K M^{-1/2}) M^{1/2}``,
    ``rayleigh`` is ``alpha * M + beta * K``.
    """

    kind: DampingKind = DampingKind.CRITICAL
    alpha: float = 0.02
    beta: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", DampingKind(self.kind))
        if self.alpha < 0:
            raise ModelError("alpha must be nonnegative")
        if self.kind is DampingKind.RAYLEIGH:
            if self.beta is None:
                raise ModelError("rayleigh damping requires beta")
            if self.beta < 0:
                raise ModelError("beta must be nonnegative")


class DamperKind(str, Enum):
    GROUNDED = "grounded"
    CONNECTING = "connecting"


@dataclass(frozen=True)
class DamperSpec:
    """One external damper; ``index`` and ``partner`` are 1-based mass indices."""

    kind: DamperKind
    index: int
    partner: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", DamperKind(self.kind))
        if self.kind is DamperKind.CONNECTING:
            if self.partner is None:
                raise ModelError("connecting damper needs a partner index")
            if self.partner == self.index:
                raise ModelError(f"damper connects mass {self.index} to itself")

    @classmethod
    def grounded(cls, index: int) -> "DamperSpec":
        return cls(DamperKind.GROUNDED, index)

    @classmethod
    def connecting(cls, index: int, partner: int) -> "DamperSpec":
        return cls(DamperKind.CONNECTING, index, partner)

    def validate(self, n: int) -> None:
        if not 1 <= self.index <= n:
            raise ModelError(f"damper index {self.index} outside 1..{n}")
        if self.kind is DamperKind.CONNECTING and not 1 <= self.partner <= n:
            raise ModelError(f"damper partner {self.partner} outside 1..{n}")

    def __str__(self) -> str:
        if self.kind is DamperKind.GROUNDED:
            return str(self.index)
        return f"{self.index}-{self.partner}"


def damper_geometry(spec: DamperSpec, n: int) -> np.ndarray:
    """Vector ``g`` with ``D_i = g g^T``."""
    spec.validate(n)
    g = np.zeros(n)
    g[spec.index - 1] = 1.0
    if spec.kind is DamperKind.CONNECTING:
        g[spec.partner - 1] = -1.0
    return g


def assemble_external_damping(specs, viscosities, n: int) -> np.ndarray:
    """Dense ``sum_i rho_i g_i g_i^T``."""
    specs = list(specs)
    viscosities = np.asarray(viscosities, dtype=float).reshape(-1)
    if len(specs) != viscosities.size:
        raise ModelError(f"{len(specs)} dampers but {viscosities.size} viscosities")
    if np.any(viscosities < 0):
        raise ModelError("viscosities must be nonnegative")
    D = np.zeros((n, n))
    for spec, rho in zip(specs, viscosities):
        g = damper_geometry(spec, n)
        D += rho * np.outer(g, g)
    return D


def _chain_block(d: int, k: float) -> np.ndarray:
    return k * (2.0 * np.eye(d) - np.eye(d, k=1) - np.eye(d, k=-1))


def two_row_masses(d: int, profile: str = "large") -> np.ndarray:
    """Mass profile of the two-row oscillator with ``2d + 1`` masses.

    ``large`` is the benchmark profile (valid for ``d`` near 800);
    ``scaled`` evaluates the same profile at indices stretched to ``d = 800``
    so that any even ``d`` gives positive masses.
    """
    if profile == "large":
        i = np.arange(1, 2 * d + 1, dtype=float)
        first = i[:d]
        row1 = np.where(first <= d / 2, 2000 - 4 * first, 3 * first - 800)
        row2 = 500 + i[d:]
    elif profile == "scaled":
        t = np.arange(1, d + 1) * (800.0 / d)
        row1 = np.where(t <= 400, 2000 - 4 * t, 3 * t - 800)
        row2 = 500 + 800 + t
    else:
        raise ModelError(f"unknown mass profile {profile!r}")
    return np.concatenate([row1, row2, [1800.0]])


def two_row_stiffness(d: int, k1: float, k2: float, k3: float) -> np.ndarray:
    n = 2 * d + 1
    K = np.zeros((n, n))
    K[:d, :d] = _chain_block(d, k1)
    K[d:2 * d, d:2 * d] = _chain_block(d, k2)
    K[d - 1, n - 1] = K[n - 1, d - 1] = -k1
    K[2 * d - 1, n - 1] = K[n - 1, 2 * d - 1] = -k2
    K[n - 1, n - 1] = k1 + k2 + k3
    return K


def build_two_row_oscillator(d: int = 800, k1: float = 100.0, k2: float = 150.0,
                             k3: float = 200.0, mass_profile: str = "large"
                             ) -> MassSpringSystem:
    """Two rows of ``d`` masses grounded on one side and joined to a grounded last mass."""
    if d < 2 or d % 2:
        raise ModelError(f"d must be even and >= 2, got {d}")
    masses = two_row_masses(d, mass_profile)
    bad = np.flatnonzero(masses <= 0)
    if bad.size:
        raise ModelError(f"mass profile {mass_profile!r} gives m_{bad[0] + 1} = "
                         f"{masses[bad[0]]:g} <= 0 for d={d}")
    return MassSpringSystem(masses, two_row_stiffness(d, k1, k2, k3),
                            label=f"two_row(d={d})")


def build_homogeneous_oscillator() -> MassSpringSystem:
    """The 2001-mass homogeneous chain."""
    n = 2001
    masses = np.empty(n)
    masses[:1000] = 1000.0
    masses[1000:2000] = 1500.0
    masses[2000] = 2000.0
    diag = np.empty(n)
    diag[:1000] = 200.0
    diag[1000:2000] = 300.0
    diag[2000] = 450.0
    off = np.empty(n - 1)
    off[:1000] = -100.0
    off[1000:] = -150.0
    K = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
    return MassSpringSystem(masses, K, label="homogeneous")


@dataclass(frozen=True)
class DamperLayout:
    """Named damper configurations of the benchmark families."""

    specs: tuple[DamperSpec, ...] = field(default_factory=tuple)

    @classmethod
    def three_dampers(cls, i1: int, i2: int, i3: int, offset: int = 400) -> "DamperLayout":
        return cls((DamperSpec.grounded(i1), DamperSpec.grounded(i2),
                    DamperSpec.connecting(i3, i3 + offset)))


def random_system(rng: np.random.Generator, n: int) -> MassSpringSystem:
    """Random well-conditioned system for oracle comparisons."""
    B = rng.standard_normal((n, n))
    K = B @ B.T + n * np.eye(n)
    return MassSpringSystem(rng.uniform(1.0, 3.0, n), K, label=f"random(n={n})")

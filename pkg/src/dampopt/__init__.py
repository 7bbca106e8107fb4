"""Trace-criterion damping optimization with O(n^2) work per evaluation."""

from importlib.resources import files

from .cauchy import CauchyLike, linked_product
from .dpr1 import CSymDPR1, EigenError, eig_all, eig_one
from .modal import modal_decompose, phase_decompose
from .model import (DamperLayout, DamperSpec, InternalDampingModel, MassSpringSystem,
                    build_homogeneous_oscillator, build_two_row_oscillator)
from .optimize import OptimizationProblem, optimize_viscosities, position_sweep
from .trace import EnergyCriterion, TraceError, trace_from_updates

__version__ = "0.1.0"


def fixture_config(name: str):
    """Path of a shipped config such as ``large.cfg``."""
    return files(__name__) / "configs" / name


__all__ = [
    "CauchyLike", "linked_product", "CSymDPR1", "EigenError", "eig_all", "eig_one",
    "modal_decompose", "phase_decompose", "DamperLayout", "DamperSpec",
    "InternalDampingModel", "MassSpringSystem", "build_homogeneous_oscillator",
    "build_two_row_oscillator", "OptimizationProblem", "optimize_viscosities",
    "position_sweep", "EnergyCriterion", "TraceError", "trace_from_updates",
    "fixture_config",
]

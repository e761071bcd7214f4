"""Exact finite optimal-transport duality and rotation-based counterexamples."""
from .number_tower import PrimeTower, extend_tower, fast_growth_tower
from .grid_dynamics import Grid, StepFunction, phi_level
from .example_builder import IntervalPermutation, SingularLedger, build_zigzag_family, build_refined_rotation, refine
from .ot_duality import CostMatrix, Potentials, TransportPlan, solve, solve_dual, solve_primal

__version__ = "0.1.0"

__all__ = [
    "PrimeTower",
    "extend_tower",
    "fast_growth_tower",
    "Grid",
    "StepFunction",
    "phi_level",
    "IntervalPermutation",
    "SingularLedger",
    "build_refined_rotation",
    "build_zigzag_family",
    "refine",
    "CostMatrix",
    "TransportPlan",
    "Potentials",
    "solve",
    "solve_primal",
    "solve_dual",
]

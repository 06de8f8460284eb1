"""Tabular solvers for semi-infinitely constrained MDPs."""
from .constraint import AuditGrid, ConstraintFamily, InnerSolverConfig, grid_points, inner_max
from .core import (Policy, TabularSICMDP, error_term, exact_value, extract_policy,
                   occupancy_to_policy, policy_to_occupancy, policy_value, sup_violation)
from .errors import (EmptyGoodSet, GradientUnavailable, InfeasibleOptimisticSet,
                     NumericalBreakdown, SICMDPError, SingularSystem)
from .sicpo import (EvalConfig, NPGConfig, SICPOConfig, SoftmaxPolicy, TabularSampler,
                    mc_evaluate, run_fixed_grid_baseline, run_sicpo, sample_npg_direction)
from .sicrl import (EmpiricalModel, SICRLConfig, TransitionDataset, build_extended_lsip,
                    estimate_model, packing_bound, run_sicrl)

__all__ = [
    "AuditGrid", "ConstraintFamily", "InnerSolverConfig", "grid_points", "inner_max",
    "Policy", "TabularSICMDP", "error_term", "exact_value", "extract_policy",
    "occupancy_to_policy", "policy_to_occupancy", "policy_value", "sup_violation",
    "EmptyGoodSet", "GradientUnavailable", "InfeasibleOptimisticSet", "NumericalBreakdown",
    "SICMDPError", "SingularSystem",
    "EvalConfig", "NPGConfig", "SICPOConfig", "SoftmaxPolicy", "TabularSampler",
    "mc_evaluate", "run_fixed_grid_baseline", "run_sicpo", "sample_npg_direction",
    "EmpiricalModel", "SICRLConfig", "TransitionDataset", "build_extended_lsip",
    "estimate_model", "packing_bound", "run_sicrl",
]

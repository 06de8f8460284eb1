"""Benchmark environments, datasets, reference solutions and the CLI."""
from .data import DatasetSpec, GenerativeModel, NuMeasure, load_dataset, sample_dataset, save_dataset
from .reference import ReferenceSolution, solve_gridded_lp, solve_naive_discretization, solve_reference
from .sewage import KERNEL_LIPSCHITZ, SewageFamily, SewageSpec, generate_sewage_env

__all__ = [
    "DatasetSpec", "GenerativeModel", "NuMeasure", "load_dataset", "sample_dataset", "save_dataset",
    "ReferenceSolution", "solve_gridded_lp", "solve_naive_discretization", "solve_reference",
    "KERNEL_LIPSCHITZ", "SewageFamily", "SewageSpec", "generate_sewage_env",
]

"""Sparse multiple kernel learning with certified lower bounds."""

from .core import KSparseRandom, SmklConfig, SmklResult, WarmStart, check_linear_convergence_condition, fit
from .kernels import KernelBank, KernelSpec, build_bank, combine, compute_gram, default_kernel_specs
from .projection import KernelWeights, gssp_project
from .relaxations import RelaxationLevel, certify_gap, extract_warm_start, global_enumerate, solve_relaxation
from .smo import solve_dual

__all__ = [
    "KSparseRandom", "SmklConfig", "SmklResult", "WarmStart", "check_linear_convergence_condition", "fit",
    "KernelBank", "KernelSpec", "build_bank", "combine", "compute_gram", "default_kernel_specs",
    "KernelWeights", "gssp_project",
    "RelaxationLevel", "certify_gap", "extract_warm_start", "global_enumerate", "solve_relaxation",
    "solve_dual",
]

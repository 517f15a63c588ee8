"""Correct trained GP maps for known measurement-location errors without retraining."""

from .bounds import (
    RemainderBudget,
    estimate_gradient_norm,
    min_order,
    remainder_bound,
    stacked_delta_bound,
)
from .correction import (
    CorrectedPosterior,
    PerturbationSet,
    correct_cov,
    correct_mean,
    project_psd,
    run_algorithm_1,
)
from .derivatives import (
    KernelGradSlices,
    build_kernel_grad_slices,
    build_structural_tensors,
    cov_hessian,
    cov_jacobian,
    mean_hessian,
    mean_jacobian,
)
from .errors import (
    BoundUnsatisfiableError,
    BudgetError,
    CacheError,
    ContractMismatchError,
    GpCorrectError,
    InputError,
    ModelError,
)
from .gp import TestGrid, TrainedModel, TrainingSet, predict_at, train
from .kernel import Hyperparams, se_kernel, se_kernel_grad, se_kernel_hess
from .operators import CorrectionOperators, load_operators, precompute, save_operators
from .oracle import FdConfig, fd_cov_hessian, fd_cov_jacobian, fd_mean_hessian, fd_mean_jacobian

__version__ = "0.1.0"

__all__ = [
    "BoundUnsatisfiableError",
    "BudgetError",
    "CacheError",
    "ContractMismatchError",
    "CorrectedPosterior",
    "CorrectionOperators",
    "FdConfig",
    "GpCorrectError",
    "Hyperparams",
    "InputError",
    "KernelGradSlices",
    "ModelError",
    "PerturbationSet",
    "RemainderBudget",
    "TestGrid",
    "TrainedModel",
    "TrainingSet",
    "build_kernel_grad_slices",
    "build_structural_tensors",
    "correct_cov",
    "correct_mean",
    "cov_hessian",
    "cov_jacobian",
    "estimate_gradient_norm",
    "fd_cov_hessian",
    "fd_cov_jacobian",
    "fd_mean_hessian",
    "fd_mean_jacobian",
    "load_operators",
    "mean_hessian",
    "mean_jacobian",
    "min_order",
    "precompute",
    "predict_at",
    "project_psd",
    "remainder_bound",
    "run_algorithm_1",
    "save_operators",
    "se_kernel",
    "se_kernel_grad",
    "se_kernel_hess",
    "stacked_delta_bound",
    "train",
]
